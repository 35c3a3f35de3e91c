import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinlab import SpinSystem, build_cube, ising, potts
from spinlab.errors import NotReversibleError, NumericalError
from spinlab.kernels import exact_matrix
from spinlab.spectral import (
    dirichlet_form, eigenvalues, is_psd, matrix_chain, mixing_lower_bound, product_chain, product_chain_gap,
    relaxation_time, reversiblization, spectral_gap, tv_mixing_time, variance, verify_variational_gap,
)


def random_chain(seed, size, lazy=0.0):
    rng = np.random.default_rng(seed)
    W = rng.random((size, size)) ** 2
    W = W + W.T
    pi = W.sum(axis=1)
    P = W / pi[:, None]
    P = lazy * np.eye(size) + (1 - lazy) * P
    return matrix_chain(P, pi / pi.sum())


def test_two_state_chain_by_hand():
    a, b = 0.3, 0.1
    P = np.array([[1 - a, a], [b, 1 - b]])
    chain = matrix_chain(P, np.array([b, a]) / (a + b))
    rep = spectral_gap(chain)
    assert rep.gap == pytest.approx(a + b)
    assert rep.lambda2 == pytest.approx(1 - a - b)
    assert relaxation_time(chain) == pytest.approx(1 / (a + b))


def test_gap_uses_absolute_value():
    P = np.array([[0.05, 0.95], [0.95, 0.05]])
    rep = spectral_gap(matrix_chain(P, np.array([0.5, 0.5])))
    assert rep.gap == pytest.approx(0.1)
    assert not rep.psd


@given(st.integers(0, 10_000), st.integers(2, 12))
@settings(max_examples=40, deadline=None)
def test_eigenvalues_match_numpy(seed, size):
    chain = random_chain(seed, size)
    ours = eigenvalues(chain)
    ref = np.sort(np.linalg.eigvals(chain.dense()).real)
    assert np.allclose(np.sort(ours), ref, atol=1e-10)


def test_power_iteration_agrees_with_dense():
    system = SpinSystem(potts(3, 0.5), build_cube(2, [2, 3]))
    for spec in ({"kind": "glauber"}, {"kind": "even_odd"}, {"kind": "sw"}):
        chain = exact_matrix(system, spec)
        assert spectral_gap(chain, "power").gap == pytest.approx(spectral_gap(chain, "dense").gap, abs=1e-9)


def test_non_reversible_chain_is_rejected_and_reversiblized():
    system = SpinSystem(ising(0.6), build_cube(2, [2, 2]))
    scan = exact_matrix(system, {"kind": "scan", "order": "lex"})
    with pytest.raises(NotReversibleError):
        spectral_gap(scan)
    pp = reversiblization(scan)
    assert pp.detailed_balance_residual() < 1e-14 and is_psd(pp)
    g = spectral_gap(pp).gap
    assert relaxation_time(scan) == pytest.approx(1 / (1 - math.sqrt(1 - g)))


def test_dirichlet_form_and_variational_characterisation():
    chain = exact_matrix(SpinSystem(ising(0.4), build_cube(2, [2, 3])), {"kind": "even_odd"})
    rng = np.random.default_rng(5)
    f = rng.standard_normal(chain.size)
    P, pi = chain.dense(), chain.pi
    pairwise = 0.5 * np.sum(pi[:, None] * P * (f[:, None] - f[None, :]) ** 2)
    assert dirichlet_form(chain, f) == pytest.approx(pairwise, rel=1e-12)
    assert variance(pi, f) == pytest.approx(np.sum(pi * f ** 2) - np.sum(pi * f) ** 2)
    assert verify_variational_gap(chain, rng=rng)


def test_product_chain_gap():
    a, b = random_chain(1, 4, lazy=0.5), random_chain(2, 5, lazy=0.5)
    g = product_chain_gap([a, b])
    assert g == pytest.approx(min(spectral_gap(a).gap, spectral_gap(b).gap), abs=1e-12)
    assert product_chain([a, b]).size == 20


def test_mixing_time_respects_lower_bound():
    chain = random_chain(7, 6, lazy=0.5)
    gap = spectral_gap(chain).gap
    assert tv_mixing_time(chain, 0.25) >= mixing_lower_bound(gap, 0.25) - 1e-12
    with pytest.raises(NumericalError):
        tv_mixing_time(matrix_chain(np.eye(2), np.array([0.5, 0.5])), max_steps=10)

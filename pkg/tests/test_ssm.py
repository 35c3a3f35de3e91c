import math

import numpy as np
import pytest

from spinlab import BoundaryCondition, SpinSystem, build_cube, hardcore, ising
from spinlab.measures import enumerate_configs
from spinlab.models import hamiltonian
from spinlab.ssm import (
    SSMSample, boundary_distance, is_nonincreasing, max_profile, ssm_discrepancy, ssm_fit, ssm_scan,
)


def brute_marginal(model, cube, bc, v):
    p = np.zeros(model.q)
    for c in enumerate_configs(cube.n, model.q):
        H = hamiltonian(model, cube, bc, c)
        if H < math.inf:
            p[c[v]] += math.exp(-H)
    return p / p.sum()


def test_discrepancy_by_enumeration():
    cube = build_cube(2, [2, 3])
    model = ising(0.6)
    psi = BoundaryCondition.constant(cube, 1)
    u = (-1, 0)
    psi_u = psi.with_site(u, 0)
    for v in range(cube.n):
        smp = ssm_discrepancy(cube, model, [v], u, psi, psi_u)
        expect = 0.5 * np.abs(brute_marginal(model, cube, psi, v) - brute_marginal(model, cube, psi_u, v)).sum()
        assert smp.tv == pytest.approx(expect, abs=1e-14)
        assert smp.dist == boundary_distance(cube, u, [v])


def test_pairs_must_differ_at_one_site():
    cube = build_cube(1, [3])
    psi = BoundaryCondition.constant(cube, 0)
    with pytest.raises(ValueError):
        ssm_discrepancy(cube, ising(0.1), [0], (-1,), psi, BoundaryCondition.constant(cube, 1))


def test_zero_coupling_gives_zero_discrepancy():
    samples = ssm_scan(build_cube(2, [3, 3]), ising(0.0), rng=np.random.default_rng(0))
    assert samples and all(s.tv == 0.0 for s in samples)
    fit = ssm_fit(samples)
    assert fit.status == "decay unmeasurably fast" and fit.a_hat == math.inf


def test_subset_targets_and_hard_constraints():
    samples = ssm_scan(build_cube(2, [2, 2]), hardcore(1.0), ("plus", "minus"), targets="subsets")
    assert len({s.B for s in samples}) == 15
    assert all(0.0 <= s.tv <= 1.0 for s in samples)
    with pytest.raises(ValueError):
        ssm_scan(build_cube(2, [4, 3]), ising(0.1), targets="subsets")


def test_profile_and_fit_recover_synthetic_rate():
    samples = [SSMSample((3, 3), (0,), (0, -1), 0.8 * math.exp(-0.7 * d), d) for d in range(1, 6)]
    fit = ssm_fit(samples, a=0.6, b=1.0)
    assert fit.a_hat == pytest.approx(0.7) and fit.b_hat == pytest.approx(0.8) and fit.passed
    assert fit.rms == pytest.approx(0.0, abs=1e-12)
    assert is_nonincreasing(max_profile(samples))
    assert not is_nonincreasing({1: 0.1, 2: 0.2})
    assert ssm_fit(samples[:2]).status == "undetermined"

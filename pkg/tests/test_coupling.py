import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinlab import SpinSystem, build_cube, hardcore, ising, potts
from spinlab.coupling import (
    coupled_run, coupling_time, disagreement_probability, dominates, empirical_quantile, monotone_coupled_sweep,
    pair_contraction, path_coupling_contraction, path_coupling_exact, wilson_interval,
)
from spinlab.errors import UnsupportedModelError
from spinlab.kernels import exact_matrix
from spinlab.measures import extremal_configs
from spinlab.streams import substream

EO = {"kind": "scan", "order": "EO"}


def test_empirical_quantile():
    assert empirical_quantile(np.array([1, 2, 3, 4]), 0.75) == 3
    assert empirical_quantile(np.array([5, 1, 1, 1]), 0.75) == 1
    assert empirical_quantile(np.array([1, 2, math.inf, math.inf]), 0.75) == math.inf


def test_independent_scan_couples_in_one_sweep():
    for side in (4, 8, 16):
        est = coupling_time(SpinSystem(ising(0.0), build_cube(2, [side, side])), EO, trials=50, seed=1)
        assert est.estimate == 1 and np.all(est.times == 1)


def test_glauber_at_zero_coupling_is_coupon_collector():
    n = 4
    est = coupling_time(SpinSystem(ising(0.0), build_cube(1, [n])), {"kind": "glauber"}, trials=4000, seed=2)
    mean = n * sum(1 / k for k in range(1, n + 1))
    var = n * n * sum(1 / k ** 2 for k in range(1, n + 1)) - mean
    assert abs(est.times.mean() - mean) < 5 * math.sqrt(var / 4000)


@pytest.mark.parametrize("model", [ising(0.7), hardcore(1.3)], ids=["ising", "hardcore"])
def test_each_copy_follows_the_chain(model):
    """Marginally each copy must be the uncoupled chain; disagreement bounds TV."""
    system = SpinSystem(model, build_cube(2, [2, 2]))
    top, bottom = extremal_configs(system)
    t, trials = 2, 6000
    P = np.linalg.matrix_power(exact_matrix(system, EO).dense(), t)
    idx = system.state_space.index(np.stack([top, bottom]))
    counts = np.zeros((2, len(P)))
    apart = 0
    for i in range(trials):
        run = coupled_run(system, EO, top, bottom, substream(3, i), t, stop_at_coalescence=False)
        counts[0, system.state_space.index(run.X[None])[0]] += 1
        counts[1, system.state_space.index(run.Y[None])[0]] += 1
        apart += not np.array_equal(run.X, run.Y)
    for r in range(2):
        row = P[idx[r]]
        assert 0.5 * np.abs(counts[r] / trials - row).sum() < 0.04
    tv = 0.5 * np.abs(P[idx[0]] - P[idx[1]]).sum()
    lo, hi = wilson_interval(apart, trials, 0.999)
    assert hi >= tv


@st.composite
def ordered_pairs(draw, n):
    a = np.array(draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
    b = np.array(draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)))
    return np.maximum(a, b), np.minimum(a, b)


@given(ordered_pairs(9), st.integers(0, 2 ** 32))
@settings(max_examples=50, deadline=None)
def test_monotone_sweep_preserves_order(pair, seed):
    X, Y = pair
    system = SpinSystem(ising(0.6, fields=[0.0, 0.3]), build_cube(2, [3, 3]))
    X2, Y2 = monotone_coupled_sweep(system, X, Y, "EO", np.random.default_rng(seed))
    assert dominates(system, X2, Y2)


def test_hardcore_order_is_alternating():
    system = SpinSystem(hardcore(0.9), build_cube(2, [3, 3]))
    top, bottom = extremal_configs(system)
    rng = np.random.default_rng(0)
    for _ in range(20):
        top, bottom = monotone_coupled_sweep(system, top, bottom, "EO", rng)
        assert dominates(system, top, bottom)


def test_timeouts_are_reported():
    system = SpinSystem(ising(1.5), build_cube(2, [6, 6]))
    est = coupling_time(system, EO, trials=20, seed=0, max_steps=1)
    assert est.timed_out and est.timeouts == 20 and math.isinf(est.estimate)


def test_results_independent_of_workers():
    system = SpinSystem(ising(0.4), build_cube(2, [6, 6]))
    a = coupling_time(system, EO, trials=64, seed=9, workers=1)
    b = coupling_time(system, EO, trials=64, seed=9, workers=4)
    assert np.array_equal(a.times, b.times) and (a.ci_low, a.ci_high) == (b.ci_low, b.ci_high)
    g1 = coupling_time(system, {"kind": "tiled_heatbath", "L": 1}, trials=16, seed=3, workers=1)
    g2 = coupling_time(system, {"kind": "tiled_heatbath", "L": 1}, trials=16, seed=3, workers=3)
    assert np.array_equal(g1.times, g2.times)
    d1 = disagreement_probability(system, EO, 2, 64, seed=4, workers=1)
    d2 = disagreement_probability(system, EO, 2, 64, seed=4, workers=4)
    assert np.array_equal(d1.per_vertex, d2.per_vertex)


def test_disagreement_intervals_contain_estimate():
    system = SpinSystem(ising(0.5), build_cube(2, [4, 4]))
    est = disagreement_probability(system, EO, 1, 200, seed=5)
    assert np.all(est.lower <= est.per_vertex) and np.all(est.per_vertex <= est.upper)
    assert 0 <= est.argmax < system.n


def test_cluster_coupling_coalesces():
    system = SpinSystem(potts(3, 0.3), build_cube(2, [4, 4]))
    est = coupling_time(system, {"kind": "sw"}, trials=50, seed=1)
    assert math.isfinite(est.estimate)


def test_exact_contraction_at_zero_coupling():
    res = path_coupling_exact(SpinSystem(ising(0.0), build_cube(1, [6])), 3)
    assert res.worst == pytest.approx(0.5, abs=1e-12) and res.mean == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("sides,L,beta", [([9], 3, 0.5), ([5, 5], 1, 0.4)])
def test_monte_carlo_contraction_matches_exact(sides, L, beta):
    system = SpinSystem(ising(beta), build_cube(len(sides), sides))
    v = system.n // 2
    top, _ = extremal_configs(system)
    exact = pair_contraction(system, L, top, v)
    est = path_coupling_contraction(system, L, 20000, seed=6, vertex=v, background="plus")
    half = (est.ci_high - est.ci_low) / 2
    assert abs(est.mean - exact) < 1.6 * half  # 99% interval widened to about 4 standard errors


def test_contraction_needs_two_spin_monotone():
    with pytest.raises(UnsupportedModelError):
        path_coupling_contraction(SpinSystem(potts(3, 0.1), build_cube(1, [5])), 1, 10)

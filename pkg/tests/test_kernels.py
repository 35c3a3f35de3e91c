"""Samplers against exact matrix rows, and exact matrices against brute force."""

import json
import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from spinlab import BoundaryCondition, SpinSystem, build_cube, coloring, hardcore, ising, potts
from spinlab.errors import ConfigError, UnsupportedModelError
from spinlab.kernels import (
    KINDS, exact_matrix, heatbath_matrix, region_plan, resample_region, spec_from_dict, spec_from_json, step,
)
from spinlab.kernels.samplers import edge_probability, resolve_order

# --- kernel specs ------------------------------------------------------------------------------


def test_spec_round_trip_and_strictness():
    spec = spec_from_dict({"kind": "lazy", "base": {"kind": "scan", "order": "EOE"}, "hold": 0.25})
    assert spec_from_json(spec.to_json()) == spec
    assert hash(spec_from_json(spec.to_json())) == hash(spec)
    with pytest.raises(ConfigError, match="bogus"):
        spec_from_dict({"kind": "glauber", "bogus": 1})
    with pytest.raises(ConfigError, match="L"):
        spec_from_dict({"kind": "tiled_heatbath"})
    with pytest.raises(ConfigError):
        spec_from_dict({"kind": "tiled_heatbath", "L": 2})
    with pytest.raises(ConfigError):
        spec_from_dict({"kind": "lazy", "base": {"kind": "glauber"}, "hold": 1.0})
    with pytest.raises(ConfigError):
        spec_from_dict({"kind": "nope"})


@given(st.sampled_from(sorted(KINDS)), st.sampled_from([1, 3, 5]))
@settings(max_examples=30, deadline=None)
def test_spec_json_is_canonical(kind, L):
    params = {"glauber": {}, "even_odd": {}, "sw": {}, "isolated_sw": {},
              "heatbath_block": {"block": [0, 2]}, "block_dynamics": {"blocks": [[0], [1, 2]]},
              "tiled_heatbath": {"L": L}, "tiled_generic": {"L": L, "inner": "even_odd"},
              "tiled_isolated_sw": {"L": L}, "scan": {"order": [2, 0, 1]},
              "composition": {"kernels": [{"kind": "sw"}]}, "lazy": {"base": {"kind": "sw"}, "hold": 0.5},
              "reversiblization": {"base": {"kind": "glauber"}}}[kind]
    spec = spec_from_dict({"kind": kind, **params})
    assert json.loads(spec.to_json()) == spec.to_dict()
    assert spec_from_json(spec.to_json()).to_json() == spec.to_json()


def test_scan_orders():
    system = SpinSystem(ising(0.1), build_cube(2, [2, 2]))
    assert resolve_order(system, "EO").tolist() == [0, 3, 1, 2]
    assert resolve_order(system, "EOE").tolist() == [0, 3, 1, 2, 0, 3]
    with pytest.raises(ValueError):
        resolve_order(system, [0, 1, 2])


# --- samplers agree with exact rows ---------------------------------------------------------


def row_test(system, spec, start, draws, seed):
    chain = exact_matrix(system, spec)
    i = int(system.state_space.index(np.asarray(start)[None, :])[0])
    row = chain.dense()[i]
    rng = np.random.default_rng(seed)
    counts = np.zeros(len(row))
    for _ in range(draws):
        out = step(system, spec, start, rng)
        counts[system.state_space.index(out[None, :])[0]] += 1
    support = row > 1e-12
    assert counts[~support].sum() == 0, "sampler reached a state of zero probability"
    expected = row[support] * draws
    if support.sum() == 1:
        return 1.0
    # merge sparse categories so the chi-square approximation holds
    order = np.argsort(expected)
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for k in order:
        acc_o += counts[support][k]
        acc_e += expected[k]
        if acc_e >= 5:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        obs[-1] += acc_o
        exp[-1] += acc_e
    if len(obs) < 2:
        return 1.0
    return stats.chisquare(obs, exp).pvalue


SPECS = [
    {"kind": "glauber"},
    {"kind": "heatbath_block", "block": [0, 1, 3]},
    {"kind": "block_dynamics", "blocks": [[0, 1], [1, 2, 3]]},
    {"kind": "even_odd"},
    {"kind": "tiled_heatbath", "L": 1},
    {"kind": "tiled_generic", "L": 1, "inner": "heatbath"},
    {"kind": "tiled_generic", "L": 3, "inner": "even_odd"},
    {"kind": "scan", "order": "EO"},
    {"kind": "scan", "order": "EOE"},
    {"kind": "composition", "kernels": [{"kind": "glauber"}, {"kind": "even_odd"}]},
    {"kind": "lazy", "base": {"kind": "glauber"}, "hold": 0.3},
    {"kind": "reversiblization", "base": {"kind": "scan", "order": "lex"}},
]
SW_SPECS = [
    {"kind": "sw"},
    {"kind": "isolated_sw"},
    {"kind": "tiled_isolated_sw", "L": 1},
    {"kind": "tiled_generic", "L": 1, "inner": "isolated"},
]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: json.dumps(s))
def test_heatbath_samplers_match_exact_rows(spec):
    system = SpinSystem(potts(3, 0.6, fields=[0.3, 0, 0]), build_cube(2, [2, 2]),
                        BoundaryCondition({(-1, 0): 1}))
    assert row_test(system, spec, np.array([0, 2, 1, 0]), 6000, 11) > 1e-4


@pytest.mark.parametrize("spec", SPECS[:6], ids=lambda s: json.dumps(s))
def test_hard_constraint_samplers_match_exact_rows(spec):
    system = SpinSystem(hardcore(1.7), build_cube(2, [2, 2]))
    assert row_test(system, spec, np.array([1, 0, 0, 1]), 4000, 12) > 1e-4


@pytest.mark.parametrize("spec", SW_SPECS, ids=lambda s: json.dumps(s))
@pytest.mark.parametrize("q", [2, 3])
def test_cluster_samplers_match_exact_rows(spec, q):
    system = SpinSystem(potts(q, 0.9), build_cube(2, [2, 2]))
    assert row_test(system, spec, np.array([0, 0, 1, 0]), 6000, 13) > 1e-4


def test_cluster_kernels_need_zero_field_potts():
    with pytest.raises(UnsupportedModelError):
        step(SpinSystem(hardcore(1.0), build_cube(1, [3])), {"kind": "sw"}, np.zeros(3, np.int64),
             np.random.default_rng(0))
    with pytest.raises(UnsupportedModelError):
        exact_matrix(SpinSystem(potts(2, 0.3, fields=[1, 0]), build_cube(1, [3])), {"kind": "isolated_sw"})


# --- block sampler --------------------------------------------------------------------------


def test_block_sampler_matches_conditional_on_wide_region():
    # a 3x3 region forces the slice-by-slice sampler through three slices
    system = SpinSystem(ising(0.5, fields=[0.0, 0.2]), build_cube(2, [4, 4]))
    region = [v for v in range(16) if v // 4 < 3 and v % 4 < 3]
    rng = np.random.default_rng(3)
    exterior = rng.integers(0, 2, 16)
    cond = system.conditional(region, exterior)
    plan = region_plan(system, region)
    counts = np.zeros(len(cond.probs))
    lookup = {tuple(c): i for i, c in enumerate(cond.configs.tolist())}
    draws = 40000
    for _ in range(draws):
        spins = exterior.copy()
        resample_region(system, spins, plan, rng.random(plan.n_uniforms))
        assert np.array_equal(np.delete(spins, region), np.delete(exterior, region))
        counts[lookup[tuple(spins[region].tolist())]] += 1
    # compare a coarse statistic and the full law on the most likely states
    tv = 0.5 * np.abs(counts / draws - cond.probs).sum()
    assert tv < 0.06
    top = np.argsort(cond.probs)[-20:]
    z = (counts[top] - draws * cond.probs[top]) / np.sqrt(draws * cond.probs[top])
    assert np.abs(z).max() < 5


def test_block_sampler_with_hard_constraints_respects_them():
    system = SpinSystem(coloring(4), build_cube(2, [3, 3]))
    plan = region_plan(system, list(range(9)))
    rng = np.random.default_rng(1)
    for _ in range(200):
        spins = np.zeros(9, np.int64)
        resample_region(system, spins, plan, rng.random(plan.n_uniforms))
        assert system.is_valid(spins)


# --- exact matrices against independent brute force ------------------------------------------


def brute_heatbath(system, region):
    configs = system.state_space.configs
    pi = system.gibbs.probs
    N = len(pi)
    K = np.zeros((N, N))
    outside = np.setdiff1d(np.arange(system.n), region)
    for i in range(N):
        same = np.all(configs[:, outside] == configs[i, outside], axis=1)
        K[i, same] = pi[same] / pi[same].sum()
    return K


def components(n, edges):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    for u, v in edges:
        parent[find(u)] = find(v)
    return [find(v) for v in range(n)]


def brute_sw(system, mode, block=None):
    """Enumerate kept edge sets row by row."""
    q, n = system.q, system.n
    p = edge_probability(system.model.beta)
    configs = system.state_space.configs
    N = len(configs)
    K = np.zeros((N, N))
    edges = system.cube.edges.tolist()
    for i, sigma in enumerate(configs):
        mono = [e for e in edges if sigma[e[0]] == sigma[e[1]]]
        for keep in product([0, 1], repeat=len(mono)):
            A = [e for e, k in zip(mono, keep) if k]
            w = p ** len(A) * (1 - p) ** (len(mono) - len(A))
            root = components(n, A)
            touched = {v for e in A for v in e}
            for j, tau in enumerate(configs):
                if mode == "sw":
                    ok = all(tau[a] == tau[b] for a, b in A)
                    ncomp = len(set(root))
                    K[i, j] += w * q ** -ncomp if ok else 0.0
                else:
                    free = [v for v in range(n) if v not in touched and (block is None or v in block)]
                    if all(tau[v] == sigma[v] for v in range(n) if v not in free):
                        K[i, j] += w * q ** -len(free)
    return K


@pytest.mark.parametrize("sides", [[1, 3], [2, 2]])
@pytest.mark.parametrize("q", [2, 3])
def test_cluster_matrices_by_enumeration(sides, q):
    system = SpinSystem(potts(q, 0.7), build_cube(2, sides))
    assert np.abs(exact_matrix(system, {"kind": "sw"}).dense() - brute_sw(system, "sw")).max() < 1e-13
    assert np.abs(exact_matrix(system, {"kind": "isolated_sw"}).dense() - brute_sw(system, "iso")).max() < 1e-13
    from spinlab.lattice import build_tilings
    til = build_tilings(system.cube, 1)
    expect = np.mean([brute_sw(system, "iso", set(til.block(k).tolist())) for k in range(til.m)], axis=0)
    got = exact_matrix(system, {"kind": "tiled_isolated_sw", "L": 1}).dense()
    assert np.abs(got - expect).max() < 1e-13


@pytest.mark.parametrize("region", [[0], [1, 2], [0, 1, 2, 3, 4]])
def test_heatbath_matrix_by_renormalisation(region):
    system = SpinSystem(hardcore(0.8), build_cube(2, [2, 3]))
    assert np.abs(heatbath_matrix(system, region).toarray() - brute_heatbath(system, region)).max() < 1e-14


def test_sparse_path_for_large_space():
    system = SpinSystem(ising(0.2), build_cube(2, [3, 4]))  # 4096 states is the dense limit
    big = SpinSystem(ising(0.2), build_cube(2, [1, 13]))
    assert exact_matrix(system, {"kind": "glauber"}).is_dense
    chain = exact_matrix(big, {"kind": "glauber"})
    assert not chain.is_dense
    assert chain.row_sum_residual() < 1e-12 and chain.invariance_residual() < 1e-12


def test_composition_identity_and_csv(tmp_path):
    system = SpinSystem(ising(0.2), build_cube(1, [3]))
    chain = exact_matrix(system, {"kind": "composition", "kernels": []})
    assert np.array_equal(chain.dense(), np.eye(8))
    path = tmp_path / "m.csv"
    exact_matrix(system, {"kind": "glauber"}).to_csv(path)
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 0], np.arange(8))
    assert np.array_equal(back[:, 1:], exact_matrix(system, {"kind": "glauber"}).dense())


def test_beta_zero_cluster_step_is_uniform():
    # no edges are kept, so every site is an isolated vertex and recoloured
    system = SpinSystem(potts(3, 0.0), build_cube(2, [2, 2]))
    M = exact_matrix(system, {"kind": "isolated_sw"}).dense()
    assert np.allclose(M, 1 / 81)
    assert math.isclose(edge_probability(0.0), 0.0)


def test_empty_tilings_act_as_identity():
    from spinlab.lattice import build_tilings
    system = SpinSystem(ising(0.5), build_cube(1, [2]))
    til = build_tilings(system.cube, 3)
    assert sum(len(t) == 0 for t in til.tilings) == 2
    expect = np.mean([brute_heatbath(system, til.block(k)) if len(til.block(k)) else np.eye(4)
                      for k in range(til.m)], axis=0)
    got = exact_matrix(system, {"kind": "tiled_heatbath", "L": 3}).dense()
    assert np.abs(got - expect).max() < 1e-15
    out = step(system, {"kind": "tiled_heatbath", "L": 3}, np.array([0, 1]), np.random.default_rng(0))
    assert out.shape == (2,)

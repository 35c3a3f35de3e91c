"""Couplings of two copies of a dynamics and the estimators built on them.

Two copies are coupled by feeding them the same uniforms. For single-site
and block heat-bath updates the uniforms go through the conditional inverse
CDF along the monotone spin order, which preserves the order for monotone
systems; for the Swendsen-Wang family edges share their percolation uniform
and clusters share the recolouring uniform of their smallest vertex.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import NumericalError, UnsupportedModelError
from .kernels import _loops
from .kernels.blocks import region_plan, resample_region
from .kernels.samplers import _args, _spins, resolve_order, step, tilings_for
from .kernels.spec import KernelSpec, spec_from_dict
from .measures import ExactMeasure, SpinSystem, extremal_configs
from .streams import map_ordered, substream

TIMEOUT_FACTOR = 10_000
_CHUNK = 64


def _rank(system: SpinSystem) -> np.ndarray:
    rank = np.empty_like(system.orders)
    rows = np.arange(system.n)[:, None]
    rank[rows, system.orders] = np.arange(system.q)[None, :]
    return rank


def dominates(system: SpinSystem, X, Y) -> bool:
    """``X >= Y`` in the monotone order."""
    rank = _rank(system)
    v = np.arange(system.n)
    return bool(np.all(rank[v, np.asarray(X)] >= rank[v, np.asarray(Y)]))


def _require_monotone(system: SpinSystem):
    if not system.model.is_monotone:
        raise UnsupportedModelError("monotone coupling needs a model with a monotone spin order")


def monotone_coupled_sweep(system: SpinSystem, X, Y, order, rng: np.random.Generator):
    """One scan sweep of both copies with one shared uniform per update.

    Requires ``X >= Y``; the outputs satisfy the same order.
    """
    _require_monotone(system)
    X, Y = _spins(system, X), _spins(system, Y)
    if not dominates(system, X, Y):
        raise ValueError("monotone sweep needs X >= Y")
    seq = resolve_order(system, order)
    ham = np.zeros(1, dtype=np.int64)
    _, _, bad = _loops.coupled_scan_sweeps(X, Y, seq, rng.random((1, len(seq))), ham, *_args(system),
                                           _rank(system), True, False)
    if bad:
        raise NumericalError("monotone coupling violated the order")
    return X, Y


def coupled_step(system: SpinSystem, spec, X, Y, rng: np.random.Generator):
    """One step of ``spec`` on both copies driven by the same random numbers."""
    twin = copy.deepcopy(rng)
    X2 = step(system, spec, X, rng)
    Y2 = step(system, spec, Y, twin)
    return X2, Y2


@dataclass
class CouplingRun:
    """Trajectory statistics of one coupled run."""

    trial: int
    hamming: np.ndarray
    coalesced_at: int | None
    X: np.ndarray
    Y: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.hamming)


def coupled_run(system: SpinSystem, spec, X, Y, rng: np.random.Generator, max_steps: int,
                stop_at_coalescence: bool = True, check_order: bool | None = None, trial: int = 0) -> CouplingRun:
    """Run the coupling until coalescence (or ``max_steps``).

    Steps are sweeps for scans and single updates otherwise. With
    ``check_order`` (default: on for monotone models started from ordered
    states) a violation of ``X >= Y`` raises.
    """
    spec = spec_from_dict(spec)
    X, Y = _spins(system, X), _spins(system, Y)
    if check_order is None:
        check_order = system.model.is_monotone and dominates(system, X, Y)
    rank = _rank(system)
    hams = []
    coalesced_at = None
    if np.array_equal(X, Y):
        coalesced_at = 0
        if stop_at_coalescence:
            return CouplingRun(trial, np.zeros(0, np.int64), 0, X, Y)
    done = 0
    if spec.kind in ("scan", "glauber"):
        seq = resolve_order(system, spec.params["order"]) if spec.kind == "scan" else None
        while done < max_steps:
            t = min(_CHUNK, max_steps - done)
            ham = np.zeros(t, dtype=np.int64)
            if seq is not None:
                u = rng.random((t, len(seq)))
                did, c, bad = _loops.coupled_scan_sweeps(X, Y, seq, u, ham, *_args(system), rank,
                                                         check_order, stop_at_coalescence)
                if bad:
                    raise NumericalError("monotone coupling violated the order")
            else:
                u = rng.random((t, 2))
                did, c = _loops.coupled_glauber_steps(X, Y, u, ham, *_args(system), stop_at_coalescence)
                if check_order and not dominates(system, X, Y):
                    raise NumericalError("monotone coupling violated the order")
            hams.append(ham[:did])
            if c > 0 and coalesced_at is None:
                coalesced_at = done + c
            done += did
            if coalesced_at is not None and stop_at_coalescence:
                break
    else:
        while done < max_steps:
            X, Y = coupled_step(system, spec, X, Y, rng)
            done += 1
            h = int(np.count_nonzero(X != Y))
            hams.append(np.array([h], dtype=np.int64))
            if check_order and not dominates(system, X, Y):
                raise NumericalError("monotone coupling violated the order")
            if h == 0 and coalesced_at is None:
                coalesced_at = done
                if stop_at_coalescence:
                    break
    hamming = np.concatenate(hams) if hams else np.zeros(0, np.int64)
    if coalesced_at is not None and coalesced_at > 0 and np.any(hamming[coalesced_at - 1:] != 0):
        raise NumericalError("coalesced copies separated again")
    return CouplingRun(trial, hamming, coalesced_at, X, Y)


def default_starts(system: SpinSystem):
    """Extremal configurations for monotone models, else constant 0 and q-1."""
    if system.model.is_monotone:
        return extremal_configs(system)
    return np.full(system.n, system.q - 1, np.int64), np.zeros(system.n, np.int64)


def step_cap(system: SpinSystem) -> int:
    return TIMEOUT_FACTOR * system.n


def empirical_quantile(times: np.ndarray, level: float) -> float:
    """Smallest ``t`` with at least a ``level`` fraction of ``times <= t``."""
    s = np.sort(np.asarray(times, dtype=np.float64))
    k = max(int(math.ceil(level * len(s) - 1e-12)) - 1, 0)
    return float(s[k])


@dataclass
class CouplingTimeEstimate:
    """Empirical ``T_coup(eps)`` with a bootstrap confidence interval.

    Runs that hit the step cap count as ``inf``; if they exceed an ``eps``
    fraction the estimate is ``inf`` and ``timed_out`` is set.
    """

    estimate: float
    ci_low: float
    ci_high: float
    eps: float
    trials: int
    timeouts: int
    cap: int
    times: np.ndarray = field(repr=False)
    runs: list = field(default_factory=list, repr=False)

    @property
    def timed_out(self) -> bool:
        return not math.isfinite(self.estimate)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "ci_low": self.ci_low, "ci_high": self.ci_high, "eps": self.eps,
                "trials": self.trials, "timeouts": self.timeouts, "cap": self.cap, "timed_out": self.timed_out}


def coupling_time(system: SpinSystem, spec, eps: float = 0.25, trials: int = 1000, seed: int = 0,
                  starts=None, max_steps: int | None = None, workers: int = 1, n_boot: int = 1000,
                  confidence: float = 0.95, keep_runs: bool = False) -> CouplingTimeEstimate:
    """Estimate the coupling time from two starting states.

    Trial ``i`` uses the substream ``(seed, i)``; the bootstrap uses
    ``(seed, trials)``. The result is independent of ``workers``.
    """
    spec = spec_from_dict(spec)
    X0, Y0 = default_starts(system) if starts is None else starts
    cap = step_cap(system) if max_steps is None else min(int(max_steps), step_cap(system))

    def one(i):
        run = coupled_run(system, spec, X0, Y0, substream(seed, i), cap, trial=i)
        return run if keep_runs else CouplingRun(i, run.hamming, run.coalesced_at, run.X[:0], run.Y[:0])

    runs = map_ordered(one, range(trials), workers)
    times = np.array([math.inf if r.coalesced_at is None else r.coalesced_at for r in runs], dtype=np.float64)
    timeouts = int(np.sum(~np.isfinite(times)))
    level = 1.0 - eps
    est = empirical_quantile(times, level)
    if math.isfinite(est) and trials > 1 and np.ptp(times) > 0:
        capped = np.where(np.isfinite(times), times, cap + 1.0)
        res = stats.bootstrap((capped,), lambda x, axis: np.apply_along_axis(empirical_quantile, axis, x, level),
                              n_resamples=n_boot, confidence_level=confidence, method="percentile",
                              random_state=substream(seed, trials), vectorized=True)
        lo, hi = float(res.confidence_interval.low), float(res.confidence_interval.high)
        hi = math.inf if hi > cap else hi
    else:
        lo = hi = est
    return CouplingTimeEstimate(est, lo, hi, eps, trials, timeouts, cap, times, runs)


def wilson_interval(successes, n: int, confidence: float = 0.95):
    """Wilson score intervals (vectorised over ``successes``)."""
    lo, hi = [], []
    for k in np.atleast_1d(successes):
        ci = stats.binomtest(int(k), n).proportion_ci(confidence_level=confidence, method="wilson")
        lo.append(ci.low)
        hi.append(ci.high)
    return np.array(lo), np.array(hi)


@dataclass
class DisagreementEstimate:
    """Per-vertex frequency of ``X_t(v) != Y_t(v)``, with Wilson intervals."""

    t: int
    trials: int
    per_vertex: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def max(self) -> float:
        return float(self.per_vertex.max(initial=0.0))

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.per_vertex))


def disagreement_probability(system: SpinSystem, spec, t: int, trials: int, seed: int = 0, starts=None,
                             workers: int = 1, confidence: float = 0.95) -> DisagreementEstimate:
    """Estimate ``rho(t) = max_v Pr[X_t(v) != Y_t(v)]`` from extremal starts."""
    spec = spec_from_dict(spec)
    X0, Y0 = default_starts(system) if starts is None else starts

    def one(i):
        run = coupled_run(system, spec, X0, Y0, substream(seed, i), int(t), stop_at_coalescence=False, trial=i)
        return run.X != run.Y

    diffs = map_ordered(one, range(trials), workers)
    counts = np.sum(diffs, axis=0) if diffs else np.zeros(system.n, np.int64)
    lo, hi = wilson_interval(counts, trials, confidence)
    return DisagreementEstimate(int(t), trials, counts / trials, lo, hi)


def tv_distance(p: ExactMeasure, q: ExactMeasure) -> float:
    """Total variation distance between two measures on the same enumeration."""
    if not (np.array_equal(p.vertices, q.vertices) and np.array_equal(p.configs, q.configs)):
        raise ValueError("measures must be enumerated over the same configurations")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


# --- path coupling for tiled heat-bath dynamics ---------------------------------------------


def _cube_lookup(system: SpinSystem, L: int):
    """``(m, n)`` array of cube ids per tiling (-1 outside the tiling) and the cube lists."""
    key = ("cube_lookup", int(L))
    if key not in system.cache:
        til = tilings_for(system, L)
        ids = np.full((til.m, system.n), -1, dtype=np.int64)
        for k, cubes in enumerate(til.tilings):
            for c, verts in enumerate(cubes):
                ids[k, verts] = c
        system.cache[key] = (til, ids)
    return system.cache[key]


def _adjacent_cube(system, ids_k, v):
    for w in system.cube.neighbors(v):
        if ids_k[w] >= 0:
            return int(ids_k[w])
    return -1


def _check_two_spin_monotone(system: SpinSystem):
    _require_monotone(system)
    if system.q != 2:
        raise UnsupportedModelError("path-coupling estimators need a two-spin monotone model")


@dataclass
class ContractionEstimate:
    """Mean disagreement count after one coupled tiled step from an adjacent pair."""

    mean: float
    ci_low: float
    ci_high: float
    trials: int
    background: str
    vertex: int

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def _background(system, kind, rng):
    top, bottom = extremal_configs(system)
    if kind == "plus":
        return top.copy()
    if kind == "minus":
        return bottom.copy()
    if kind == "random":
        return rng.integers(0, system.q, system.n).astype(np.int64)
    raise ValueError(f"unknown background {kind!r}")


def path_coupling_contraction(system: SpinSystem, L: int, trials: int, seed: int = 0, vertex: int | None = None,
                              background: str = "random", confidence: float = 0.99, workers: int = 1,
                              chunk: int = 1000) -> ContractionEstimate:
    """Monte Carlo estimate of the expected Hamming distance after one step of
    the tiled heat-bath dynamics from a pair differing only at ``vertex``.

    Both copies share the tiling choice and every uniform; cubes whose
    exterior does not see the discrepancy then coalesce deterministically, so
    only the (at most one) cube adjacent to ``vertex`` is resampled. The
    discrepancy is top spin in X and bottom spin in Y; ``background`` picks
    the remaining spins (``"random"`` redraws them every trial). For hard
    constrained models the background must keep both copies valid.
    """
    _check_two_spin_monotone(system)
    til, ids = _cube_lookup(system, L)
    v = system.n // 2 if vertex is None else int(vertex)
    top, bottom = extremal_configs(system)
    nchunks = -(-trials // chunk)

    def run_chunk(c):
        rng = substream(seed, c)
        n_here = min(chunk, trials - c * chunk)
        out = np.empty(n_here)
        for i in range(n_here):
            bg = _background(system, background, rng)
            X = bg.copy()
            Y = bg.copy()
            X[v], Y[v] = top[v], bottom[v]
            k = min(int(rng.random() * til.m), til.m - 1)
            if ids[k, v] >= 0:
                out[i] = 0.0
                continue
            cid = _adjacent_cube(system, ids[k], v)
            if cid < 0:
                out[i] = 1.0
                continue
            plan = region_plan(system, til.tilings[k][cid])
            u = rng.random(plan.n_uniforms)
            resample_region(system, X, plan, u)
            resample_region(system, Y, plan, u)
            out[i] = float(np.count_nonzero(X != Y))
        return out

    values = np.concatenate(map_ordered(run_chunk, range(nchunks), workers))
    mean = float(values.mean())
    half = 0.0
    if len(values) > 1:
        half = float(stats.norm.ppf(0.5 + confidence / 2)) * float(values.std(ddof=1)) / math.sqrt(len(values))
    return ContractionEstimate(mean, mean - half, mean + half, trials, background, v)


def _top_marginals(system: SpinSystem, region, exterior, top):
    """Probability that each region site takes its top spin given ``exterior``."""
    meas = system.conditional(region, exterior)
    hit = meas.configs == top[meas.vertices][None, :]
    return meas.probs @ hit


def pair_contraction(system: SpinSystem, L: int, X, v: int) -> float:
    """Exact expected Hamming distance after one coupled tiled step.

    ``X`` and ``Y`` (the copy of ``X`` with ``v`` switched to the other spin)
    differ only at ``v``. Uses that the shared-uniform coupling of the
    adjacent cube is monotone, so its disagreement probability at each site
    equals the difference of the top-spin marginals.
    """
    _check_two_spin_monotone(system)
    til, ids = _cube_lookup(system, L)
    X = np.asarray(X, dtype=np.int64).copy()
    Y = X.copy()
    Y[v] = 1 - X[v]
    if not (system.is_valid(X) and system.is_valid(Y)):
        raise ValueError("both copies of the pair must be valid configurations")
    top = system.orders[:, -1]
    total = 0.0
    for k in range(til.m):
        if ids[k, v] >= 0:
            continue
        total += 1.0
        cid = _adjacent_cube(system, ids[k], v)
        if cid >= 0:
            cube = til.tilings[k][cid]
            total += float(np.abs(_top_marginals(system, cube, X, top) - _top_marginals(system, cube, Y, top)).sum())
    return total / til.m


@dataclass
class ExactContraction:
    worst: float
    mean: float
    pairs: int
    worst_pair: tuple


def path_coupling_exact(system: SpinSystem, L: int, max_pairs: int = 1 << 16) -> ExactContraction:
    """Exact contraction over every adjacent pair of valid configurations."""
    _check_two_spin_monotone(system)
    n = system.n
    if n * (1 << (n - 1)) > max_pairs:
        from .errors import CapacityError
        raise CapacityError(f"adjacent pairs <= {max_pairs}", f"{n * (1 << (n - 1))} adjacent pairs to enumerate")
    worst, worst_pair, total, count = -1.0, None, 0.0, 0
    for code in range(1 << n):
        X = np.array([(code >> (n - 1 - i)) & 1 for i in range(n)], dtype=np.int64)
        for v in range(n):
            if X[v] != system.orders[v, -1]:
                continue  # each unordered pair once: X holds the top spin at v
            Y = X.copy()
            Y[v] = 1 - X[v]
            if not (system.is_valid(X) and system.is_valid(Y)):
                continue
            val = pair_contraction(system, L, X, v)
            total += val
            count += 1
            if val > worst:
                worst, worst_pair = val, (X.tolist(), v)
    return ExactContraction(worst, total / max(count, 1), count, worst_pair)


__all__ = [
    "ContractionEstimate", "CouplingRun", "CouplingTimeEstimate", "DisagreementEstimate", "ExactContraction",
    "coupled_run", "coupled_step", "coupling_time", "default_starts", "disagreement_probability", "dominates",
    "empirical_quantile", "monotone_coupled_sweep", "pair_contraction", "path_coupling_contraction",
    "path_coupling_exact", "tv_distance", "wilson_interval",
]

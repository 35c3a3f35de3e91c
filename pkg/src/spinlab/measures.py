"""Exact Gibbs and conditional measures by enumeration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from .errors import CapacityError, DegenerateMeasureError, UnsupportedModelError
from .lattice import LatticeCube
from .models import BoundaryCondition, SpinModel, local_fields

ENUMERATION_BITS = 24
_CHUNK = 1 << 16


def _check_bits(k: int, q: int, what: str):
    if k * math.log2(q) > ENUMERATION_BITS + 1e-12:
        raise CapacityError(
            f"{what}: n*log2(q) <= {ENUMERATION_BITS}",
            f"{what}: {q}^{k} states exceed the enumeration guard n*log2(q) <= {ENUMERATION_BITS}",
        )


def enumerate_configs(k: int, q: int) -> np.ndarray:
    """All ``q^k`` configurations in lexicographic order (first site most significant)."""
    codes = np.arange(q ** k, dtype=np.int64)
    powers = q ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] // powers[None, :]) % q).astype(np.int8)


def encode(configs: np.ndarray, q: int) -> np.ndarray:
    configs = np.atleast_2d(configs)
    k = configs.shape[1]
    powers = q ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return configs.astype(np.int64) @ powers


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Canonical enumeration of the valid configurations of a system.

    ``codes`` are the base-q integers of ``configs`` and are strictly
    increasing, so lookups are binary searches.
    """

    configs: np.ndarray
    codes: np.ndarray
    q: int

    def __len__(self):
        return len(self.codes)

    def index(self, configs) -> np.ndarray:
        codes = encode(np.asarray(configs), self.q)
        pos = np.searchsorted(self.codes, codes)
        pos = np.minimum(pos, len(self.codes) - 1)
        if not np.array_equal(self.codes[pos], codes):
            raise KeyError("configuration is not a valid state")
        return pos


@dataclass(frozen=True, eq=False)
class ExactMeasure:
    """Probability vector over enumerated configurations of ``vertices``."""

    vertices: np.ndarray
    configs: np.ndarray
    probs: np.ndarray
    log_Z: float

    def __len__(self):
        return len(self.probs)

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)


def _normalize(logw: np.ndarray):
    shift = logw.max()
    w = np.exp(logw - shift)
    total = w.sum()
    return w / total, float(shift + math.log(total))


class SpinSystem:
    """A model bound to a box and a boundary condition.

    Holds the per-vertex potentials used by the samplers and lazily builds
    the state space and Gibbs measure used by the exact routines.
    """

    def __init__(self, model: SpinModel, cube: LatticeCube, bc: BoundaryCondition | None = None):
        bc = BoundaryCondition.free() if bc is None else bc
        bc.validate(cube, model.q)
        self.model = model
        self.cube = cube
        self.bc = bc
        self.h, self.allowed = local_fields(model, cube, bc)
        self.orders = model.vertex_orders(cube)
        self.cache = {}

    @property
    def n(self) -> int:
        return self.cube.n

    @property
    def q(self) -> int:
        return self.model.q

    def log_weights(self, configs: np.ndarray) -> np.ndarray:
        """Unnormalised log Gibbs weights; ``-inf`` marks invalid configurations."""
        configs = np.asarray(configs)
        out = np.empty(len(configs))
        verts = np.arange(self.n)
        eu, ev = self.cube.edges[:, 0], self.cube.edges[:, 1]
        for start in range(0, len(configs), _CHUNK):
            c = configs[start:start + _CHUNK].astype(np.int64)
            lw = self.h[verts, c].sum(axis=1) + self.model.U[c[:, eu], c[:, ev]].sum(axis=1)
            ok = self.allowed[verts, c].all(axis=1)
            if self.model.has_hard_constraints:
                ok &= ~self.model.hard[c[:, eu], c[:, ev]].any(axis=1)
            lw[~ok] = -np.inf
            out[start:start + _CHUNK] = lw
        return out

    def is_valid(self, config) -> bool:
        return bool(np.isfinite(self.log_weights(np.asarray(config)[None, :]))[0])

    @cached_property
    def _enumerated(self):
        _check_bits(self.n, self.q, "gibbs_distribution")
        configs = enumerate_configs(self.n, self.q)
        logw = self.log_weights(configs)
        keep = np.isfinite(logw)
        if not keep.any():
            raise DegenerateMeasureError("every configuration has zero weight")
        configs = configs[keep]
        codes = np.flatnonzero(keep).astype(np.int64)
        return StateSpace(configs, codes, self.q), logw[keep]

    @property
    def state_space(self) -> StateSpace:
        return self._enumerated[0]

    @cached_property
    def gibbs(self) -> ExactMeasure:
        space, logw = self._enumerated
        probs, log_Z = _normalize(logw)
        return ExactMeasure(np.arange(self.n), space.configs, probs, log_Z)

    def conditional(self, region, exterior) -> ExactMeasure:
        """Measure on ``region`` given ``exterior`` (a full-length configuration).

        Entries of ``exterior`` inside ``region`` are ignored.
        """
        region = np.unique(np.asarray(region, dtype=np.int64))
        exterior = np.asarray(exterior, dtype=np.int64)
        if exterior.shape != (self.n,):
            raise ValueError(f"exterior must be a length-{self.n} configuration")
        k = len(region)
        if k == 0:
            return ExactMeasure(region, np.zeros((1, 0), np.int8), np.ones(1), 0.0)
        _check_bits(k, self.q, "conditional_distribution")
        configs = enumerate_configs(k, self.q)
        c = configs.astype(np.int64)
        inside = np.zeros(self.n, dtype=bool)
        inside[region] = True
        pos = np.full(self.n, -1, dtype=np.int64)
        pos[region] = np.arange(k)

        logw = self.h[region, c].sum(axis=1)
        ok = self.allowed[region, c].all(axis=1)
        U, hard = self.model.U, self.model.hard
        for u, v in self.cube.edges:
            if inside[u] and inside[v]:
                a, b = c[:, pos[u]], c[:, pos[v]]
            elif inside[u]:
                a, b = c[:, pos[u]], exterior[v]
            elif inside[v]:
                a, b = exterior[u], c[:, pos[v]]
            else:
                continue
            logw = logw + U[a, b]
            ok &= ~hard[a, b]
        if not ok.any():
            raise DegenerateMeasureError("no valid configuration of the region given the exterior")
        configs, logw = configs[ok], logw[ok]
        probs, log_Z = _normalize(logw)
        return ExactMeasure(region, configs, probs, log_Z)


def gibbs_distribution(model: SpinModel, cube: LatticeCube, bc: BoundaryCondition | None = None) -> ExactMeasure:
    return SpinSystem(model, cube, bc).gibbs


def conditional_distribution(model, cube, bc, region, exterior) -> ExactMeasure:
    return SpinSystem(model, cube, bc).conditional(region, exterior)


def marginal(measure: ExactMeasure, vertices) -> ExactMeasure:
    """Marginal of ``measure`` on a subset of its vertices (in the given order)."""
    vertices = np.asarray(vertices, dtype=np.int64)
    lookup = {int(v): i for i, v in enumerate(measure.vertices)}
    cols = np.array([lookup[int(v)] for v in vertices], dtype=np.int64)
    sub = measure.configs[:, cols]
    # any base above the largest spin gives distinct codes
    base = max(int(measure.configs.max(initial=0)) + 1, 2)
    codes = encode(sub, base) if len(cols) else np.zeros(len(sub), np.int64)
    uniq, first, inv = np.unique(codes, return_index=True, return_inverse=True)
    probs = np.bincount(inv.ravel(), weights=measure.probs, minlength=len(uniq))
    return ExactMeasure(vertices, sub[first], probs, 0.0)


def check_permissive(model: SpinModel, cube: LatticeCube, bc: BoundaryCondition | None = None) -> bool:
    """Whether every region admits a valid filling for every exterior assignment.

    With pairwise constraints it suffices to check single sites against every
    assignment of their interior neighbours: a region can then be filled
    greedily one site at a time.
    """
    system = SpinSystem(model, cube, bc)
    if not model.has_hard_constraints:
        return bool(system.allowed.any(axis=1).all())
    hard = model.hard
    for v in range(cube.n):
        nbrs = cube.neighbors(v)
        for assignment in product(range(model.q), repeat=len(nbrs)):
            ok = system.allowed[v].copy()
            for s in assignment:
                ok &= ~hard[s]
            if not ok.any():
                return False
    return True


def check_permissive_exhaustive(model: SpinModel, cube: LatticeCube, bc: BoundaryCondition | None = None) -> bool:
    """Brute-force permissivity over all regions and all exterior assignments."""
    n, q = cube.n, model.q
    if n * (1 + math.log2(q)) > 20:
        raise CapacityError("2^n * q^n <= 2^20")
    system = SpinSystem(model, cube, bc)
    configs = enumerate_configs(n, q).astype(np.int64)
    codes = np.arange(len(configs))
    verts = np.arange(n)
    site_ok = system.allowed[verts, configs]
    edge_bad = model.hard[configs[:, cube.edges[:, 0]], configs[:, cube.edges[:, 1]]]
    powers = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for mask in range(1, 1 << n):
        region = np.array([(mask >> v) & 1 for v in range(n)], dtype=bool)
        touch = region[cube.edges[:, 0]] | region[cube.edges[:, 1]]
        ok = site_ok[:, region].all(axis=1) & ~edge_bad[:, touch].any(axis=1)
        ext_code = codes - configs[:, region] @ powers[region]
        good = np.zeros(q ** n, dtype=bool)
        good[ext_code[ok]] = True
        if not good[np.unique(ext_code)].all():
            return False
    return True


def config_leq(model: SpinModel, x, y, cube: LatticeCube | None = None) -> bool:
    """Partial order ``x <= y`` induced by the per-vertex spin orders."""
    if model.monotone_order is None:
        raise UnsupportedModelError("model has no monotone spin order")
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if model.alternating:
        if cube is None:
            raise ValueError("alternating spin orders need the cube")
        orders = model.vertex_orders(cube)
    else:
        orders = np.tile(np.asarray(model.monotone_order), (len(x), 1))
    rank = np.argsort(orders, axis=1)
    idx = np.arange(len(x))
    return bool(np.all(rank[idx, x] <= rank[idx, y]))


def extremal_configs(system: SpinSystem):
    """``(top, bottom)`` configurations of the monotone order."""
    if system.model.monotone_order is None:
        raise UnsupportedModelError("model has no monotone spin order")
    return system.orders[:, -1].copy(), system.orders[:, 0].copy()

"""Exact heat-bath resampling of a vertex region.

A region is split into connected components (components of one region do not
interact given the exterior). Singletons use the single-site update. Boxes are
sliced across their longest axis and resampled with a transfer matrix;
anything else is enumerated as a single slice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CapacityError, DegenerateMeasureError
from ..measures import SpinSystem
from . import _loops

MAX_SLICE_STATES = 1024
MAX_COMPONENT_STATES = 1 << 16


@dataclass(frozen=True, eq=False)
class ComponentPlan:
    slices: np.ndarray  # (S, s) vertex indices
    intra: np.ndarray  # (k, 2) adjacent positions within a slice
    tmat: np.ndarray  # (q^s, q^s) between consecutive slices, or (1, 1) placeholder


@dataclass(frozen=True, eq=False)
class RegionPlan:
    region: np.ndarray
    mask: np.ndarray
    singletons: np.ndarray
    components: tuple

    @property
    def n_uniforms(self) -> int:
        return len(self.region)


def _components(cube, region_mask):
    seen = np.zeros(cube.n, dtype=bool)
    comps = []
    for start in np.flatnonzero(region_mask):
        if seen[start]:
            continue
        seen[start] = True
        stack, comp = [start], []
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in cube.neighbors(v):
                if region_mask[w] and not seen[w]:
                    seen[w] = True
                    stack.append(w)
        comps.append(np.sort(np.array(comp, dtype=np.int64)))
    return comps


def _intra_positions(cube, verts):
    pos = {int(v): i for i, v in enumerate(verts)}
    pairs = [(pos[u], pos[v]) for u, v in cube.edges.tolist() if u in pos and v in pos]
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _transfer(system: SpinSystem, s: int) -> np.ndarray:
    key = ("transfer", s)
    if key not in system.cache:
        q = system.q
        M = q ** s
        digits = (np.arange(M)[:, None] // q ** np.arange(s)[None, :]) % q
        logt = np.zeros((M, M))
        ok = np.ones((M, M), dtype=bool)
        for j in range(s):
            a, b = digits[:, j][:, None], digits[:, j][None, :]
            logt += system.model.U[a, b]
            ok &= ~system.model.hard[a, b]
        t = np.where(ok, np.exp(logt - logt[ok].max()), 0.0) if ok.any() else np.zeros((M, M))
        system.cache[key] = np.ascontiguousarray(t)
    return system.cache[key]


_PLACEHOLDER = np.ones((1, 1))


def _component_plan(system: SpinSystem, comp: np.ndarray) -> ComponentPlan:
    cube, q = system.cube, system.q
    coords = cube.vertices[comp]
    lo = coords.min(axis=0)
    extents = coords.max(axis=0) - lo + 1
    is_box = int(np.prod(extents)) == len(comp)
    if is_box:
        axis = int(np.argmax(extents))
        S = int(extents[axis])
        s = len(comp) // S
        if S > 1 and q ** s <= MAX_SLICE_STATES:
            # comp is row-major sorted; order each slice by its remaining coordinates
            key = coords[:, axis]
            rest = np.delete(coords, axis, axis=1)
            order = np.lexsort(tuple(rest[:, i] for i in range(rest.shape[1] - 1, -1, -1)) + (key,))
            slices = comp[order].reshape(S, s)
            return ComponentPlan(slices, _intra_positions(cube, slices[0]), _transfer(system, s))
    if q ** len(comp) > MAX_COMPONENT_STATES:
        raise CapacityError(
            f"q^|component| <= {MAX_COMPONENT_STATES}",
            f"block component of {len(comp)} sites has {q}^{len(comp)} states; "
            f"exact resampling needs box components with q^slice <= {MAX_SLICE_STATES} "
            f"or at most {MAX_COMPONENT_STATES} states",
        )
    return ComponentPlan(comp[None, :].copy(), _intra_positions(cube, comp), _PLACEHOLDER)


def region_plan(system: SpinSystem, region) -> RegionPlan:
    """Plan (cached on the system) for resampling ``region`` exactly."""
    region = np.unique(np.asarray(region, dtype=np.int64))
    key = ("region", region.tobytes())
    if key in system.cache:
        return system.cache[key]
    mask = np.zeros(system.n, dtype=bool)
    mask[region] = True
    singles, comps = [], []
    for comp in _components(system.cube, mask):
        if len(comp) == 1:
            singles.append(comp[0])
        else:
            comps.append(_component_plan(system, comp))
    plan = RegionPlan(region, mask, np.array(singles, dtype=np.int64), tuple(comps))
    system.cache[key] = plan
    return plan


def resample_region(system: SpinSystem, spins: np.ndarray, plan: RegionPlan, uniforms: np.ndarray):
    """Replace ``spins`` on the region by a draw from the conditional measure.

    Consumes ``plan.n_uniforms`` uniforms: singletons first, then each
    component's sites in slice order. Two calls sharing ``uniforms`` give the
    monotone coupling for monotone models.
    """
    if len(uniforms) < plan.n_uniforms:
        raise ValueError("not enough uniforms for the region")
    model = system.model
    args = (system.cube.nbr_ptr, system.cube.nbr_idx, model.U, model.hard, system.h, system.allowed,
            system.orders)
    k = len(plan.singletons)
    ok = _loops.site_updates(spins, plan.singletons, uniforms[:k], *args)
    for comp in plan.components:
        size = comp.slices.size
        ok = ok and _loops.sample_component(spins, comp.slices, comp.intra, comp.tmat, plan.mask,
                                            uniforms[k:k + size], *args)
        k += size
    if not ok:
        raise DegenerateMeasureError("conditional measure on the region has no valid configuration")
    return spins

"""Exact strong-spatial-mixing discrepancies on enumerable boxes.

The scan reports how much a single boundary change moves marginals at a
given distance. It is numerical evidence on small boxes and never a proof
that the infinite-volume condition holds.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateMeasureError
from .lattice import LatticeCube
from .measures import SpinSystem, marginal
from .models import BoundaryCondition, SpinModel

EVIDENCE_NOTE = ("Exact discrepancies on finite boxes; this is evidence of decay, "
                 "not a certificate of strong spatial mixing.")
TV_FLOOR = 1e-12


@dataclass
class SSMSample:
    """TV distance between the marginals on ``B`` under two boundary conditions
    that differ only at the boundary site ``u``."""

    sides: tuple
    B: tuple
    u: tuple
    tv: float
    dist: int
    psi: str = ""

    def to_row(self) -> dict:
        row = asdict(self)
        row["sides"] = "x".join(map(str, self.sides))
        row["B"] = ";".join(map(str, self.B))
        row["u"] = ",".join(map(str, self.u))
        return row


def boundary_distance(cube: LatticeCube, u, B) -> int:
    """L1 distance from the boundary point ``u`` to the vertex set ``B``."""
    coords = cube.vertices[np.asarray(B, dtype=np.int64)]
    return int(np.abs(coords - np.asarray(u)[None, :]).sum(axis=1).min())


def _differing_sites(psi: BoundaryCondition, psi_u: BoundaryCondition):
    keys = set(psi.assignment) | set(psi_u.assignment)
    return sorted(k for k in keys if psi.assignment.get(k) != psi_u.assignment.get(k))


def ssm_discrepancy(cube: LatticeCube, model: SpinModel, B, u, psi: BoundaryCondition,
                    psi_u: BoundaryCondition) -> SSMSample:
    """Exact TV distance between the marginals on ``B`` under ``psi`` and ``psi_u``."""
    u = tuple(int(c) for c in u)
    diff = _differing_sites(psi, psi_u)
    if diff and diff != [u]:
        raise ValueError(f"boundary conditions must differ only at {u}, they differ at {diff}")
    B = tuple(sorted(int(b) for b in np.atleast_1d(B)))
    cube.boundary_index(u)
    m1 = marginal(SpinSystem(model, cube, psi).gibbs, B)
    m2 = marginal(SpinSystem(model, cube, psi_u).gibbs, B)
    # align the two supports (either may lack configurations forbidden by a hard constraint)
    codes1 = [tuple(c) for c in m1.configs.tolist()]
    codes2 = [tuple(c) for c in m2.configs.tolist()]
    p = dict(zip(codes1, m1.probs))
    q = dict(zip(codes2, m2.probs))
    tv = 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q))
    return SSMSample(cube.sides, B, u, float(tv), boundary_distance(cube, u, B))


def _boundary_family(cube: LatticeCube, model: SpinModel, kinds, rng):
    out = []
    for kind in kinds:
        if kind == "plus":
            out.append(("plus", BoundaryCondition.constant(cube, model.q - 1)))
        elif kind == "minus":
            out.append(("minus", BoundaryCondition.constant(cube, 0)))
        elif kind == "random":
            spins = rng.integers(0, model.q, len(cube.boundary))
            out.append(("random", BoundaryCondition({tuple(b): int(s) for b, s in zip(cube.boundary.tolist(), spins)})))
        else:
            raise ValueError(f"unknown boundary kind {kind!r}")
    return out


def _all_marginals(system: SpinSystem):
    """``(n, q)`` single-site marginals."""
    g = system.gibbs
    out = np.zeros((system.n, system.q))
    for s in range(system.q):
        out[:, s] = g.probs @ (g.configs == s)
    return out


def ssm_scan(cube: LatticeCube, model: SpinModel, boundaries=("plus", "minus", "random", "random"),
             targets: str = "singletons", rng: np.random.Generator | None = None) -> list:
    """Discrepancies for every boundary site ``u``, every alternative spin at
    ``u`` and every target.

    ``targets="singletons"`` uses each vertex (the centre included);
    ``"subsets"`` uses every nonempty vertex subset and is limited to 9 sites.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if targets == "subsets" and cube.n > 9:
        raise ValueError("subset targets are limited to boxes with at most 9 sites")
    samples = []
    for name, psi in _boundary_family(cube, model, boundaries, rng):
        base = SpinSystem(model, cube, psi)
        base_marg = _all_marginals(base) if targets == "singletons" else None
        for u in cube.boundary.tolist():
            u = tuple(u)
            for s in range(model.q):
                if psi.assignment.get(u) == s:
                    continue
                psi_u = psi.with_site(u, s)
                if targets == "singletons":
                    other = SpinSystem(model, cube, psi_u)
                    try:
                        marg = _all_marginals(other)
                    except DegenerateMeasureError:
                        continue  # no valid configuration under psi_u
                    tvs = 0.5 * np.abs(marg - base_marg).sum(axis=1)
                    for v in range(cube.n):
                        samples.append(SSMSample(cube.sides, (v,), u, float(tvs[v]),
                                                 boundary_distance(cube, u, [v]), name))
                else:
                    for mask in range(1, 1 << cube.n):
                        B = [v for v in range(cube.n) if (mask >> v) & 1]
                        smp = ssm_discrepancy(cube, model, B, u, psi, psi_u)
                        smp.psi = name
                        samples.append(smp)
    return samples


def max_profile(samples) -> dict:
    """Largest TV discrepancy at each distance."""
    prof = {}
    for s in samples:
        prof[s.dist] = max(prof.get(s.dist, 0.0), s.tv)
    return dict(sorted(prof.items()))


def is_nonincreasing(profile: dict, tol: float = 1e-12) -> bool:
    vals = list(profile.values())
    return all(b <= a + tol for a, b in zip(vals, vals[1:]))


@dataclass
class SSMFit:
    """Least-squares fit ``log tv = log b_hat - a_hat * dist``.

    ``status`` is ``"fit"``, ``"decay unmeasurably fast"`` (every sample below
    the floor) or ``"undetermined"`` (fewer than three distances with
    positive samples). ``passed`` tests supplied ``(a, b)`` on every sample.
    """

    a_hat: float
    b_hat: float
    rms: float
    status: str
    passed: bool | None
    note: str = EVIDENCE_NOTE

    def to_dict(self) -> dict:
        return asdict(self)


def ssm_fit(samples, a: float | None = None, b: float | None = None, floor: float = TV_FLOOR) -> SSMFit:
    samples = list(samples)
    passed = None
    if a is not None and b is not None:
        passed = all(s.tv <= b * math.exp(-a * s.dist) for s in samples)
    pos = [s for s in samples if s.tv > floor]
    if not pos:
        return SSMFit(math.inf, 0.0, 0.0, "decay unmeasurably fast", True if passed is None else passed)
    d = np.array([s.dist for s in pos], dtype=np.float64)
    y = np.log([s.tv for s in pos])
    if len(np.unique(d)) < 3:
        return SSMFit(math.nan, math.nan, math.nan, "undetermined", passed)
    slope, intercept = np.polyfit(d, y, 1)
    rms = float(np.sqrt(np.mean((y - (intercept + slope * d)) ** 2)))
    return SSMFit(float(-slope), float(math.exp(intercept)), rms, "fit", passed)

"""Nearest-neighbour spin systems: potentials, boundary conditions, energies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigError, UnsupportedModelError
from .lattice import LatticeCube, parity


@dataclass(frozen=True, eq=False)
class SpinModel:
    """Spin system ``(S, U, W)`` with spins ``0..q-1``.

    ``U`` is the symmetric edge potential and ``W`` the vertex potential; the
    Gibbs weight of a configuration is ``exp(sum U + sum W)``. Entries of
    ``hard`` mark forbidden spin pairs; the matching ``U`` entries are unused.

    ``monotone_order`` lists spins from lowest to highest. With
    ``alternating=True`` the order is reversed on odd vertices (hard-core).
    """

    q: int
    U: np.ndarray
    W: np.ndarray
    hard: np.ndarray
    name: str = "custom"
    beta: Optional[float] = None
    fields: Optional[tuple] = None
    monotone_order: Optional[tuple] = None
    alternating: bool = False
    monotone_verified: bool = False
    params: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        W = np.asarray(self.W, dtype=np.float64)
        hard = np.asarray(self.hard, dtype=bool)
        q = self.q
        if U.shape != (q, q) or W.shape != (q,) or hard.shape != (q, q):
            raise ValueError("U, W and hard must have shapes (q, q), (q,), (q, q)")
        if not np.array_equal(hard, hard.T):
            raise ValueError("hard-constraint mask must be symmetric")
        U = np.where(hard, 0.0, U)
        if not np.array_equal(U, U.T):
            raise ValueError("edge potential U must be symmetric")
        if not (np.isfinite(U).all() and np.isfinite(W).all()):
            raise ValueError("potentials must be finite; use the hard mask for constraints")
        if self.monotone_order is not None and sorted(self.monotone_order) != list(range(q)):
            raise ValueError("monotone_order must be a permutation of the spins")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "hard", hard)

    @property
    def has_hard_constraints(self) -> bool:
        return bool(self.hard.any())

    @property
    def is_monotone(self) -> bool:
        return self.monotone_order is not None

    @property
    def is_potts_zero_field(self) -> bool:
        """True for ``U = beta * 1(s = s')``, constant ``W``, no hard constraints."""
        if self.has_hard_constraints or self.beta is None or self.beta < 0:
            return False
        return bool(np.array_equal(self.U, self.beta * np.eye(self.q)) and np.all(self.W == self.W[0]))

    def vertex_orders(self, cube: LatticeCube) -> np.ndarray:
        """``(n, q)`` array listing spins from lowest to highest at each vertex."""
        base = np.arange(self.q) if self.monotone_order is None else np.asarray(self.monotone_order)
        orders = np.tile(base, (cube.n, 1)).astype(np.int64)
        if self.alternating:
            odd = parity(cube) == 1
            orders[odd] = orders[odd, ::-1]
        return orders

    def to_dict(self) -> dict:
        if self.name in ("ising", "potts", "hardcore", "coloring"):
            return {"preset": self.name, **self.params}
        return {
            "q": self.q,
            "U": self.U.tolist(),
            "W": self.W.tolist(),
            "hard_mask": self.hard.astype(int).tolist(),
            "monotone_order": None if self.monotone_order is None else list(self.monotone_order),
        }


def potts(q: int, beta: float, fields=None) -> SpinModel:
    """Potts model with ``U(s, s') = beta 1(s = s')`` and ``W(s) = beta h_s``."""
    if q < 2:
        raise ValueError("Potts model needs q >= 2")
    h = np.zeros(q) if fields is None else np.asarray(fields, dtype=np.float64)
    if h.shape != (q,):
        raise ValueError(f"expected {q} field values")
    params = {"q": int(q), "beta": float(beta)}
    if fields is not None:
        params["fields"] = [float(x) for x in h]
    return SpinModel(
        q=q,
        U=beta * np.eye(q),
        W=beta * h,
        hard=np.zeros((q, q), dtype=bool),
        name="potts",
        beta=float(beta),
        fields=tuple(float(x) for x in h),
        params=params,
    )


def ising(beta: float, fields=None) -> SpinModel:
    """Two-spin Potts model; spin 1 is "plus" and is the top of the spin order.

    Trusted as monotone only for ferromagnetic ``beta >= 0``.
    """
    base = potts(2, beta, fields)
    params = {"beta": float(beta)}
    if fields is not None:
        params["fields"] = [float(x) for x in fields]
    ferro = beta >= 0
    return SpinModel(
        q=2,
        U=base.U,
        W=base.W,
        hard=base.hard,
        name="ising",
        beta=float(beta),
        fields=base.fields,
        monotone_order=(0, 1) if ferro else None,
        monotone_verified=ferro,
        params=params,
    )


def hardcore(fugacity: float) -> SpinModel:
    """Hard-core model: spin 1 is an occupied site, adjacent occupied sites forbidden."""
    if fugacity <= 0:
        raise ValueError("fugacity must be positive")
    hard = np.array([[False, False], [False, True]])
    return SpinModel(
        q=2,
        U=np.zeros((2, 2)),
        W=np.array([0.0, math.log(fugacity)]),
        hard=hard,
        name="hardcore",
        monotone_order=(0, 1),
        alternating=True,
        monotone_verified=True,
        params={"lambda": float(fugacity)},
    )


def coloring(q: int) -> SpinModel:
    """Uniform measure on proper q-colourings."""
    return SpinModel(
        q=q,
        U=np.zeros((q, q)),
        W=np.zeros(q),
        hard=np.eye(q, dtype=bool),
        name="coloring",
        params={"q": int(q)},
    )


_PRESET_KEYS = {
    "ising": ({"beta"}, {"fields"}),
    "potts": ({"q", "beta"}, {"fields"}),
    "hardcore": ({"lambda"}, set()),
    "coloring": ({"q"}, set()),
}
_EXPLICIT_KEYS = ({"q", "U", "W"}, {"hard_mask", "monotone_order"})


def _check_keys(spec: Mapping, required: set, optional: set, where: str):
    unknown = set(spec) - required - optional
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    missing = required - set(spec)
    if missing:
        raise ConfigError(f"missing key(s) in {where}: {', '.join(sorted(missing))}")


def model_from_dict(spec: Mapping) -> SpinModel:
    """Build a model from its JSON description (strict keys)."""
    spec = dict(spec)
    if "preset" in spec:
        preset = spec.pop("preset")
        if preset not in _PRESET_KEYS:
            raise ConfigError(f"unknown model preset {preset!r}")
        _check_keys(spec, *_PRESET_KEYS[preset], where=f"model ({preset})")
        if preset == "ising":
            return ising(spec["beta"], spec.get("fields"))
        if preset == "potts":
            return potts(spec["q"], spec["beta"], spec.get("fields"))
        if preset == "hardcore":
            return hardcore(spec["lambda"])
        return coloring(spec["q"])
    _check_keys(spec, *_EXPLICIT_KEYS, where="model")
    q = spec["q"]
    hard = np.asarray(spec.get("hard_mask", np.zeros((q, q))), dtype=bool)
    order = spec.get("monotone_order")
    return SpinModel(
        q=q,
        U=np.asarray(spec["U"], dtype=np.float64),
        W=np.asarray(spec["W"], dtype=np.float64),
        hard=hard,
        monotone_order=None if order is None else tuple(order),
        monotone_verified=False,
    )


@dataclass(frozen=True, eq=False)
class BoundaryCondition:
    """Partial spin assignment on the exterior boundary; empty means free."""

    assignment: Mapping = field(default_factory=dict)

    @classmethod
    def free(cls) -> "BoundaryCondition":
        return cls({})

    @classmethod
    def constant(cls, cube: LatticeCube, spin: int) -> "BoundaryCondition":
        return cls({tuple(b): int(spin) for b in cube.boundary.tolist()})

    @property
    def is_free(self) -> bool:
        return not self.assignment

    def with_site(self, coord, spin: int) -> "BoundaryCondition":
        new = dict(self.assignment)
        new[tuple(int(c) for c in coord)] = int(spin)
        return BoundaryCondition(new)

    def validate(self, cube: LatticeCube, q: int):
        bset = {tuple(b) for b in cube.boundary.tolist()}
        for coord, s in self.assignment.items():
            if tuple(coord) not in bset:
                raise ValueError(f"{coord} is not a boundary point of the box")
            if not 0 <= s < q:
                raise ValueError(f"boundary spin {s} out of range for q={q}")

    def to_dict(self) -> dict:
        if self.is_free:
            return {"type": "free"}
        return {"type": "explicit", "sites": [[*c, s] for c, s in sorted(self.assignment.items())]}


def boundary_from_dict(spec: Optional[Mapping], cube: LatticeCube) -> BoundaryCondition:
    if spec is None:
        return BoundaryCondition.free()
    kind = spec.get("type")
    if kind == "free":
        _check_keys(spec, {"type"}, set(), "boundary")
        return BoundaryCondition.free()
    if kind == "constant":
        _check_keys(spec, {"type", "spin"}, set(), "boundary")
        return BoundaryCondition.constant(cube, spec["spin"])
    if kind == "explicit":
        _check_keys(spec, {"type", "sites"}, set(), "boundary")
        return BoundaryCondition({tuple(s[:-1]): int(s[-1]) for s in spec["sites"]})
    raise ConfigError(f"unknown boundary type {kind!r}")


def local_fields(model: SpinModel, cube: LatticeCube, bc: BoundaryCondition):
    """Per-vertex potentials including the boundary.

    Returns ``(h, allowed)`` of shape ``(n, q)``: ``h[v, s]`` is ``W(s)`` plus
    the edge terms against boundary spins, ``allowed[v, s]`` is False when a
    boundary spin forbids ``s`` at ``v``.
    """
    h = np.tile(model.W, (cube.n, 1))
    allowed = np.ones((cube.n, model.q), dtype=bool)
    if bc.is_free:
        return h, allowed
    bspin = np.full(len(cube.boundary), -1, dtype=np.int64)
    for coord, s in bc.assignment.items():
        bspin[cube.boundary_index(coord)] = s
    for v, b in cube.boundary_edges:
        s = bspin[b]
        if s >= 0:
            h[v] += model.U[s]
            allowed[v] &= ~model.hard[s]
    return h, allowed


def hamiltonian(model: SpinModel, cube: LatticeCube, bc: BoundaryCondition, config) -> float:
    """Energy ``H(sigma)``; ``math.inf`` for configurations violating a hard constraint."""
    config = np.asarray(config, dtype=np.int64)
    if config.shape != (cube.n,):
        raise ValueError(f"configuration must have length {cube.n}")
    if config.min(initial=0) < 0 or config.max(initial=0) >= model.q:
        raise ValueError("spin out of range")
    h, allowed = local_fields(model, cube, bc)
    verts = np.arange(cube.n)
    su, sv = config[cube.edges[:, 0]], config[cube.edges[:, 1]]
    if not allowed[verts, config].all() or model.hard[su, sv].any():
        return math.inf
    return -float(model.U[su, sv].sum() + h[verts, config].sum())

"""Edwards-Sokal joint space of edge sets and spins, and its factor kernels.

The joint space holds pairs ``(A, sigma)`` with ``A`` a set of monochromatic
edges of ``sigma``. Edge sets are bitmasks over ``cube.edges``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CapacityError, UnsupportedModelError
from ..measures import SpinSystem
from . import _loops
from .samplers import edge_probability, tilings_for

ES_EDGE_LIMIT = 10
ES_VERTEX_LIMIT = 8
ES_JOINT_LIMIT = 4096


def _check(system: SpinSystem):
    if not system.model.is_potts_zero_field or not system.bc.is_free:
        raise UnsupportedModelError("the joint measure is defined for zero-field Potts with free boundary")
    if system.cube.num_edges > ES_EDGE_LIMIT or system.n > ES_VERTEX_LIMIT:
        raise CapacityError(f"|E| <= {ES_EDGE_LIMIT}, n <= {ES_VERTEX_LIMIT}",
                            f"joint-space enumeration needs |E| <= {ES_EDGE_LIMIT} and n <= {ES_VERTEX_LIMIT}")


def monochromatic_mask(system: SpinSystem, config) -> int:
    config = np.asarray(config)
    eu, ev = system.cube.edges[:, 0], system.cube.edges[:, 1]
    mono = config[eu] == config[ev]
    return int(np.sum(mono.astype(np.int64) << np.arange(len(mono), dtype=np.int64)))


def es_joint_weight(system: SpinSystem, edge_mask: int, config) -> float:
    """Unnormalised joint weight ``p^|A| (1-p)^|E \\ A|`` if ``A`` is monochromatic, else 0."""
    _check(system)
    mono = monochromatic_mask(system, config)
    if edge_mask & ~mono:
        return 0.0
    p = edge_probability(system.model.beta)
    k = bin(int(edge_mask)).count("1")
    return p ** k * (1.0 - p) ** (system.cube.num_edges - k)


def es_spin_marginal(system: SpinSystem) -> np.ndarray:
    """Spin marginal of the joint measure by summing over every edge set.

    Needs no joint-space matrices, so it reaches any graph with at most
    ``ES_EDGE_LIMIT`` edges whose spin space can be enumerated. Returned in
    the order of ``system.state_space``.
    """
    if not system.model.is_potts_zero_field or not system.bc.is_free:
        raise UnsupportedModelError("the joint measure is defined for zero-field Potts with free boundary")
    E = system.cube.num_edges
    if E > ES_EDGE_LIMIT:
        raise CapacityError(f"|E| <= {ES_EDGE_LIMIT}", f"{E} edges exceed the joint-space guard")
    conf = system.state_space.configs
    eu, ev = system.cube.edges[:, 0], system.cube.edges[:, 1]
    mono = ((conf[:, eu] == conf[:, ev]).astype(np.int64) << np.arange(E, dtype=np.int64)).sum(axis=1)
    p = edge_probability(system.model.beta)
    marg = np.zeros(len(conf))
    for a in range(1 << E):
        k = bin(a).count("1")
        marg += np.where((a & ~mono) == 0, p ** k * (1.0 - p) ** (E - k), 0.0)
    return marg / marg.sum()


def _submasks(mask: int):
    sub = mask
    out = []
    while True:
        out.append(sub)
        if sub == 0:
            break
        sub = (sub - 1) & mask
    return out[::-1]


@dataclass(eq=False)
class ESFactorization:
    """Factor kernels on the joint space.

    ``T`` maps spins to joint states (add a random monochromatic edge set),
    ``Tstar`` forgets the edge set. ``R`` recolours all clusters, ``Q`` the
    isolated vertices and ``Qk[k]`` the isolated vertices of tiling ``k``.
    ``nu`` is the joint probability vector.
    """

    edge_masks: np.ndarray
    state_index: np.ndarray
    nu: np.ndarray
    T: np.ndarray
    Tstar: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    Qk: list

    def spin_marginal(self) -> np.ndarray:
        return np.bincount(self.state_index, weights=self.nu, minlength=self.T.shape[0])


def es_factorize(system: SpinSystem, L: int | None = None) -> ESFactorization:
    """Enumerate the joint space and its kernels; ``Qk`` is filled when ``L`` is given."""
    _check(system)
    q, n, E = system.q, system.n, system.cube.num_edges
    space = system.state_space
    N = len(space)
    mono = [monochromatic_mask(system, c) for c in space.configs]
    masks, states = [], []
    for i, m in enumerate(mono):
        for a in _submasks(m):
            masks.append(a)
            states.append(i)
    J = len(masks)
    if J > ES_JOINT_LIMIT:
        raise CapacityError(f"joint states <= {ES_JOINT_LIMIT}", f"joint space has {J} states")
    masks = np.array(masks, dtype=np.int64)
    states = np.array(states, dtype=np.int64)
    ncomp, iso = _loops.subset_components(n, system.cube.edges)
    k = np.array([bin(int(a)).count("1") for a in masks])
    p = edge_probability(system.model.beta)

    w = p ** k * (1.0 - p) ** (E - k)
    nu = w / w.sum()
    mono_k = np.array([bin(m).count("1") for m in mono])[states]
    T = np.zeros((N, J))
    T[states, np.arange(J)] = p ** k * (1.0 - p) ** (mono_k - k)
    Tstar = np.zeros((J, N))
    Tstar[np.arange(J), states] = 1.0

    conf = space.configs.astype(np.int64)
    same_A = masks[:, None] == masks[None, :]
    diff = conf[states][:, None, :] != conf[states][None, :, :]
    dmask = (diff.astype(np.int64) << np.arange(n, dtype=np.int64)).sum(axis=2)
    R = np.where(same_A, float(q) ** (-ncomp[masks])[:, None].astype(float), 0.0)

    def isolated_kernel(block_mask):
        iso_b = iso[masks] & block_mask
        cnt = np.array([bin(int(x)).count("1") for x in iso_b])
        ok = same_A & ((dmask & ~iso_b[:, None]) == 0)
        return np.where(ok, (float(q) ** -cnt.astype(float))[:, None], 0.0)

    Q = isolated_kernel((1 << n) - 1)
    Qk = []
    if L is not None:
        til = tilings_for(system, L)
        for j in range(til.m):
            Qk.append(isolated_kernel(int(sum(1 << int(v) for v in til.block(j)))))
    return ESFactorization(masks, states, nu, T, Tstar, R, Q, Qk)

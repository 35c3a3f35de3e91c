"""Finite boxes of Z^d, parity classes, scan orderings and the tiling family."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class LatticeCube:
    """Induced subgraph of Z^d on a box ``[0, s_1) x ... x [0, s_d)``.

    Vertices are indexed in row-major lexicographic order of their
    coordinates. ``edges`` holds sorted index pairs ``(u, v)`` with ``u < v``;
    ``boundary`` holds the exterior lattice points adjacent to the box and
    ``boundary_edges`` the ``(vertex, boundary point)`` index pairs joining them.
    """

    d: int
    sides: tuple
    vertices: np.ndarray
    edges: np.ndarray
    boundary: np.ndarray
    boundary_edges: np.ndarray
    nbr_ptr: np.ndarray = field(repr=False)
    nbr_idx: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def index(self, coord) -> int:
        """Vertex index of an in-box coordinate tuple."""
        coord = tuple(int(c) for c in coord)
        if len(coord) != self.d or any(not 0 <= c < s for c, s in zip(coord, self.sides)):
            raise ValueError(f"coordinate {coord} is not in the box {self.sides}")
        return int(np.ravel_multi_index(coord, self.sides))

    def boundary_index(self, coord) -> int:
        coord = tuple(int(c) for c in coord)
        hits = np.flatnonzero((self.boundary == np.asarray(coord)).all(axis=1))
        if len(hits) == 0:
            raise ValueError(f"{coord} is not a boundary point of the box {self.sides}")
        return int(hits[0])

    def neighbors(self, v: int) -> np.ndarray:
        return self.nbr_idx[self.nbr_ptr[v]:self.nbr_ptr[v + 1]]

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        adj[self.edges[:, 0], self.edges[:, 1]] = True
        adj[self.edges[:, 1], self.edges[:, 0]] = True
        return adj

    def to_dict(self) -> dict:
        return {"d": self.d, "sides": list(self.sides)}


def build_cube(d: int, sides: Sequence[int]) -> LatticeCube:
    """Build the box with the given per-axis extents.

    >>> cube = build_cube(2, [2, 2])
    >>> cube.n, cube.num_edges, len(cube.boundary)
    (4, 4, 8)
    """
    sides = tuple(int(s) for s in sides)
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d!r}")
    if len(sides) != d:
        raise ValueError(f"expected {d} extents, got {len(sides)}")
    if any(s < 1 for s in sides):
        raise ValueError(f"extents must be positive, got {sides}")

    vertices = np.indices(sides).reshape(d, -1).T.astype(np.int64)
    n = len(vertices)
    idx = np.arange(n).reshape(sides)

    edges = []
    for axis in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[axis] = slice(0, sides[axis] - 1)
        hi[axis] = slice(1, sides[axis])
        edges.append(np.stack([idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()], axis=1))
    edges = np.concatenate(edges).astype(np.int64) if edges else np.zeros((0, 2), np.int64)
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]

    outside = {}
    for v, coord in enumerate(vertices):
        for axis in range(d):
            for step in (-1, 1):
                c = coord.copy()
                c[axis] += step
                if not 0 <= c[axis] < sides[axis]:
                    outside.setdefault(tuple(int(x) for x in c), []).append(v)
    boundary = np.array(sorted(outside), dtype=np.int64).reshape(-1, d)
    bpos = {tuple(b): i for i, b in enumerate(boundary.tolist())}
    bedges = sorted((v, bpos[b]) for b, vs in outside.items() for v in vs)
    boundary_edges = np.array(bedges, dtype=np.int64).reshape(-1, 2)

    nbrs = [[] for _ in range(n)]
    for u, v in edges:
        nbrs[u].append(v)
        nbrs[v].append(u)
    nbr_ptr = np.zeros(n + 1, dtype=np.int64)
    nbr_ptr[1:] = np.cumsum([len(x) for x in nbrs])
    nbr_idx = np.array([w for x in nbrs for w in sorted(x)], dtype=np.int64)

    return LatticeCube(d, sides, vertices, edges, boundary, boundary_edges, nbr_ptr, nbr_idx)


def cube_from_dict(spec: dict) -> LatticeCube:
    return build_cube(spec["d"], spec["sides"])


def parity(cube: LatticeCube) -> np.ndarray:
    """0 for even vertices (even coordinate sum), 1 for odd ones."""
    return cube.vertices.sum(axis=1) % 2


def even_odd_partition(cube: LatticeCube):
    """Return ``(V_e, V_o)`` as sorted vertex-index arrays."""
    par = parity(cube)
    return np.flatnonzero(par == 0), np.flatnonzero(par == 1)


@dataclass(frozen=True, eq=False)
class VertexOrdering:
    order: np.ndarray
    pathlen: int


def longest_path_subsequence(cube: LatticeCube, order) -> int:
    """Length of the longest subsequence of ``order`` forming a path in the graph.

    Dynamic programming over positions: the best path ending at a vertex
    extends the best path ending at an earlier-placed neighbour.
    """
    order = np.asarray(order, dtype=np.int64)
    if sorted(order.tolist()) != list(range(cube.n)):
        raise ValueError("order must be a permutation of the vertex indices")
    pos = np.empty(cube.n, dtype=np.int64)
    pos[order] = np.arange(cube.n)
    best = np.zeros(cube.n, dtype=np.int64)
    for v in order:
        prev = [best[u] for u in cube.neighbors(v) if pos[u] < pos[v]]
        best[v] = 1 + max(prev, default=0)
    return int(best.max()) if cube.n else 0


def make_ordering(cube: LatticeCube, order) -> VertexOrdering:
    order = np.asarray(order, dtype=np.int64)
    return VertexOrdering(order, longest_path_subsequence(cube, order))


def even_odd_ordering(cube: LatticeCube) -> VertexOrdering:
    """The alternating-scan ordering: all even vertices, then all odd ones."""
    even, odd = even_odd_partition(cube)
    return make_ordering(cube, np.concatenate([even, odd]))


def lexicographic_ordering(cube: LatticeCube) -> VertexOrdering:
    return make_ordering(cube, np.arange(cube.n))


@dataclass(frozen=True, eq=False)
class TilingFamily:
    """The ``m = (L+3)^d`` translated cube patterns restricted to a box.

    ``tilings[k]`` is a tuple of cubes, each a sorted vertex-index array.
    Cubes cut by the box are kept as partial cubes.
    """

    L: int
    offsets: np.ndarray
    tilings: tuple

    @property
    def m(self) -> int:
        return len(self.tilings)

    def block(self, k: int) -> np.ndarray:
        """All vertices of tiling ``k``."""
        cubes = self.tilings[k]
        if not cubes:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate(cubes))

    def membership(self, n: int) -> np.ndarray:
        mask = np.zeros((self.m, n), dtype=bool)
        for k in range(self.m):
            mask[k, self.block(k)] = True
        return mask

    def to_dict(self) -> dict:
        return {"L": self.L}


def build_tilings(cube: LatticeCube, L: int) -> TilingFamily:
    """Tilings by cubes of ``L^d`` sites spaced with period ``L + 3``.

    For offset ``x`` the cubes are centred at ``x + h (L + 3)`` and cover
    ``L`` consecutive sites per axis, so closest sites of neighbouring cubes
    are at L1 distance 4.
    """
    if int(L) != L or L < 1 or L % 2 == 0:
        raise ValueError(f"L must be a positive odd integer, got {L!r}")
    L = int(L)
    period = L + 3
    half = (L - 1) // 2
    offsets = np.array(list(product(range(period), repeat=cube.d)), dtype=np.int64).reshape(-1, cube.d)
    tilings = []
    for x in offsets:
        t = cube.vertices - x + half
        inside = np.all(t % period < L, axis=1)
        cells = {}
        for v in np.flatnonzero(inside):
            cells.setdefault(tuple((t[v] // period).tolist()), []).append(v)
        tilings.append(tuple(np.array(cells[h], dtype=np.int64) for h in sorted(cells)))
    return TilingFamily(L, offsets, tuple(tilings))

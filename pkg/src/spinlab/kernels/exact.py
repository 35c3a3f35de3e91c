"""Exact transition matrices over the enumerated state space."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.sparse as sp

from ..errors import CapacityError, UnsupportedModelError
from ..lattice import even_odd_partition
from ..measures import SpinSystem, StateSpace
from . import _loops
from .samplers import check_cover, edge_probability, resolve_order, tilings_for
from .spec import KernelSpec, spec_from_dict

DENSE_LIMIT = 4096
SPARSE_NNZ_LIMIT = 50_000_000
SW_EDGE_LIMIT = 13
SW_VERTEX_LIMIT = 9
_DENSIFY_AT = 0.1


@dataclass(eq=False)
class ExactChain:
    """Transition matrix on ``space`` with stationary candidate ``pi``.

    ``matrix`` is a dense array for at most ``DENSE_LIMIT`` states and a CSR
    matrix otherwise. ``reversible`` records whether the construction is
    known to be reversible (None when unknown).
    """

    space: StateSpace
    matrix: object
    pi: np.ndarray
    name: str = ""
    reversible: bool | None = None

    @property
    def size(self) -> int:
        return len(self.pi)

    @property
    def is_dense(self) -> bool:
        return isinstance(self.matrix, np.ndarray)

    def dense(self) -> np.ndarray:
        return self.matrix if self.is_dense else self.matrix.toarray()

    def row_sum_residual(self) -> float:
        rows = np.asarray(self.matrix.sum(axis=1)).ravel()
        return float(np.max(np.abs(rows - 1.0)))

    def invariance_residual(self) -> float:
        """``max |pi P - pi|``."""
        return float(np.max(np.abs(np.asarray(self.pi @ self.matrix).ravel() - self.pi)))

    def detailed_balance_residual(self) -> float:
        """``max |pi(x) P(x, y) - pi(y) P(y, x)|``."""
        if self.is_dense:
            F = self.pi[:, None] * self.matrix
            return float(np.max(np.abs(F - F.T)))
        F = sp.diags(self.pi) @ self.matrix
        D = (F - F.T).tocoo()
        return float(np.max(np.abs(D.data), initial=0.0))

    def adjoint(self) -> "ExactChain":
        """Time reversal ``P*(x, y) = pi(y) P(y, x) / pi(x)``."""
        if self.is_dense:
            M = self.matrix.T * self.pi[None, :] / self.pi[:, None]
        else:
            M = (sp.diags(1.0 / self.pi) @ self.matrix.T @ sp.diags(self.pi)).tocsr()
        return ExactChain(self.space, M, self.pi, f"adjoint({self.name})", self.reversible)

    def to_csv(self, path):
        """Write the dense matrix with state codes as header row and column."""
        M = self.dense()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["state"] + [str(c) for c in self.space.codes])
            for code, row in zip(self.space.codes, M):
                w.writerow([str(code)] + ["%.17g" % x for x in row])


def _group_codes(system: SpinSystem, region) -> np.ndarray:
    """Codes of the configuration outside ``region`` (region spins zeroed)."""
    space = system.state_space
    q, n = system.q, system.n
    region = np.asarray(region, dtype=np.int64)
    powers = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return space.codes - space.configs[:, region].astype(np.int64) @ powers[region]


def heatbath_matrix(system: SpinSystem, region) -> sp.csr_matrix:
    """``K_A(x, y) = 1(x = y off A) pi(y) / pi(states agreeing with x off A)``."""
    pi = system.gibbs.probs
    N = len(pi)
    region = np.unique(np.asarray(region, dtype=np.int64))
    if len(region) == 0:
        return sp.identity(N, format="csr")
    _, g = np.unique(_group_codes(system, region), return_inverse=True)
    g = g.ravel()
    Zg = np.bincount(g, weights=pi)
    order = np.argsort(g, kind="stable")
    sizes = np.bincount(g)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    nnz = int(np.sum(sizes.astype(np.int64) ** 2))
    if nnz > SPARSE_NNZ_LIMIT:
        raise CapacityError(f"nnz <= {SPARSE_NNZ_LIMIT}",
                            f"heat-bath matrix needs {nnz} nonzeros, above {SPARSE_NNZ_LIMIT}")
    rows, cols = [], []
    for G in np.unique(sizes):
        sel = np.flatnonzero(sizes == G)
        members = order[starts[sel][:, None] + np.arange(G)[None, :]]
        rows.append(np.repeat(members, G, axis=1).ravel())
        cols.append(np.tile(members, (1, G)).ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = pi[cols] / Zg[g[rows]]
    return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))


def _matmul(a, b):
    c = a @ b
    if sp.issparse(c):
        N = c.shape[0]
        if c.nnz > _DENSIFY_AT * N * N and N <= DENSE_LIMIT:
            return c.toarray()
        if c.nnz > SPARSE_NNZ_LIMIT:
            raise CapacityError(f"nnz <= {SPARSE_NNZ_LIMIT}", "product kernel fills in beyond the sparse limit")
    return c


def _mean(mats):
    out = reduce(lambda a, b: a + b, mats)
    return out / len(mats) if not sp.issparse(out) else (out / len(mats)).tocsr()


def _identity(N):
    return sp.identity(N, format="csr")


class _SWTables:
    """Subset-sum tables for the Swendsen-Wang family on one system."""

    def __init__(self, system: SpinSystem):
        if not system.model.is_potts_zero_field or not system.bc.is_free:
            raise UnsupportedModelError(
                "Swendsen-Wang kernels need a ferromagnetic zero-field Potts model with free boundary")
        cube = system.cube
        E, n, q = cube.num_edges, cube.n, system.q
        if E > SW_EDGE_LIMIT or n > SW_VERTEX_LIMIT:
            raise CapacityError(f"|E| <= {SW_EDGE_LIMIT}, n <= {SW_VERTEX_LIMIT}",
                                f"exact Swendsen-Wang matrices need |E| <= {SW_EDGE_LIMIT} and n <= {SW_VERTEX_LIMIT}")
        self.q, self.E, self.n = q, E, n
        self.p = edge_probability(system.model.beta)
        self.ncomp, self.iso = _loops.subset_components(n, cube.edges)
        masks = np.arange(1 << E, dtype=np.int64)
        self.popcount = np.array([bin(int(x)).count("1") for x in masks], dtype=np.int64)
        conf = system.state_space.configs.astype(np.int64)
        eu, ev = cube.edges[:, 0], cube.edges[:, 1]
        mono = conf[:, eu] == conf[:, ev]
        self.mono = (mono.astype(np.int64) << np.arange(E, dtype=np.int64)).sum(axis=1)
        self.lead = (1.0 - self.p) ** self.popcount[self.mono]  # (1-p)^{|E(sigma)|}
        diff = conf[:, None, :] != conf[None, :, :]
        self.dmask = (diff.astype(np.int64) << np.arange(n, dtype=np.int64)).sum(axis=2)
        inc = np.zeros(1 << n, dtype=np.int64)
        vmasks = np.arange(1 << n)
        for v in range(n):
            touching = int(np.sum(1 << np.flatnonzero((eu == v) | (ev == v))))
            inc[(vmasks >> v) & 1 == 1] |= touching
        self.incident = inc

    def zeta(self, log_q_exponent: np.ndarray) -> np.ndarray:
        """``g(F) = sum_{A subset F} r^|A| q^(-x(A))`` for every edge set ``F``."""
        r = self.p / (1.0 - self.p)
        f = r ** self.popcount.astype(np.float64) * float(self.q) ** (-log_q_exponent.astype(np.float64))
        for i in range(self.E):
            f = f.reshape(-1, 2, 1 << i)
            f[:, 1, :] += f[:, 0, :]
        return f.reshape(-1)

    def sw(self) -> np.ndarray:
        g = self.zeta(self.ncomp)
        F = self.mono[:, None] & self.mono[None, :]
        return self.lead[:, None] * g[F]

    def isolated(self, block_mask: int | None = None) -> np.ndarray:
        full = (1 << self.n) - 1
        bk = full if block_mask is None else block_mask
        iso_count = np.array([bin(int(x)).count("1") for x in (self.iso & bk)], dtype=np.int64)
        g = self.zeta(iso_count)
        F = self.mono[:, None] & ~self.incident[self.dmask]
        M = self.lead[:, None] * g[F]
        if block_mask is not None:
            M = np.where((self.dmask & ~bk) == 0, M, 0.0)
        return M


def _sw_tables(system: SpinSystem) -> _SWTables:
    key = ("sw_tables",)
    if key not in system.cache:
        system.cache[key] = _SWTables(system)
    return system.cache[key]


def _vertex_mask(verts) -> int:
    return int(sum(1 << int(v) for v in verts))


def kernel_matrix(system: SpinSystem, spec) -> object:
    """Transition matrix (dense or CSR) of ``spec`` on the system's state space."""
    spec = spec_from_dict(spec)
    p, kind = spec.params, spec.kind
    N = len(system.state_space)
    if kind == "glauber":
        return _mean([heatbath_matrix(system, [v]) for v in range(system.n)])
    if kind == "heatbath_block":
        return heatbath_matrix(system, p["block"])
    if kind == "block_dynamics":
        check_cover(system, p["blocks"])
        return _mean([heatbath_matrix(system, b) for b in p["blocks"]])
    if kind == "even_odd":
        return _mean([heatbath_matrix(system, b) for b in even_odd_partition(system.cube)])
    if kind == "tiled_heatbath":
        til = tilings_for(system, p["L"])
        return _mean([heatbath_matrix(system, til.block(k)) for k in range(til.m)])
    if kind == "tiled_generic":
        til = tilings_for(system, p["L"])
        if p["inner"] == "isolated":
            return kernel_matrix(system, KernelSpec("tiled_isolated_sw", {"L": p["L"]}))
        if p["inner"] == "heatbath":
            return _mean([heatbath_matrix(system, til.block(k)) for k in range(til.m)])
        even, odd = even_odd_partition(system.cube)
        mats = []
        for k in range(til.m):
            b = til.block(k)
            mats.append(_mean([heatbath_matrix(system, np.intersect1d(b, even)),
                               heatbath_matrix(system, np.intersect1d(b, odd))]))
        return _mean(mats)
    if kind in ("sw", "isolated_sw", "tiled_isolated_sw"):
        if N > DENSE_LIMIT:
            raise CapacityError(f"states <= {DENSE_LIMIT}", "exact Swendsen-Wang matrices are dense")
        tab = _sw_tables(system)
        if kind == "sw":
            return tab.sw()
        if kind == "isolated_sw":
            return tab.isolated()
        til = tilings_for(system, p["L"])
        return _mean([tab.isolated(_vertex_mask(til.block(k))) for k in range(til.m)])
    if kind == "scan":
        seq = resolve_order(system, p["order"])
        return reduce(_matmul, [heatbath_matrix(system, [v]) for v in seq], _identity(N))
    if kind == "composition":
        return reduce(_matmul, [kernel_matrix(system, k) for k in p["kernels"]], _identity(N))
    if kind == "lazy":
        c = float(p["hold"])
        base = kernel_matrix(system, p["base"])
        I = np.eye(N) if isinstance(base, np.ndarray) else _identity(N)
        return c * I + (1.0 - c) * base
    if kind == "reversiblization":
        base = kernel_matrix(system, p["base"])
        pi = system.gibbs.probs
        if isinstance(base, np.ndarray):
            adj = base.T * pi[None, :] / pi[:, None]
        else:
            adj = (sp.diags(1.0 / pi) @ base.T @ sp.diags(pi)).tocsr()
        return _matmul(base, adj)
    raise ValueError(f"unknown kernel kind {kind!r}")


_REVERSIBLE = {"glauber", "heatbath_block", "block_dynamics", "even_odd", "tiled_heatbath", "tiled_generic",
               "sw", "isolated_sw", "tiled_isolated_sw", "reversiblization"}


def _known_reversible(spec: KernelSpec):
    if spec.kind in _REVERSIBLE:
        return True
    if spec.kind == "lazy":
        return _known_reversible(spec.params["base"])
    return None


def exact_matrix(system: SpinSystem, spec) -> ExactChain:
    """Exact chain of ``spec`` on ``system``.

    Dense for at most ``DENSE_LIMIT`` states, CSR beyond that (only for the
    heat-bath kinds and their sparse combinations).
    """
    spec = spec_from_dict(spec)
    M = kernel_matrix(system, spec)
    N = len(system.state_space)
    if sp.issparse(M) and N <= DENSE_LIMIT:
        M = M.toarray()
    elif sp.issparse(M):
        M = M.tocsr()
    return ExactChain(system.state_space, M, system.gibbs.probs, spec.to_json(), _known_reversible(spec))


def heatbath_chain(system: SpinSystem, region) -> ExactChain:
    return exact_matrix(system, KernelSpec("heatbath_block", {"block": [int(v) for v in np.atleast_1d(region)]}))

"""Exact verification of gap comparison inequalities and Dirichlet-form facts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NumericalError
from .kernels.exact import ExactChain, _sw_tables, _vertex_mask, exact_matrix, heatbath_matrix
from .kernels.samplers import tilings_for
from .kernels.spec import KernelSpec
from .lattice import even_odd_partition
from .measures import SpinSystem
from .spectral import PSD_TOL, dirichlet_form, spectral_gap, variance

MARGIN_TOL = 1e-9

INEQUALITIES = (
    "sw_ge_isolated", "isolated_ge_tiled", "tiled_generic", "block_ge_even_odd",
    "sts_ge_mixture", "sts_le_bound", "local_gap_bound",
)


@dataclass
class InequalityReport:
    """Both sides of ``lhs >= rhs`` with the signed margin ``lhs - rhs``."""

    name: str
    instance: str
    lhs: float
    rhs: float
    margin: float
    holds: bool

    def to_row(self) -> dict:
        return asdict(self)


def _report(name, instance, lhs, rhs, tol=MARGIN_TOL) -> InequalityReport:
    margin = float(lhs - rhs)
    return InequalityReport(name, instance, float(lhs), float(rhs), margin, margin >= -tol)


def _dense(system: SpinSystem, matrix) -> ExactChain:
    M = matrix.toarray() if hasattr(matrix, "toarray") else np.asarray(matrix)
    return ExactChain(system.state_space, M, system.gibbs.probs)


def gap_of(system: SpinSystem, matrix) -> float:
    return spectral_gap(_dense(system, matrix)).gap


def exterior_groups(system: SpinSystem, region):
    """State-index arrays grouped by the configuration outside ``region``."""
    space = system.state_space
    region = np.asarray(region, dtype=np.int64)
    outside = np.setdiff1d(np.arange(system.n), region)
    codes = space.configs[:, outside].astype(np.int64) @ (system.q ** np.arange(len(outside), dtype=np.int64))
    _, inv = np.unique(codes, return_inverse=True)
    inv = inv.ravel()
    order = np.argsort(inv, kind="stable")
    bounds = np.flatnonzero(np.diff(inv[order])) + 1
    return np.split(order, bounds)


def conditional_gaps(system: SpinSystem, matrix, region) -> np.ndarray:
    """Gap of ``matrix`` restricted to each exterior configuration of ``region``.

    ``matrix`` must leave the exterior of ``region`` unchanged; each block is
    then a chain for the conditional measure given that exterior.
    """
    M = matrix.toarray() if hasattr(matrix, "toarray") else np.asarray(matrix)
    pi = system.gibbs.probs
    gaps = []
    for idx in exterior_groups(system, region):
        sub = M[np.ix_(idx, idx)]
        if np.max(np.abs(sub.sum(axis=1) - 1.0)) > 1e-10:
            raise NumericalError("kernel moves the exterior of the region")
        if len(idx) == 1:
            gaps.append(1.0)
            continue
        w = pi[idx] / pi[idx].sum()
        gaps.append(spectral_gap(ExactChain(None, sub, w)).gap)
    return np.array(gaps)


def inner_matrix(system: SpinSystem, L: int, inner: str, k: int):
    """Kernel applied inside tiling ``k`` by the generic tiled dynamics."""
    til = tilings_for(system, L)
    block = til.block(k)
    if inner == "heatbath":
        return heatbath_matrix(system, block)
    if inner == "even_odd":
        even, odd = even_odd_partition(system.cube)
        return (heatbath_matrix(system, np.intersect1d(block, even))
                + heatbath_matrix(system, np.intersect1d(block, odd))) / 2.0
    if inner == "isolated":
        return _sw_tables(system).isolated(_vertex_mask(block))
    raise ValueError(f"unknown inner kernel {inner!r}")


def min_local_gap(system: SpinSystem, L: int, inner: str) -> float:
    """``min_{k, tau}`` of the conditional inner-kernel gaps."""
    til = tilings_for(system, L)
    best = 1.0
    for k in range(til.m):
        block = til.block(k)
        if len(block) == 0:
            continue
        best = min(best, float(conditional_gaps(system, inner_matrix(system, L, inner, k), block).min()))
    return best


def local_gap_bound(beta: float, d: int, L: int) -> float:
    """``(1/7) exp(-2 beta d L^d)``."""
    return math.exp(-2.0 * beta * d * L ** d) / 7.0


def sts_pair(S: np.ndarray, T: np.ndarray, pi: np.ndarray, a: float):
    """Gaps of ``S T S`` and ``a S + (1 - a) T``."""
    sts = spectral_gap(ExactChain(None, S @ T @ S, pi)).gap
    mix = spectral_gap(ExactChain(None, a * S + (1.0 - a) * T, pi)).gap
    return sts, mix


def verify_comparison(name: str, system: SpinSystem, instance: str = "", **params) -> InequalityReport:
    """Evaluate both sides of a named gap inequality exactly.

    Parameters by name: ``isolated_ge_tiled`` and ``local_gap_bound`` take
    ``L``; ``tiled_generic`` takes ``L`` and ``inner``; ``block_ge_even_odd``
    takes ``blocks``; the two ``sts_*`` checks take ``S_block``, ``T_block``
    and ``a``.
    """
    if name not in INEQUALITIES:
        raise ValueError(f"unknown inequality {name!r}; expected one of {INEQUALITIES}")

    def gap(spec):
        return spectral_gap(exact_matrix(system, spec)).gap

    if name == "sw_ge_isolated":
        return _report(name, instance, gap({"kind": "sw"}), gap({"kind": "isolated_sw"}))
    if name == "isolated_ge_tiled":
        L = params["L"]
        return _report(name, instance, gap({"kind": "isolated_sw"}), gap({"kind": "tiled_isolated_sw", "L": L}))
    if name == "tiled_generic":
        L, inner = params["L"], params["inner"]
        lhs = gap({"kind": "tiled_generic", "L": L, "inner": inner})
        rhs = gap({"kind": "tiled_heatbath", "L": L}) * min_local_gap(system, L, inner)
        return _report(name, instance, lhs, rhs)
    if name == "block_ge_even_odd":
        blocks = [list(map(int, b)) for b in params["blocks"]]
        lhs = gap({"kind": "block_dynamics", "blocks": blocks})
        return _report(name, instance, lhs, gap({"kind": "even_odd"}) / len(blocks))
    if name in ("sts_ge_mixture", "sts_le_bound"):
        a = float(params["a"])
        S = heatbath_matrix(system, params["S_block"]).toarray()
        T = heatbath_matrix(system, params["T_block"]).toarray()
        sts, mix = sts_pair(S, T, system.gibbs.probs, a)
        if name == "sts_ge_mixture":
            return _report(name, instance, sts, mix)
        return _report(name, instance, 3.0 / (a * a * (1.0 - a)) * mix, sts)
    # local_gap_bound
    L = params["L"]
    lhs = min_local_gap(system, L, "isolated")
    return _report(name, instance, lhs, local_gap_bound(system.model.beta, system.cube.d, L))


@dataclass
class VarianceFactsReport:
    """Worst residuals of the Dirichlet-form facts (all should be <= tolerance)."""

    decomposition: float = 0.0
    monotonicity: float = 0.0
    tensorization: float = 0.0
    commutation: float = 0.0
    product_rule: float = 0.0
    psd: float = 0.0
    checks: int = 0
    details: list = field(default_factory=list)

    def passed(self, tol: float = 1e-9) -> bool:
        return max(self.decomposition, self.monotonicity, self.tensorization, self.commutation,
                   self.product_rule, self.psd) <= tol


def conditional_variance_sum(system: SpinSystem, region, f) -> float:
    """``sum_tau mu(tau) Var(f | tau)`` over exterior configurations of ``region``."""
    pi = system.gibbs.probs
    total = 0.0
    for idx in exterior_groups(system, region):
        w = pi[idx]
        z = w.sum()
        total += z * variance(w / z, f[idx])
    return total


def _components(system: SpinSystem, verts):
    verts = set(int(v) for v in verts)
    comps = []
    while verts:
        stack = [verts.pop()]
        comp = []
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in system.cube.neighbors(v):
                if int(w) in verts:
                    verts.remove(int(w))
                    stack.append(int(w))
        comps.append(sorted(comp))
    return comps


def verify_variance_facts(system: SpinSystem, rng: np.random.Generator, n_functions: int = 100,
                          n_sets: int = 4) -> VarianceFactsReport:
    """Check the heat-bath Dirichlet-form facts on random sets and functions.

    * decomposition: ``E_A(f) = sum_tau mu(tau) Var_A^tau(f)``;
    * monotonicity: ``E_A(f) <= E_B(f)`` for ``A`` inside ``B``;
    * tensorization: ``E_U(f) <= sum_i E_{U_i}(f)`` for pairwise non-adjacent ``U_i``;
    * commutation: ``K_{U_i} K_{U_j} = K_{U_j} K_{U_i} = K_{U_i + U_j}``;
    * each ``K_A`` is positive semidefinite.
    """
    n = system.n
    pi = system.gibbs.probs
    rep = VarianceFactsReport()

    def chain(region):
        return ExactChain(system.state_space, heatbath_matrix(system, region).toarray(), pi)

    for _ in range(n_sets):
        B = np.flatnonzero(rng.random(n) < 0.7)
        if len(B) == 0:
            B = np.array([int(rng.integers(n))])
        A = B[rng.random(len(B)) < 0.5]
        U = np.flatnonzero(rng.random(n) < 0.6)
        parts = _components(system, U)
        KA, KB, KU = chain(A), chain(B), chain(U)
        Ks = [chain(p) for p in parts]
        rep.details.append({"A": A.tolist(), "B": B.tolist(), "U_parts": parts})

        for K in (KA, KB, KU, *Ks):
            rep.psd = max(rep.psd, -float(spectral_gap_min_eig(K)))
        for i in range(len(parts)):
            for j in range(i + 1, len(parts)):
                Ki, Kj = Ks[i].matrix, Ks[j].matrix
                Kij = heatbath_matrix(system, parts[i] + parts[j]).toarray()
                rep.commutation = max(rep.commutation, float(np.abs(Ki @ Kj - Kj @ Ki).max()))
                rep.product_rule = max(rep.product_rule, float(np.abs(Ki @ Kj - Kij).max()))

        for _ in range(n_functions):
            f = rng.standard_normal(len(pi))
            eA, eB, eU = dirichlet_form(KA, f), dirichlet_form(KB, f), dirichlet_form(KU, f)
            rep.decomposition = max(rep.decomposition, abs(eA - conditional_variance_sum(system, A, f)),
                                    abs(eB - conditional_variance_sum(system, B, f)))
            rep.monotonicity = max(rep.monotonicity, eA - eB)
            rep.tensorization = max(rep.tensorization, eU - sum(dirichlet_form(K, f) for K in Ks))
            rep.checks += 1
    rep.monotonicity = max(rep.monotonicity, 0.0)
    rep.tensorization = max(rep.tensorization, 0.0)
    rep.psd = max(rep.psd, 0.0)
    return rep


def spectral_gap_min_eig(chain: ExactChain) -> float:
    """Smallest eigenvalue of a reversible chain."""
    return spectral_gap(chain).lambda_min


__all__ = [
    "INEQUALITIES", "InequalityReport", "MARGIN_TOL", "PSD_TOL", "VarianceFactsReport",
    "conditional_gaps", "conditional_variance_sum", "exterior_groups", "gap_of", "inner_matrix",
    "local_gap_bound", "min_local_gap", "sts_pair", "verify_comparison", "verify_variance_facts",
]

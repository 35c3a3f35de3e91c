"""Spectral gaps, Dirichlet forms and variational checks for exact chains."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, NotReversibleError, NumericalError
from .kernels.exact import DENSE_LIMIT, ExactChain

REVERSIBILITY_TOL = 1e-8
PSD_TOL = 1e-9
POWER_TOL = 1e-9
POWER_MAX_ITER = 1_000_000


@dataclass
class SpectralReport:
    """Extreme eigenvalues and derived quantities of a reversible chain.

    ``gap`` is the absolute gap ``1 - max(|lambda2|, |lambda_min|)``.
    """

    gap: float
    lambda2: float
    lambda_min: float
    reversible: bool
    reversibility_residual: float
    psd: bool
    relaxation: float
    n_states: int
    method: str

    def to_dict(self) -> dict:
        return asdict(self)


def _symmetrized(chain: ExactChain):
    s = np.sqrt(chain.pi)
    if chain.is_dense:
        S = chain.matrix * s[:, None] / s[None, :]
        return (S + S.T) / 2.0
    S = sp.diags(s) @ chain.matrix @ sp.diags(1.0 / s)
    return ((S + S.T) / 2.0).tocsr()


def _require_reversible(chain: ExactChain) -> float:
    res = chain.detailed_balance_residual()
    if res > REVERSIBILITY_TOL:
        raise NotReversibleError(
            f"chain is not reversible (detailed-balance residual {res:.3g}); "
            "use relaxation_time, which goes through the reversiblization P P*")
    return res


def eigenvalues(chain: ExactChain) -> np.ndarray:
    """All eigenvalues (ascending) of a reversible chain with at most DENSE_LIMIT states."""
    _require_reversible(chain)
    if chain.size > DENSE_LIMIT:
        raise CapacityError(f"states <= {DENSE_LIMIT}", f"dense eigensolve limited to {DENSE_LIMIT} states")
    return np.linalg.eigvalsh(_symmetrized(chain) if chain.is_dense else _symmetrized(chain).toarray())


def _power(apply, v, tol, max_iter):
    """Dominant eigenvalue (by magnitude) of a symmetric operator, with sign.

    Stops when the residual ``||A v - theta v||`` is below ``tol``, which
    bounds the eigenvalue error by ``tol`` for symmetric operators.
    """
    v = v / np.linalg.norm(v)
    for _ in range(max_iter):
        w = apply(v)
        theta = float(v @ w)
        if np.linalg.norm(w - theta * v) <= tol:
            return theta
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
    raise NumericalError(f"power iteration did not converge in {max_iter} iterations")


def _extremes_power(chain: ExactChain, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    S = _symmetrized(chain)
    top = np.sqrt(chain.pi)
    top = top / np.linalg.norm(top)
    start = np.cos(np.arange(chain.size) * 0.7 + 0.3)  # deterministic start
    start = start - top * (top @ start)

    def deflated(x):
        y = S @ x
        return y - top * (top @ y)

    mu = _power(deflated, start, tol, max_iter)
    if mu >= 0:
        lam2 = mu
        shifted = _power(lambda x: deflated(x) - mu * x, start, tol, max_iter)
        lam_min = min(shifted + mu, lam2)
    else:
        lam_min = mu
        shifted = _power(lambda x: deflated(x) - mu * x, start, tol, max_iter)
        lam2 = max(shifted + mu, lam_min)
    return lam2, lam_min


def spectral_gap(chain: ExactChain, method: str = "auto") -> SpectralReport:
    """Spectral report of a reversible chain.

    Dense symmetric eigensolve up to ``DENSE_LIMIT`` states, power iteration
    with deflation of the stationary direction beyond (or with
    ``method="power"``).
    """
    res = _require_reversible(chain)
    if method == "auto":
        method = "dense" if chain.size <= DENSE_LIMIT else "power"
    if method == "dense":
        ev = eigenvalues(chain)
        if chain.size == 1:
            lam2 = lam_min = 1.0
        else:
            lam2, lam_min = float(ev[-2]), float(ev[0])
    elif method == "power":
        lam2, lam_min = _extremes_power(chain)
    else:
        raise ValueError(f"unknown method {method!r}")
    if chain.size == 1:
        gap = 1.0
    else:
        gap = 1.0 - max(abs(lam2), abs(lam_min))
    gap = max(gap, 0.0)
    relax = math.inf if gap <= 0 else 1.0 / gap
    return SpectralReport(gap, lam2, lam_min, True, res, lam_min >= -PSD_TOL, relax, chain.size, method)


def reversiblization(chain: ExactChain) -> ExactChain:
    """The multiplicative reversiblization ``P P*``."""
    adj = chain.adjoint()
    M = chain.matrix @ adj.matrix
    return ExactChain(chain.space, M, chain.pi, f"reversiblization({chain.name})", True)


def relaxation_time(chain: ExactChain) -> float:
    """``1/gap`` for reversible chains, ``1/(1 - sqrt(1 - gap(P P*)))`` otherwise."""
    if chain.detailed_balance_residual() <= REVERSIBILITY_TOL:
        return spectral_gap(chain).relaxation
    lam = spectral_gap(reversiblization(chain)).gap
    denom = 1.0 - math.sqrt(max(0.0, 1.0 - lam))
    return math.inf if denom <= 0 else 1.0 / denom


def is_psd(chain: ExactChain, tol: float = PSD_TOL) -> bool:
    return bool(eigenvalues(chain)[0] >= -tol)


def _vec(chain: ExactChain, f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (chain.size,):
        raise ValueError(f"function must have one value per state ({chain.size})")
    return f


def variance(pi, f) -> float:
    """Variance of ``f`` under the probability vector ``pi`` (or an ExactMeasure)."""
    pi = np.asarray(getattr(pi, "probs", pi), dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if f.shape != pi.shape:
        raise ValueError("function and measure have different lengths")
    mean = pi @ f
    return float(pi @ (f - mean) ** 2)


def dirichlet_form(chain: ExactChain, f, check: bool = True) -> float:
    """``<f, (I - P) f>_pi``, cross-checked against the pairwise form.

    The pairwise form is ``(1/2) sum_{x,y} pi(x) P(x,y) (f(x) - f(y))^2``.
    """
    f = _vec(chain, f)
    Pf = np.asarray(chain.matrix @ f).ravel()
    value = float(chain.pi @ (f * (f - Pf)))
    if check:
        if chain.is_dense:
            pair = 0.5 * float(np.sum(chain.pi[:, None] * chain.matrix * (f[:, None] - f[None, :]) ** 2))
        else:
            C = chain.matrix.tocoo()
            pair = 0.5 * float(np.sum(chain.pi[C.row] * C.data * (f[C.row] - f[C.col]) ** 2))
        scale = max(1.0, float(chain.pi @ f ** 2))
        if abs(pair - value) > 1e-10 * scale:
            raise NumericalError(f"Dirichlet forms disagree: {value!r} vs {pair!r}")
    return value


def gap_eigenfunction(chain: ExactChain) -> np.ndarray:
    """Eigenfunction (in the original basis) for the second-largest eigenvalue."""
    _require_reversible(chain)
    if chain.size > DENSE_LIMIT:
        raise CapacityError(f"states <= {DENSE_LIMIT}", "eigenvector needs a dense solve")
    _, vecs = np.linalg.eigh(_symmetrized(chain) if chain.is_dense else _symmetrized(chain).toarray())
    return vecs[:, -2] / np.sqrt(chain.pi)


def verify_variational_gap(chain: ExactChain, n_random: int = 200, rng=None, tol: float = 1e-8) -> bool:
    """Check that the gap equals the minimum Dirichlet/variance ratio.

    The second eigenfunction must attain the gap and ``n_random`` random
    functions must not go below it.
    """
    report = spectral_gap(chain)
    if not report.psd:
        raise NumericalError("variational check needs a positive semidefinite chain")
    gap = 1.0 - report.lambda2
    rng = np.random.default_rng(0) if rng is None else rng
    if chain.size < 2:
        return True
    f = gap_eigenfunction(chain)
    ok = abs(dirichlet_form(chain, f) / variance(chain.pi, f) - gap) <= tol
    for _ in range(n_random):
        g = rng.standard_normal(chain.size)
        var = variance(chain.pi, g)
        if var <= 0:
            continue
        ok &= dirichlet_form(chain, g) / var >= gap - tol
    return bool(ok)


def product_chain(factors) -> ExactChain:
    """Tensor product of chains: every coordinate moves independently."""
    size = int(np.prod([f.size for f in factors]))
    if size > DENSE_LIMIT:
        raise CapacityError(f"states <= {DENSE_LIMIT}", f"product space has {size} states")
    M = np.ones((1, 1))
    pi = np.ones(1)
    for f in factors:
        M = np.kron(M, f.dense())
        pi = np.kron(pi, f.pi)
    return ExactChain(None, M, pi, "product", True)


def product_chain_gap(factors, tol: float = 1e-9) -> float:
    """Gap of the tensor-product chain, asserted equal to the minimum factor gap."""
    factors = list(factors)
    if not factors:
        raise ValueError("need at least one factor")
    gap = spectral_gap(product_chain(factors)).gap
    expected = min(spectral_gap(f).gap for f in factors)
    if abs(gap - expected) > tol:
        raise NumericalError(f"product gap {gap!r} differs from minimum factor gap {expected!r}")
    return gap


def matrix_chain(matrix, pi, name: str = "") -> ExactChain:
    """Wrap a bare stochastic matrix and stationary vector as a chain."""
    return ExactChain(None, np.asarray(matrix, dtype=np.float64), np.asarray(pi, dtype=np.float64), name)


def tv_mixing_time(chain: ExactChain, eps: float = 0.25, max_steps: int = 100_000) -> int:
    """Smallest ``t`` with ``max_x ||P^t(x, .) - pi||_TV <= eps`` (dense chains)."""
    P = chain.dense()
    Pt = np.eye(chain.size)
    for t in range(max_steps + 1):
        if 0.5 * np.abs(Pt - chain.pi[None, :]).sum(axis=1).max() <= eps:
            return t
        Pt = Pt @ P
    raise NumericalError(f"chain did not mix within {max_steps} steps")


def mixing_lower_bound(gap: float, eps: float = 0.25) -> float:
    """``(1/gap - 1) log(1 / (2 eps))``."""
    if gap <= 0:
        return math.inf
    return (1.0 / gap - 1.0) * math.log(1.0 / (2.0 * eps))

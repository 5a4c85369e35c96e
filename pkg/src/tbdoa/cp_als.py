"""CP decomposition of a complex 3-order tensor by alternating least squares."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .tensor import FactorTriple, khatri_rao, unfold

GRAM_RCOND = 1e-12
MAX_MATCH_RANK = 5


class RankDeficientGramWarning(RuntimeWarning):
    """A factor Gram matrix was numerically singular; the pseudo-inverse was used."""


@dataclass(frozen=True)
class CpConfig:
    L: int
    max_iter: int = 500
    tol: float = 1e-8
    init: str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"rank L must be >= 1, got {self.L}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.init not in ("random", "data-driven"):
            raise ValueError(f"unknown init {self.init!r}; use 'random' or 'data-driven'")


@dataclass
class CpResult:
    factors: FactorTriple
    fit: float
    iterations: int
    converged: bool
    fit_history: list[float] = field(default_factory=list, repr=False)


def _gram_inverse(G):
    """Pseudo-inverse of a Hermitian PSD Gram matrix with a relative cutoff."""
    G = 0.5 * (G + G.conj().T)
    evals, evecs = np.linalg.eigh(G)
    cutoff = GRAM_RCOND * max(evals[-1], 0.0)
    keep = evals > cutoff
    if not np.all(keep):
        warnings.warn(
            "rank-deficient Gram matrix in ALS update; using pseudo-inverse",
            RankDeficientGramWarning,
            stacklevel=3,
        )
    inv = np.zeros_like(evals)
    inv[keep] = 1.0 / evals[keep]
    return (evecs * inv[None, :]) @ evecs.conj().T


def als_update(T, factors: FactorTriple, mode: int, unfolded=None) -> FactorTriple:
    """Exact least-squares update of one factor with the other two held fixed.

    For mode 1 this solves ``min_X ||unfold(T,1) - X (C kr B)^T||_F`` through
    the normal equations, using ``(C kr B)^H (C kr B) = (C^H C) * (B^H B)``.
    ``unfolded`` may carry the precomputed ``unfold(T, mode)``.
    """
    X, B, C = factors
    if mode == 1:
        P, Q_ = C, B
    elif mode == 2:
        P, Q_ = C, X
    elif mode == 3:
        P, Q_ = X, B
    else:
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    gram = (P.conj().T @ P) * (Q_.conj().T @ Q_)
    Y = unfold(T, mode) if unfolded is None else unfolded
    rhs = Y @ khatri_rao(P, Q_).conj()
    new = rhs @ _gram_inverse(gram).conj()
    if mode == 1:
        return FactorTriple(new, B, C)
    if mode == 2:
        return FactorTriple(X, new, C)
    return FactorTriple(X, B, new)


def _init_factors(T, cfg: CpConfig) -> FactorTriple:
    K, N, Q = T.shape
    L = cfg.L
    if cfg.init == "random":
        rng = np.random.default_rng(cfg.seed)
        return FactorTriple(*(
            (rng.standard_normal((d, L)) + 1j * rng.standard_normal((d, L))) / np.sqrt(2)
            for d in (K, N, Q)
        ))
    mats = []
    for mode, d in zip((1, 2, 3), (K, N, Q)):
        U = np.linalg.svd(unfold(T, mode), full_matrices=False)[0]
        if U.shape[1] < L:
            # fewer singular vectors than the rank; pad deterministically
            rng = np.random.default_rng(cfg.seed + mode)
            pad = rng.standard_normal((d, L - U.shape[1])) + 1j * rng.standard_normal((d, L - U.shape[1]))
            U = np.hstack([U, pad])
        mats.append(U[:, :L].astype(complex))
    return FactorTriple(*mats)


def _fit(Y1, factors, norm_T):
    X, B, C = factors
    return 1.0 - np.linalg.norm(Y1 - X @ khatri_rao(C, B).T) / norm_T


def als_decompose(T, cfg: CpConfig) -> CpResult:
    """Decompose ``T`` into ``L`` rank-1 terms by alternating least squares.

    Each sweep updates X, then B, then C. Iteration stops once the fit changes
    by less than ``cfg.tol`` between sweeps, or after ``cfg.max_iter`` sweeps.

    Raises
    ------
    ValueError
        For a zero or non 3-order tensor.
    """
    T = np.asarray(T, dtype=complex)
    if T.ndim != 3:
        raise ValueError(f"expected a 3-order tensor, got ndim={T.ndim}")
    norm_T = np.linalg.norm(T)
    if norm_T == 0:
        raise ValueError("cannot decompose a zero tensor")
    if not np.all(np.isfinite(T)):
        raise ValueError("tensor has non-finite entries")

    unfolded = {mode: unfold(T, mode) for mode in (1, 2, 3)}
    factors = _init_factors(T, cfg)
    history: list[float] = []
    prev = None
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        for mode in (1, 2, 3):
            factors = als_update(T, factors, mode, unfolded[mode])
        fit = _fit(unfolded[1], factors, norm_T)
        history.append(float(fit))
        if prev is not None and abs(fit - prev) < cfg.tol:
            converged = True
            break
        prev = fit
    return CpResult(
        factors=factors,
        fit=float(min(1.0, max(0.0, history[-1]))),
        iterations=it,
        converged=converged,
        fit_history=history,
    )


def normalize_factors(factors: FactorTriple):
    """Scale every factor column to unit norm.

    The phase of each X column is fixed so its largest-magnitude entry is real
    positive; the removed phase is moved into C. Returns the normalized factors
    and the amplitudes ``lambda_l`` (product of the three removed norms), so
    ``cp_reconstruct(normalized, amplitudes) == cp_reconstruct(factors)``.
    """
    X, B, C = (np.array(m, dtype=complex) for m in factors)
    norms = [np.linalg.norm(m, axis=0) for m in (X, B, C)]
    if any(np.any(n == 0) for n in norms):
        raise ValueError("cannot normalize a factor with a zero column")
    X /= norms[0]
    B /= norms[1]
    C /= norms[2]
    pivots = X[np.argmax(np.abs(X), axis=0), np.arange(X.shape[1])]
    phase = pivots / np.abs(pivots)
    X /= phase
    C *= phase
    amplitudes = norms[0] * norms[1] * norms[2]
    return FactorTriple(X, B, C), amplitudes


@dataclass(frozen=True)
class ColumnMatch:
    """``permutation[l]`` is the estimated column matched to true column ``l``."""

    permutation: tuple[int, ...]
    scores: np.ndarray
    factor_scores: np.ndarray


def _congruence(A, B):
    A = np.asarray(A)
    B = np.asarray(B)
    num = np.abs(A.conj().T @ B)
    den = np.outer(np.linalg.norm(A, axis=0), np.linalg.norm(B, axis=0))
    return num / den


def match_columns(est: FactorTriple, truth: FactorTriple) -> ColumnMatch:
    """Resolve the CP permutation ambiguity by exhaustive search.

    Maximizes the summed product of the three per-factor congruences
    ``|<a, b>| / (||a|| ||b||)``.
    """
    L = truth.rank
    if est.rank != L:
        raise ValueError(f"rank mismatch: estimate {est.rank}, truth {L}")
    if L > MAX_MATCH_RANK:
        raise ValueError(f"exhaustive matching refused for L={L} > {MAX_MATCH_RANK}")
    # cong[f][i, j]: congruence of estimated column i with true column j in factor f
    cong = np.stack([_congruence(e, t) for e, t in zip(est, truth)])
    combined = np.prod(cong, axis=0)
    best = max(
        itertools.permutations(range(L)),
        key=lambda p: sum(combined[p[l], l] for l in range(L)),
    )
    idx = np.arange(L)
    perm = np.array(best)
    return ColumnMatch(
        permutation=tuple(int(i) for i in best),
        scores=combined[perm, idx],
        factor_scores=cong[:, perm, idx],
    )

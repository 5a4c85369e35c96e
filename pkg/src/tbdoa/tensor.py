"""Dense complex matrix and 3-order tensor algebra.

Tensors are plain ``numpy`` arrays of shape ``(K, N, Q)``. A CP model is
``T[k, n, q] = sum_l X[k, l] * B[n, l] * C[q, l]``.

Unfolding conventions (0-based indices):

* mode 1: ``K x (N*Q)``, column ``q*N + n``   -> ``X @ khatri_rao(C, B).T``
* mode 2: ``N x (K*Q)``, column ``q*K + k``   -> ``B @ khatri_rao(C, X).T``
* mode 3: ``Q x (K*N)``, column ``k*N + n``   -> ``C @ khatri_rao(X, B).T``

With these, row ``k*N + n`` of ``khatri_rao(X, B)`` matches the row order of
the stacked per-pulse measurement vectors, i.e. ``Y_w == unfold(T, 3).T``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

# axis permutation bringing the mode axis first and the "fast" axis last
_UNFOLD_AXES = {1: (0, 2, 1), 2: (1, 2, 0), 3: (2, 0, 1)}


class FactorTriple(NamedTuple):
    """CP factor matrices sharing a column count ``L``."""

    X: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @property
    def rank(self) -> int:
        return self.X.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.X.shape[0], self.B.shape[0], self.C.shape[0])


def as_factors(X, B, C) -> FactorTriple:
    """Validate and pack three factor matrices."""
    X, B, C = (np.atleast_2d(np.asarray(m, dtype=complex)) for m in (X, B, C))
    if not (X.shape[1] == B.shape[1] == C.shape[1]) or X.shape[1] < 1:
        raise ValueError(
            f"factor column counts differ or are empty: {X.shape}, {B.shape}, {C.shape}"
        )
    return FactorTriple(X, B, C)


def khatri_rao(A, B):
    """Column-wise Kronecker product.

    Parameters
    ----------
    A : ndarray, shape (M, L)
    B : ndarray, shape (N, L)

    Returns
    -------
    ndarray, shape (M*N, L)
        Row ``a*N + b`` holds ``A[a, l] * B[b, l]``.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"column counts differ: {A.shape[1]} vs {B.shape[1]}")
    return (A[:, None, :] * B[None, :, :]).reshape(-1, A.shape[1])


def hadamard(A, B):
    """Elementwise product with a shape check."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return A * B


def vec(M):
    """Stack the columns of ``M`` into one vector (column-major)."""
    return np.asarray(M).reshape(-1, order="F")


def vec_of_sandwich(A, b, C):
    """Return ``vec(A @ diag(b) @ C)``.

    Equals ``khatri_rao(C.T, A) @ b``; see :func:`vec_sandwich_via_khatri_rao`.
    """
    A = np.atleast_2d(np.asarray(A))
    C = np.atleast_2d(np.asarray(C))
    b = np.asarray(b).reshape(-1)
    if A.shape[1] != b.size or C.shape[0] != b.size:
        raise ValueError(
            f"dimensions do not conform: A {A.shape}, b {b.shape}, C {C.shape}"
        )
    return vec((A * b[None, :]) @ C)


def vec_sandwich_via_khatri_rao(A, b, C):
    """Right-hand side of the vec identity, ``(C^T kr A) b``."""
    A = np.atleast_2d(np.asarray(A))
    C = np.atleast_2d(np.asarray(C))
    b = np.asarray(b).reshape(-1)
    if A.shape[1] != b.size or C.shape[0] != b.size:
        raise ValueError(
            f"dimensions do not conform: A {A.shape}, b {b.shape}, C {C.shape}"
        )
    return khatri_rao(C.T, A) @ b


def _check_mode(mode: int) -> None:
    if mode not in _UNFOLD_AXES:
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")


def unfold(T, mode: int):
    """Matricize a 3-order tensor along ``mode`` (1, 2 or 3)."""
    _check_mode(mode)
    T = np.asarray(T)
    if T.ndim != 3:
        raise ValueError(f"expected a 3-order tensor, got ndim={T.ndim}")
    return np.transpose(T, _UNFOLD_AXES[mode]).reshape(T.shape[mode - 1], -1)


def fold(M, mode: int, shape):
    """Inverse of :func:`unfold` for a tensor of the given ``(K, N, Q)`` shape."""
    _check_mode(mode)
    shape = tuple(int(s) for s in shape)
    axes = _UNFOLD_AXES[mode]
    permuted = tuple(shape[a] for a in axes)
    M = np.asarray(M)
    if M.size != np.prod(shape) or M.shape[0] != shape[mode - 1]:
        raise ValueError(f"matrix of shape {M.shape} cannot fold to {shape} along mode {mode}")
    return np.transpose(M.reshape(permuted), np.argsort(axes))


def cp_reconstruct(factors: FactorTriple, weights=None):
    """Sum of rank-1 outer products ``sum_l w_l x_l o b_l o c_l``."""
    X, B, C = factors
    if weights is not None:
        X = X * np.asarray(weights)[None, :]
    return np.einsum("kl,nl,ql->knq", X, B, C)


def cp_fit(T, factors: FactorTriple, weights=None) -> float:
    """Relative fit ``1 - ||T - [[X,B,C]]||_F / ||T||_F``, clipped to [0, 1].

    Raises
    ------
    ValueError
        If the factor dimensions disagree with ``T`` or ``T`` is zero.
    """
    T = np.asarray(T)
    if T.shape != factors.shape:
        raise ValueError(f"factor dims {factors.shape} do not match tensor {T.shape}")
    norm = np.linalg.norm(T)
    if norm == 0:
        raise ValueError("fit is undefined for a zero tensor")
    resid = np.linalg.norm(T - cp_reconstruct(factors, weights))
    return float(min(1.0, max(0.0, 1.0 - resid / norm)))

"""Search-free DOA recovery from the beamspace factor by polynomial rooting.

For each estimated signature ``x`` (a column of the beam-mode factor), the
transmit steering vector at the target angle satisfies ``W^H a(theta) ~ x``.
Writing ``a(theta) = p(z) = [1, z, ..., z^(M-1)]`` with
``z = exp(-j 2 pi d_t sin(theta))``, the quadratic form ``p(z)^H G p(z)`` of a
Hermitian PSD matrix ``G`` that annihilates that direction becomes a Laurent
polynomial of degree ``2(M-1)`` whose root closest to the unit circle gives
the angle.

Two choices of ``G`` are provided:

* the blocking form ``V V^H`` with ``V = W - e_1 x^H`` (needs ``x`` at its
  exact scale, i.e. ``x = W^H a(theta)``);
* the projection form ``W (I - x x^H / ||x||^2) W^H``, invariant to the
  complex scale of ``x`` and therefore usable on CP output directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .array_model import ArrayGeometry, transmit_steering

TRIM_RTOL = 1e-12
HERMITIAN_ATOL = 1e-10
N_SELECT_CANDIDATES = 4
DOUBLE_ROOT_RADIUS = 1e-6


class RootingError(ValueError):
    """Raised when a target polynomial cannot be rooted or mapped to an angle."""

    def __init__(self, message, target=None):
        self.target = target
        prefix = f"target {target}: " if target is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class LaurentPoly:
    """Coefficients ``c_k`` for ``k = -(M-1) .. (M-1)``, stored in increasing ``k``."""

    coeffs: np.ndarray

    @property
    def order(self) -> int:
        return (len(self.coeffs) - 1) // 2

    def coefficient(self, k: int) -> complex:
        return complex(self.coeffs[k + self.order])

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        k = np.arange(-self.order, self.order + 1)
        return np.sum(self.coeffs * np.power.outer(z, k), axis=-1)


@dataclass
class DoaEstimate:
    z_hat: complex
    theta_deg: float
    circle_distance: float
    correlation: float
    all_roots: np.ndarray = field(repr=False)


def build_blocking_matrix(W, x):
    """``V = W - e_1 x^H``: cancel the target signature from the first row of ``W``."""
    W = np.asarray(W, dtype=complex)
    x = np.asarray(x, dtype=complex).reshape(-1)
    if W.ndim != 2 or x.size != W.shape[1]:
        raise ValueError(f"signature of length {x.size} does not match W {W.shape}")
    V = W.copy()
    V[0, :] -= x.conj()
    return V


def build_projection_matrix(W, x):
    """Scale-free blocking operator ``W (I - x x^H / ||x||^2) W^H``."""
    W = np.asarray(W, dtype=complex)
    x = np.asarray(x, dtype=complex).reshape(-1)
    if W.ndim != 2 or x.size != W.shape[1]:
        raise ValueError(f"signature of length {x.size} does not match W {W.shape}")
    nrm = np.linalg.norm(x)
    if nrm == 0:
        raise ValueError("signature must be nonzero")
    u = x / nrm
    WP = W - np.outer(W @ u, u.conj())
    G = WP @ W.conj().T
    return 0.5 * (G + G.conj().T)


def laurent_from_hermitian(G) -> LaurentPoly:
    """Laurent coefficients of ``p(z)^H G p(z)`` with ``conj(z) -> 1/z``.

    ``c_k`` is the sum of the ``k``-th superdiagonal of ``G``.
    """
    G = np.asarray(G, dtype=complex)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"expected a square matrix, got {G.shape}")
    scale = max(1.0, np.max(np.abs(G)))
    if np.max(np.abs(G - G.conj().T)) > HERMITIAN_ATOL * scale:
        raise ValueError("matrix is not Hermitian")
    M = G.shape[0]
    coeffs = np.array([np.trace(G, offset=k) for k in range(-(M - 1), M)])
    return LaurentPoly(coeffs)


def companion_matrix(coeffs):
    """Companion matrix of ``coeffs`` given highest degree first (monic-normalized)."""
    coeffs = np.asarray(coeffs, dtype=complex)
    n = coeffs.size - 1
    comp = np.zeros((n, n), dtype=complex)
    comp[0, :] = -coeffs[1:] / coeffs[0]
    comp[np.arange(1, n), np.arange(n - 1)] = 1.0
    return comp


def find_roots(poly: LaurentPoly):
    """All roots of ``z^(M-1) * sum_k c_k z^k`` via companion-matrix eigenvalues.

    Leading and trailing coefficients below ``1e-12 * max|c_k|`` are trimmed
    first (trailing ones correspond to roots at zero and are dropped).
    """
    c = np.asarray(poly.coeffs, dtype=complex)
    cmax = np.max(np.abs(c)) if c.size else 0.0
    if cmax == 0:
        raise RootingError("polynomial is identically zero")
    big = np.flatnonzero(np.abs(c) >= TRIM_RTOL * cmax)
    c = c[big[0]: big[-1] + 1]
    if c.size < 2:
        return np.empty(0, dtype=complex)
    # numpy convention: highest degree first
    return np.linalg.eigvals(companion_matrix(c[::-1]))


def inner_roots(roots):
    """One root of each conjugate-reciprocal pair, reflected inside the unit circle.

    Takes the half of the roots with smallest magnitude, which for Hermitian
    coefficients pairs every root ``z`` with ``1/conj(z)``. A root sitting on
    the circle whose partner rounded to the other side is reflected inward.
    """
    roots = np.asarray(roots, dtype=complex)
    order = np.argsort(np.abs(roots), kind="stable")
    half = roots[order[: (roots.size + 1) // 2]]
    mags = np.abs(half)
    out = np.where(mags > 1, 1.0 / np.conj(np.where(mags == 0, 1, half)), half)
    return out


def count_near_circle(roots, tol):
    """Number of distinct root sites (conjugate-reciprocal pairs) within ``tol`` of ``|z| = 1``."""
    inner = inner_roots(roots)
    return int(np.sum(np.abs(1 - np.abs(inner)) < tol))


def steering_correlation(z, x, W):
    """``|x^H W^H p(z)| / (||x|| ||W^H p(z)||)`` for the Vandermonde vector ``p(z)``."""
    W = np.asarray(W)
    x = np.asarray(x).reshape(-1)
    p = np.power(complex(z), np.arange(W.shape[0]))
    y = W.conj().T @ p
    den = np.linalg.norm(x) * np.linalg.norm(y)
    if den == 0:
        return 0.0
    return float(abs(np.vdot(x, y)) / den)


def select_root(roots, x, W):
    """Pick the target root among the candidates closest to the unit circle.

    The candidates are the inner half of the roots, ranked by ``|1 - |z||``;
    among the best ``min(4, count)`` the one whose beamspace response best
    correlates with ``x`` wins.

    Returns
    -------
    z_hat : complex
    circle_distance : float
    correlation : float
    """
    cand = inner_roots(roots)
    if cand.size == 0:
        raise RootingError("no candidate roots")
    dist = np.abs(1 - np.abs(cand))
    order = np.argsort(dist, kind="stable")[: min(N_SELECT_CANDIDATES, cand.size)]
    rho = [steering_correlation(cand[i], x, W) for i in order]
    best = order[int(np.argmax(rho))]
    return complex(cand[best]), float(dist[best]), float(max(rho))


def refine_double_root(poly: LaurentPoly, roots, z_hat, max_steps=8):
    """Polish a root that is numerically a double root on the unit circle.

    Without noise the target root is a double root on ``|z| = 1`` (the
    quadratic form touches zero there), which eigenvalue rooting resolves only
    to about ``sqrt(eps)``. When two roots lie within ``DOUBLE_ROOT_RADIUS`` of
    ``z_hat`` the phase is refined by Newton steps on the derivative of the
    real function ``F(e^{jw})``, whose zero is simple. Other roots are
    returned unchanged.
    """
    roots = np.asarray(roots)
    if np.sum(np.abs(roots - z_hat) < DOUBLE_ROOT_RADIUS) < 2:
        return z_hat
    k = np.arange(-poly.order, poly.order + 1)
    w = float(np.angle(z_hat))
    for _ in range(max_steps):
        e = poly.coeffs * np.exp(1j * k * w)
        d1 = -np.sum(k * e).imag
        d2 = -np.sum(k * k * e).real
        if d2 <= 0:
            return z_hat
        step = d1 / d2
        w -= step
        if abs(step) < 1e-15:
            break
    return complex(np.exp(1j * w))


def root_to_angle(z, d_t: float) -> float:
    """Angle in degrees from the phase of ``z = exp(-j 2 pi d_t sin(theta))``."""
    s = -np.angle(z) / (2 * np.pi * d_t)
    if abs(s) > 1:
        raise RootingError(f"root phase maps outside the visible region (sin = {s:.6g})")
    return float(np.rad2deg(np.arcsin(s)))


def estimate_doa(x, W, d_t: float, target=None) -> DoaEstimate:
    """Single-target DOA from one beam-mode signature."""
    try:
        G = build_projection_matrix(W, x)
        poly = laurent_from_hermitian(G)
        roots = find_roots(poly)
        z_hat, dist, rho = select_root(roots, x, W)
        z_hat = refine_double_root(poly, roots, z_hat)
        dist = abs(1 - abs(z_hat))
        theta = root_to_angle(z_hat, d_t)
    except RootingError as err:
        raise RootingError(str(err), target=target) from err
    except ValueError as err:
        raise RootingError(str(err), target=target) from err
    return DoaEstimate(z_hat=z_hat, theta_deg=theta, circle_distance=dist,
                       correlation=rho, all_roots=roots)


def estimate_doas(X_hat, W, d_t: float = 0.5) -> list[DoaEstimate]:
    """Estimate one angle per column of the ``K x L`` beam-mode factor."""
    X_hat = np.atleast_2d(np.asarray(X_hat, dtype=complex))
    W = np.asarray(W)
    if X_hat.shape[0] != W.shape[1]:
        raise ValueError(f"factor has {X_hat.shape[0]} rows, W has {W.shape[1]} columns")
    return [estimate_doa(X_hat[:, l], W, d_t, target=l) for l in range(X_hat.shape[1])]


def _quadratic_power(S, A):
    """``a^H S a`` per column of ``A`` (``S`` Hermitian M x M) or ``||S^H a||^2`` for M x K."""
    S = np.asarray(S)
    if S.shape[0] == S.shape[1]:
        return np.real(np.sum(A.conj() * (S @ A), axis=0))
    return np.sum(np.abs(S.conj().T @ A) ** 2, axis=0)


def transmit_beampattern(source, geom: ArrayGeometry, grid_deg, *, db=True):
    """Transmitted power ``a^H V V^H a`` (or ``a^H G a``) over ``grid_deg``.

    ``source`` is either an ``M x K`` matrix ``V`` or an ``M x M`` Hermitian
    ``G``. In dB the result is normalized to its peak.
    """
    grid = np.atleast_1d(np.asarray(grid_deg, dtype=float))
    if grid.size == 0:
        raise ValueError("empty angle grid")
    power = _quadratic_power(source, transmit_steering(geom, grid))
    if not db:
        return power
    peak = np.max(power)
    with np.errstate(divide="ignore"):
        return 10 * np.log10(np.maximum(power, 0) / peak)


def angle_grid(step: float, lo: float = -90.0, hi: float = 90.0):
    """Uniform grid ``lo, lo+step, ..., <= hi`` computed from integer multiples."""
    if step <= 0:
        raise ValueError("grid step must be positive")
    n = int(np.floor((hi - lo) / step + 1e-9))
    # ratios of integers keep multiples like 15.00 exact on decimal steps
    inv = round(1.0 / step)
    if abs(inv * step - 1.0) < 1e-12:
        return lo + np.arange(n + 1) / inv
    return lo + step * np.arange(n + 1)


def grid_oracle(G, geom: ArrayGeometry, grid_step: float) -> float:
    """Exhaustive minimizer of ``a(theta)^H G a(theta)`` over [-90, 90] deg.

    Ties (values within a few ulps of the minimum) go to the smaller angle.
    """
    grid = angle_grid(grid_step)
    G = np.asarray(G)
    vals = np.empty(grid.size)
    chunk = 20000
    for s in range(0, grid.size, chunk):
        A = transmit_steering(geom, grid[s: s + chunk])
        vals[s: s + chunk] = np.real(np.sum(A.conj() * (G @ A), axis=0))
    tie = 64 * np.finfo(float).eps * np.max(np.abs(vals))
    return float(grid[np.flatnonzero(vals <= vals.min() + tie)[0]])

"""Array geometry, steering vectors, beamspace design and CPI synthesis.

All lengths are in wavelengths and all external angles in degrees.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import FactorTriple, cp_reconstruct


@dataclass(frozen=True)
class ArrayGeometry:
    """Transmit ULA plus an arbitrary linear receive array.

    Attributes
    ----------
    M : int
        Number of transmit elements.
    d_t : float
        Transmit element spacing in wavelengths.
    receive_coords : tuple of float
        Receive element positions in wavelengths, first one at 0.
    aperture : float
        Receive aperture ``D_r`` in wavelengths.
    """

    M: int
    d_t: float
    receive_coords: tuple[float, ...]
    aperture: float

    def __post_init__(self):
        coords = tuple(float(x) for x in self.receive_coords)
        object.__setattr__(self, "receive_coords", coords)
        if self.M < 2:
            raise ValueError(f"need at least 2 transmit elements, got M={self.M}")
        if self.d_t <= 0:
            raise ValueError("transmit spacing must be positive")
        if not coords or coords[0] != 0.0:
            raise ValueError("first receive coordinate must be 0")
        if min(coords) < 0 or max(coords) > self.aperture:
            raise ValueError("receive coordinates must lie within [0, aperture]")

    @property
    def N(self) -> int:
        return len(self.receive_coords)

    @classmethod
    def random_receive(cls, M=10, N=10, d_t=0.5, aperture=5.0, seed=0) -> "ArrayGeometry":
        """Transmit ULA and ``N`` receivers; ``x_1 = 0``, the rest uniform in the aperture."""
        rng = np.random.default_rng(seed)
        rest = np.sort(rng.uniform(0.0, aperture, size=N - 1))
        return cls(M=M, d_t=d_t, receive_coords=(0.0, *rest.tolist()), aperture=aperture)


@dataclass(frozen=True)
class Target:
    theta_deg: float
    coefficient: complex = 1.0 + 0j
    doppler: float = 0.0


@dataclass(frozen=True)
class Scene:
    """Point targets with their angle, reflection coefficient and normalized Doppler."""

    targets: tuple[Target, ...]

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.targets:
            raise ValueError("a scene needs at least one target")
        angles = self.angles
        if np.any(np.abs(angles) >= 90):
            raise ValueError("target angles must satisfy |theta| < 90 deg")
        if len(set(angles.tolist())) != len(angles):
            raise ValueError("target angles must be pairwise distinct")

    @classmethod
    def from_arrays(cls, angles, coefficients=None, dopplers=None) -> "Scene":
        angles = np.atleast_1d(np.asarray(angles, dtype=float))
        L = angles.size
        coefficients = np.ones(L, complex) if coefficients is None else np.asarray(coefficients)
        dopplers = np.zeros(L) if dopplers is None else np.asarray(dopplers, dtype=float)
        if coefficients.size != L or dopplers.size != L:
            raise ValueError("angles, coefficients and dopplers must have equal length")
        return cls(tuple(
            Target(float(a), complex(c), float(f))
            for a, c, f in zip(angles, coefficients, dopplers)
        ))

    @property
    def L(self) -> int:
        return len(self.targets)

    @property
    def angles(self) -> np.ndarray:
        return np.array([t.theta_deg for t in self.targets])

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([t.coefficient for t in self.targets], dtype=complex)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([t.doppler for t in self.targets])


@dataclass(frozen=True)
class BeamspaceMatrix:
    W: np.ndarray = field(repr=False)
    sector: tuple[float, float]

    @property
    def M(self) -> int:
        return self.W.shape[0]

    @property
    def K(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class SimulationConfig:
    Q: int = 64
    snr_db: float = 10.0
    seed: int = 0
    pulse_duration: float = 1.0  # normalized out; kept for bookkeeping

    def __post_init__(self):
        if self.Q < 1:
            raise ValueError(f"Q must be >= 1, got {self.Q}")


def _check_angles(theta_deg):
    theta = np.asarray(theta_deg, dtype=float)
    if np.any(np.abs(theta) > 90):
        raise ValueError(f"angles must lie in [-90, 90] deg, got {theta_deg!r}")
    return np.deg2rad(theta)


def transmit_steering(geom: ArrayGeometry, theta_deg):
    """Transmit steering vector(s) ``exp(-j 2 pi d_t m sin(theta))``, m = 0..M-1.

    A scalar angle gives an ``(M,)`` vector, an array of angles an ``(M, n)``
    matrix with one column per angle.
    """
    theta = _check_angles(theta_deg)
    m = np.arange(geom.M)
    phase = -2j * np.pi * geom.d_t * np.multiply.outer(m, np.sin(theta))
    return np.exp(phase)


def receive_steering(geom: ArrayGeometry, theta_deg):
    """Receive steering vector(s) ``exp(-j 2 pi x_n sin(theta))``."""
    theta = _check_angles(theta_deg)
    x = np.asarray(geom.receive_coords)
    return np.exp(-2j * np.pi * np.multiply.outer(x, np.sin(theta)))


def design_beamspace(geom: ArrayGeometry, sector=(-15.0, 15.0), K=4, grid_step=0.1) -> BeamspaceMatrix:
    """Sector-focused beamspace from the principal eigenvectors of the sector correlation.

    ``R = mean_i a(theta_i) a(theta_i)^H`` over a ``grid_step`` grid spanning
    ``sector``; the ``K`` dominant eigenvectors form the columns of ``W``. Each
    column's phase is fixed so that its largest-magnitude entry is real positive.
    """
    lo, hi = float(sector[0]), float(sector[1])
    if K < 1 or K > geom.M:
        raise ValueError(f"need 1 <= K <= M, got K={K}, M={geom.M}")
    if hi < lo:
        raise ValueError(f"empty sector {sector!r}")
    if lo <= -90 or hi >= 90:
        raise ValueError("sector must lie inside (-90, 90) deg")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    n_pts = int(np.floor((hi - lo) / grid_step + 1e-9)) + 1
    grid = lo + grid_step * np.arange(n_pts)
    A = transmit_steering(geom, grid)
    R = A @ A.conj().T / n_pts
    R = 0.5 * (R + R.conj().T)
    evals, evecs = np.linalg.eigh(R)
    W = evecs[:, ::-1][:, :K].copy()
    for k in range(K):
        col = W[:, k]
        pivot = col[np.argmax(np.abs(col))]
        W[:, k] = col * (abs(pivot) / pivot)
    return BeamspaceMatrix(W=W, sector=(lo, hi))


def sector_gain(W, geom: ArrayGeometry, theta_deg):
    """Beamspace gain ``||W^H a(theta)||^2`` on an angle grid."""
    A = transmit_steering(geom, np.atleast_1d(theta_deg))
    return np.sum(np.abs(np.asarray(W).conj().T @ A) ** 2, axis=0)


def snr_to_noise_variance(snr_db) -> float:
    """Per-entry noise variance for a unit mean-square target coefficient."""
    return float(10.0 ** (-float(snr_db) / 10.0))


def true_factors(geom: ArrayGeometry, scene: Scene, W, Q: int) -> FactorTriple:
    """Noise-free CP factors ``X = W^H A``, ``B``, ``C[q, l] = c_l exp(j 2 pi f_l q)``."""
    W = np.asarray(W)
    if W.shape[0] != geom.M:
        raise ValueError(f"W has {W.shape[0]} rows, geometry has M={geom.M}")
    angles = scene.angles
    X = W.conj().T @ transmit_steering(geom, angles)
    B = receive_steering(geom, angles)
    q = np.arange(1, Q + 1)
    C = scene.coefficients[None, :] * np.exp(2j * np.pi * np.multiply.outer(q, scene.dopplers))
    return FactorTriple(X, B, C)


def circular_noise(rng: np.random.Generator, shape, variance: float):
    """Circular complex Gaussian samples with the given total variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_cpi(geom: ArrayGeometry, scene: Scene, W, cfg: SimulationConfig):
    """Synthesize the ``K x N x Q`` beam/receiver/pulse measurement tensor.

    Returns the noise-free CP model ``[[X, B, C]]`` plus i.i.d. circular
    Gaussian noise of variance ``10**(-snr_db/10)``, drawn from ``cfg.seed``.
    """
    factors = true_factors(geom, scene, W, cfg.Q)
    T0 = cp_reconstruct(factors)
    var = snr_to_noise_variance(cfg.snr_db)
    if var == 0.0:
        return T0
    rng = np.random.default_rng(cfg.seed)
    return T0 + circular_noise(rng, T0.shape, var)

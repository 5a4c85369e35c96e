"""Monte-Carlo harness: RMSE and resolution versus SNR, and single-shot dumps."""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .array_model import (
    ArrayGeometry,
    Scene,
    SimulationConfig,
    design_beamspace,
    simulate_cpi,
    true_factors,
)
from .cp_als import CpConfig, als_decompose
from .rooting import (
    RootingError,
    angle_grid,
    build_blocking_matrix,
    build_projection_matrix,
    count_near_circle,
    estimate_doas,
    transmit_beampattern,
)

log = logging.getLogger(__name__)

MAX_PAIR_TARGETS = 5


@dataclass(frozen=True)
class McConfig:
    """Everything a Monte-Carlo sweep needs; reports are a pure function of it."""

    trials: int = 500
    snr_grid_db: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    angles: tuple[float, ...] = (-15.0, 15.0)
    dopplers: tuple[float, ...] = (0.1, -0.25)
    M: int = 10
    N: int = 10
    d_t: float = 0.5
    aperture: float = 5.0
    K: int = 4
    Q: int = 64
    sector: tuple[float, float] = (-15.0, 15.0)
    beam_grid_step: float = 0.1
    geometry_seed: int = 2024
    master_seed: int = 0
    max_iter: int = 500
    tol: float = 1e-8
    init: str = "data-driven"
    workers: int = 1

    def __post_init__(self):
        for name in ("snr_grid_db", "angles", "dopplers", "sector"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.snr_grid_db:
            raise ValueError("SNR grid is empty")
        if len(self.angles) != len(self.dopplers):
            raise ValueError("angles and dopplers must have equal length")
        if self.K > self.M:
            raise ValueError(f"K={self.K} exceeds M={self.M}")

    @property
    def L(self) -> int:
        return len(self.angles)

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry.random_receive(
            M=self.M, N=self.N, d_t=self.d_t, aperture=self.aperture, seed=self.geometry_seed
        )

    def beamspace(self, geom: ArrayGeometry | None = None):
        return design_beamspace(geom or self.geometry(), self.sector, self.K, self.beam_grid_step)


@dataclass
class SweepRow:
    snr_db: float
    value: float
    trials: int
    failures: int


@dataclass
class RmseReport:
    rows: list[SweepRow] = field(default_factory=list)

    @property
    def rmse(self) -> np.ndarray:
        return np.array([r.value for r in self.rows])


@dataclass
class ResolutionReport:
    rows: list[SweepRow] = field(default_factory=list)
    criterion: str = "both |error| < separation/2 after optimal pairing"

    @property
    def probability(self) -> np.ndarray:
        return np.array([r.value for r in self.rows])


class AllTrialsFailed(RuntimeError):
    pass


def pair_estimates(est, truth):
    """Minimum squared-error assignment of estimated to true angles.

    Returns
    -------
    assignment : tuple of int
        ``assignment[l]`` indexes the estimate paired with ``truth[l]``.
    errors : ndarray
        Absolute per-target errors in degrees, ordered like ``truth``.
    """
    est = np.asarray(est, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if est.size != truth.size:
        raise ValueError(f"{est.size} estimates for {truth.size} targets")
    if truth.size > MAX_PAIR_TARGETS:
        raise ValueError(f"exhaustive pairing refused for {truth.size} targets")
    best = min(
        itertools.permutations(range(truth.size)),
        key=lambda p: float(np.sum((est[list(p)] - truth) ** 2)),
    )
    return tuple(best), np.abs(est[list(best)] - truth)


def _trial_seeds(cfg: McConfig, snr_index: int, trial: int):
    ss = np.random.SeedSequence([cfg.master_seed, snr_index, trial])
    coef_ss, noise_ss, init_ss = ss.spawn(3)
    return (
        np.random.default_rng(coef_ss),
        int(noise_ss.generate_state(1)[0]),
        int(init_ss.generate_state(1)[0]),
    )


def trial_scene(cfg: McConfig, rng: np.random.Generator) -> Scene:
    """Scene with standard circular complex Gaussian reflection coefficients."""
    L = cfg.L
    coef = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / np.sqrt(2)
    return Scene.from_arrays(cfg.angles, coef, cfg.dopplers)


@dataclass
class TrialOutcome:
    estimates: np.ndarray | None
    failure: str | None = None


def run_trial(cfg: McConfig, geom, W, snr_index: int, snr_db: float, trial: int) -> TrialOutcome:
    """Simulate, decompose and estimate for one (SNR, trial) cell."""
    coef_rng, noise_seed, init_seed = _trial_seeds(cfg, snr_index, trial)
    scene = trial_scene(cfg, coef_rng)
    T = simulate_cpi(geom, scene, W, SimulationConfig(Q=cfg.Q, snr_db=snr_db, seed=noise_seed))
    cp = als_decompose(T, CpConfig(L=cfg.L, max_iter=cfg.max_iter, tol=cfg.tol,
                                   init=cfg.init, seed=init_seed))
    if not cp.converged:
        return TrialOutcome(None, f"ALS did not converge in {cp.iterations} iterations")
    try:
        est = estimate_doas(cp.factors.X, W, geom.d_t)
    except RootingError as err:
        return TrialOutcome(None, str(err))
    return TrialOutcome(np.array([e.theta_deg for e in est]))


def _run_cell(args):
    cfg, snr_index, snr_db, trial = args
    geom = cfg.geometry()
    W = cfg.beamspace(geom).W
    return run_trial(cfg, geom, W, snr_index, snr_db, trial)


def _run_grid(cfg: McConfig):
    """Outcomes per SNR, each a list ordered by trial index."""
    cells = [(cfg, i, snr, t) for i, snr in enumerate(cfg.snr_grid_db) for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            flat = list(pool.map(_run_cell, cells, chunksize=max(1, cfg.trials // 4)))
    else:
        geom = cfg.geometry()
        W = cfg.beamspace(geom).W
        flat = [run_trial(cfg, geom, W, i, snr, t) for _, i, snr, t in cells]
    n = cfg.trials
    return [flat[i * n:(i + 1) * n] for i in range(len(cfg.snr_grid_db))]


def run_rmse_sweep(cfg: McConfig) -> RmseReport:
    """Pooled RMSE (degrees) over all targets and successful trials, per SNR."""
    truth = np.array(cfg.angles)
    report = RmseReport()
    for snr, outcomes in zip(cfg.snr_grid_db, _run_grid(cfg)):
        sq = []
        failures = 0
        for out in outcomes:
            if out.estimates is None:
                failures += 1
                continue
            sq.append(pair_estimates(out.estimates, truth)[1] ** 2)
        if not sq:
            raise AllTrialsFailed(f"every trial failed at {snr} dB")
        rmse = float(np.sqrt(np.mean(np.concatenate(sq))))
        log.info("snr=%g dB rmse=%.4g deg failures=%d", snr, rmse, failures)
        report.rows.append(SweepRow(snr, rmse, cfg.trials, failures))
    return report


def run_resolution_sweep(cfg: McConfig) -> ResolutionReport:
    """Fraction of trials in which both closely spaced targets are resolved."""
    if cfg.L != 2:
        raise ValueError(f"resolution sweep needs exactly 2 targets, got {cfg.L}")
    truth = np.array(cfg.angles)
    half_sep = abs(truth[0] - truth[1]) / 2
    report = ResolutionReport()
    for snr, outcomes in zip(cfg.snr_grid_db, _run_grid(cfg)):
        resolved = 0
        failures = 0
        for out in outcomes:
            if out.estimates is None:
                failures += 1
                continue
            if np.all(pair_estimates(out.estimates, truth)[1] < half_sep):
                resolved += 1
        prob = resolved / cfg.trials
        log.info("snr=%g dB p_res=%.3f failures=%d", snr, prob, failures)
        report.rows.append(SweepRow(snr, prob, cfg.trials, failures))
    return report


def dump_single_shot(cfg: McConfig, snr_db: float, trial: int = 0, pattern_step: float = 0.01) -> dict:
    """One trial with all roots, per-target beampatterns and final estimates.

    The beampattern for each target uses the scale-free blocking operator built
    from that target's estimated beam signature.
    """
    geom = cfg.geometry()
    bs = cfg.beamspace(geom)
    coef_rng, noise_seed, init_seed = _trial_seeds(cfg, 0, trial)
    scene = trial_scene(cfg, coef_rng)
    T = simulate_cpi(geom, scene, bs.W, SimulationConfig(Q=cfg.Q, snr_db=snr_db, seed=noise_seed))
    cp = als_decompose(T, CpConfig(L=cfg.L, max_iter=cfg.max_iter, tol=cfg.tol,
                                   init=cfg.init, seed=init_seed))
    est = estimate_doas(cp.factors.X, bs.W, geom.d_t)
    grid = angle_grid(pattern_step)
    patterns = [
        transmit_beampattern(build_projection_matrix(bs.W, cp.factors.X[:, l]), geom, grid)
        for l in range(cfg.L)
    ]
    return {
        "snr_db": float(snr_db),
        "trial": trial,
        "truth_deg": list(cfg.angles),
        "coefficients": [[c.real, c.imag] for c in scene.coefficients],
        "receive_coords": list(geom.receive_coords),
        "cp": {"fit": cp.fit, "iterations": cp.iterations, "converged": cp.converged},
        "estimates": [
            {
                "target": l,
                "theta_deg": e.theta_deg,
                "z_hat": [e.z_hat.real, e.z_hat.imag],
                "circle_distance": e.circle_distance,
                "correlation": e.correlation,
                "near_circle_roots": count_near_circle(e.all_roots, 0.05),
            }
            for l, e in enumerate(est)
        ],
        "roots": [e.all_roots for e in est],
        "selected": [e.z_hat for e in est],
        "pattern_grid_deg": grid,
        "patterns_db": patterns,
    }


SINGLE_SHOT_FIELDS = (
    "snr_db", "trial", "truth_deg", "coefficients", "receive_coords", "cp",
    "estimates", "roots", "selected", "pattern_grid_deg", "patterns_db",
)


def blocking_patterns(cfg: McConfig, pattern_step: float = 0.01, coefficients=None):
    """Noise-free transmit power after blocking each true signature.

    Uses ``V_l = W - e_1 x_l^H`` with the exact-scale signature
    ``x_l = W^H a(theta_l)``. Returns the grid, one dB pattern per target and
    the unblocked sector pattern ``||W^H a||^2``.
    """
    geom = cfg.geometry()
    W = cfg.beamspace(geom).W
    scene = Scene.from_arrays(cfg.angles, coefficients, cfg.dopplers)
    X = true_factors(geom, scene, W, 1).X
    grid = angle_grid(pattern_step)
    pats = [transmit_beampattern(build_blocking_matrix(W, X[:, l]), geom, grid) for l in range(cfg.L)]
    sector = transmit_beampattern(W, geom, grid)
    return grid, pats, sector


def config_dict(cfg: McConfig) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}

"""Command-line front end.

Usage::

    tbdoa SUBCOMMAND [--config PATH] [--seed N] [--snr DB] [--trials N]
                     [--out DIR] [--k N] [--targets "t1,t2"] [--tensor PATH]

Subcommands: simulate, estimate, rmse-sweep, resolution-sweep, single-shot,
beampattern. Each writes its report files plus ``manifest.json`` into the
output directory.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .array_model import SimulationConfig, simulate_cpi
from .cp_als import CpConfig, als_decompose
from .experiments import (
    McConfig,
    _trial_seeds,
    blocking_patterns,
    config_dict,
    dump_single_shot,
    run_resolution_sweep,
    run_rmse_sweep,
    trial_scene,
)
from .rooting import estimate_doas

log = logging.getLogger("tbdoa")

SUBCOMMANDS = ("simulate", "estimate", "rmse-sweep", "resolution-sweep", "single-shot", "beampattern")
DEFAULT_DOPPLERS = (0.1, -0.25, 0.3, -0.4, 0.2)


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


# section -> key -> (parser, RunConfig/McConfig field)
SCHEMA = {
    "array": {
        "M": (int, "M"),
        "N": (int, "N"),
        "d_t": (float, "d_t"),
        "aperture": (float, "aperture"),
        "geometry_seed": (int, "geometry_seed"),
    },
    "scene": {
        "angles": (_floats, "angles"),
        "dopplers": (_floats, "dopplers"),
    },
    "beamspace": {
        "K": (int, "K"),
        "sector": (_floats, "sector"),
        "grid_step": (float, "beam_grid_step"),
    },
    "cp": {
        "max_iter": (int, "max_iter"),
        "tol": (float, "tol"),
        "init": (str, "init"),
    },
    "experiment": {
        "trials": (int, "trials"),
        "Q": (int, "Q"),
        "snr_grid": (_floats, "snr_grid_db"),
        "snr": (float, "snr_db"),
        "seed": (int, "master_seed"),
        "workers": (int, "workers"),
        "pattern_step": (float, "pattern_step"),
    },
    "output": {
        "out": (str, "out_dir"),
    },
}
RUN_FIELDS = {"snr_db", "pattern_step", "out_dir"}


@dataclass(frozen=True)
class RunConfig:
    mc: McConfig
    snr_db: float = 5.0
    pattern_step: float = 0.01
    out_dir: str = "out"
    tensor_path: str | None = None

    def to_dict(self) -> dict:
        return {
            "experiment": config_dict(self.mc),
            "snr_db": self.snr_db,
            "pattern_step": self.pattern_step,
            "out_dir": self.out_dir,
            "tensor_path": self.tensor_path,
        }


def _read_file(path) -> dict:
    """Parse a ``[section]`` / ``key = value`` file into field overrides."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive (M vs m)
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as err:
        raise ConfigError(str(err)) from err
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            conv, name = SCHEMA[section][key]
            if raw.strip() == "":
                raise ConfigError(f"missing value for {key!r} in [{section}]")
            try:
                values[name] = conv(raw.strip())
            except ValueError as err:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from err
    return values


def parse_config(path=None, *, seed=None, snr=None, trials=None, out=None, k=None,
                 targets=None, tensor=None) -> RunConfig:
    """Defaults, then file values, then flag overrides; validated on construction."""
    values = _read_file(path) if path else {}
    flags = {"master_seed": seed, "snr_db": snr, "trials": trials, "out_dir": out,
             "K": k, "angles": _floats(targets) if isinstance(targets, str) else targets}
    values.update({name: v for name, v in flags.items() if v is not None})
    if "angles" in values and "dopplers" not in values:
        L = len(values["angles"])
        if L > len(DEFAULT_DOPPLERS):
            raise ConfigError(f"give [scene] dopplers explicitly for {L} targets")
        values["dopplers"] = DEFAULT_DOPPLERS[:L]
    run_kw = {k_: values.pop(k_) for k_ in list(values) if k_ in RUN_FIELDS}
    try:
        mc = McConfig(**values)
        cfg = RunConfig(mc=mc, tensor_path=tensor, **run_kw)
        if len(mc.sector) != 2:
            raise ValueError("sector needs exactly two angles")
        if mc.N < 1 or mc.M < 2 or mc.Q < 1 or mc.workers < 1:
            raise ValueError("array sizes, Q and workers must be positive (M >= 2)")
        if cfg.pattern_step <= 0:
            raise ValueError("pattern_step must be positive")
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err
    return cfg


def _num(x) -> str:
    return format(float(x), ".12g")


def _clean(obj):
    """Make a record JSON-safe with 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            return str(float(obj))
        return float(_num(obj))
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_tensor_csv(path, T) -> None:
    K, N, Q = T.shape
    k, n, q = np.meshgrid(np.arange(K), np.arange(N), np.arange(Q), indexing="ij")
    rows = zip(k.ravel(), n.ravel(), q.ravel(), T.real.ravel(), T.imag.ravel())
    _write_csv(Path(path), ("k", "n", "q", "re", "im"), ((int(a), int(b), int(c), d, e) for a, b, c, d, e in rows))


def read_tensor_csv(path):
    """Inverse of :func:`write_tensor_csv` (0-based ``k, n, q`` indices)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    idx = data[:, :3].astype(int)
    shape = tuple(idx.max(axis=0) + 1)
    T = np.zeros(shape, dtype=complex)
    T[idx[:, 0], idx[:, 1], idx[:, 2]] = data[:, 3] + 1j * data[:, 4]
    return T


def _cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    mc = cfg.mc
    geom = mc.geometry()
    W = mc.beamspace(geom).W
    coef_rng, noise_seed, _ = _trial_seeds(mc, 0, 0)
    scene = trial_scene(mc, coef_rng)
    T = simulate_cpi(geom, scene, W, SimulationConfig(Q=mc.Q, snr_db=cfg.snr_db, seed=noise_seed))
    write_tensor_csv(out / "tensor.csv", T)
    return {"noise_seed": noise_seed, "coefficients": scene.coefficients,
            "receive_coords": geom.receive_coords}


def _cmd_estimate(cfg: RunConfig, out: Path) -> dict:
    mc = cfg.mc
    if not cfg.tensor_path:
        raise ConfigError("estimate needs --tensor PATH")
    T = read_tensor_csv(cfg.tensor_path)
    W = mc.beamspace().W
    if T.shape[0] != W.shape[1]:
        raise ConfigError(f"tensor has {T.shape[0]} beams but K={W.shape[1]}")
    init_seed = _trial_seeds(mc, 0, 0)[2]
    cp = als_decompose(T, CpConfig(L=mc.L, max_iter=mc.max_iter, tol=mc.tol, init=mc.init, seed=init_seed))
    est = estimate_doas(cp.factors.X, W, mc.d_t)
    record = {
        "cp": {"fit": cp.fit, "iterations": cp.iterations, "converged": cp.converged},
        "estimates": [
            {"target": l + 1, "theta_deg": e.theta_deg, "z_hat": e.z_hat,
             "circle_distance": e.circle_distance, "correlation": e.correlation}
            for l, e in enumerate(est)
        ],
    }
    _write_json(out / "estimates.json", record)
    print(" ".join(_num(e.theta_deg) for e in sorted(est, key=lambda e: e.theta_deg)))
    return {"init_seed": init_seed}


def _cmd_rmse(cfg: RunConfig, out: Path) -> dict:
    rep = run_rmse_sweep(cfg.mc)
    _write_csv(out / "rmse.csv", ("snr_db", "rmse_deg", "trials", "failures"),
               ((r.snr_db, r.value, r.trials, r.failures) for r in rep.rows))
    return {}


def _cmd_resolution(cfg: RunConfig, out: Path) -> dict:
    rep = run_resolution_sweep(cfg.mc)
    _write_csv(out / "resolution.csv", ("snr_db", "prob_resolution", "trials", "failures"),
               ((r.snr_db, r.value, r.trials, r.failures) for r in rep.rows))
    return {"resolution_criterion": rep.criterion}


def _cmd_single_shot(cfg: RunConfig, out: Path) -> dict:
    rec = dump_single_shot(cfg.mc, cfg.snr_db, pattern_step=cfg.pattern_step)
    rows = []
    for l, (roots, sel) in enumerate(zip(rec["roots"], rec["selected"])):
        # the selected root may be reflected or polished; flag its nearest raw root
        chosen = int(np.argmin(np.abs(roots - sel)))
        for i, z in enumerate(roots):
            rows.append((l + 1, z.real, z.imag, abs(z), int(i == chosen)))
    _write_csv(out / "roots.csv", ("target", "re", "im", "abs", "selected"), rows)
    _write_pattern(out / "pattern.csv", rec["pattern_grid_deg"], rec["patterns_db"])
    _write_json(out / "estimates.json", {k: rec[k] for k in ("snr_db", "truth_deg", "cp", "estimates", "coefficients")})
    return {}


def _write_pattern(path, grid, patterns, first_target=1):
    rows = ((l + first_target, th, p) for l, pat in enumerate(patterns) for th, p in zip(grid, pat))
    _write_csv(path, ("target", "theta_deg", "power_db"), rows)


def _cmd_beampattern(cfg: RunConfig, out: Path) -> dict:
    grid, pats, sector = blocking_patterns(cfg.mc, cfg.pattern_step)
    # target 0 is the unblocked sector pattern
    _write_pattern(out / "pattern.csv", grid, [sector, *pats], first_target=0)
    return {}


COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "rmse-sweep": _cmd_rmse,
    "resolution-sweep": _cmd_resolution,
    "single-shot": _cmd_single_shot,
    "beampattern": _cmd_beampattern,
}


def run_subcommand(name: str, cfg: RunConfig) -> int:
    """Run one subcommand; on failure write ``error.json`` and return 1."""
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        extra = COMMANDS[name](cfg, out)
        manifest = {"command": name, "version": __version__, "config": cfg.to_dict(), "seeds": {
            "master_seed": cfg.mc.master_seed, "geometry_seed": cfg.mc.geometry_seed, **extra}}
        _write_json(out / "manifest.json", manifest)
    except Exception as err:  # surfaced as a machine-readable record
        frames = traceback.extract_tb(err.__traceback__)
        origin = Path(frames[-1].filename).stem if frames else "cli"
        record = {"command": name, "error": type(err).__name__, "message": str(err), "module": origin}
        print(json.dumps(record), file=sys.stderr)
        try:
            _write_json(out / "error.json", record)
        except OSError:
            pass
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tbdoa", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="key=value config file with [section] headers")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--snr", type=float, help="SNR in dB for simulate/single-shot ('inf' for noiseless)")
    p.add_argument("--trials", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--k", type=int, help="number of transmit beams K")
    p.add_argument("--targets", help='comma-separated target angles in degrees, e.g. "-15,15"')
    p.add_argument("--tensor", help="tensor CSV for the estimate subcommand")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, seed=args.seed, snr=args.snr, trials=args.trials,
                           out=args.out, k=args.k, targets=args.targets, tensor=args.tensor)
    except ConfigError as err:
        print(json.dumps({"command": args.command, "error": "ConfigError",
                          "message": str(err), "module": "cli"}), file=sys.stderr)
        return 2
    return run_subcommand(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())

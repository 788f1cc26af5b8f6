"""Command-line pipeline runner and experiment orchestration.

Subcommands stage the pipeline through a shared working directory: ``synth``
draws the scene/subspace/samples, ``solve`` runs the interior-point solver on
the assembled dual program, ``localize`` rasterizes the dual polynomial and
extracts peaks, ``recover`` least-squares-fits the waveform products, and
``certify`` builds the kernel-based certificate directly.  ``experiment``
runs the whole chain in one shot from a preset or config file and ``sweep``
measures recovery rates over a grid of problem sizes.

All artifacts are deterministic functions of config + seeds: reports carry
no timestamps, floats are written with round-trip ``repr``, and repeated
runs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .certificate import build_certificate, certificate_to_json
from .dualsdp import assemble, solve_dual
from .estimate import (recover_products, reconstruct_waveforms, score,
                       score_to_json, write_waveforms_csv)
from .localize import (ShiftEstimate, build_polynomial, eval_grid,
                       extract_peaks, feasibility_sup, save_grid,
                       write_peaks_csv)
from .model import (Observation, ShiftPair, awgn, check_separation,
                    observation_from_json, observation_to_json, random_scene,
                    random_subspace, scene_from_json, scene_to_json,
                    subspace_from_json, subspace_to_json, synthesize)
from .solver import SolverOptions, write_solver_log

__all__ = [
    "ExperimentConfig",
    "load_config",
    "run_experiment",
    "theorem1_diagnostic",
    "phase_sweep",
    "main",
]

CONFIG_VERSION = 1
PRESETS = ("exp1", "exp2", "exp3", "exp4")

_SOLVER_FIELDS = set(SolverOptions.__dataclass_fields__)


@dataclass
class ExperimentConfig:
    """Declarative description of one end-to-end run (versioned JSON schema)."""

    L: int
    K: int
    R: int
    subspace_kind: str = "gaussian"
    gain_model: str = "unit_modulus"
    shifts: object = "random-separated"
    noise: dict = field(default_factory=lambda: {"kind": "none"})
    grid: int = 1000
    threshold: float = 0.5
    include_redundant_q: bool = True
    solver: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    min_sep: float | None = None
    name: str = ""
    version: int = CONFIG_VERSION

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {self.version}")
        if self.L < 3 or self.L % 2 == 0:
            raise ValueError("L must be odd and at least 3")
        if self.K < 1 or self.R < 0:
            raise ValueError("K must be positive and R nonnegative")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly between 0 and 1")
        if self.grid < self.L:
            raise ValueError("grid must be at least L to avoid aliasing")
        kind = self.noise.get("kind", "none")
        if kind not in ("none", "awgn"):
            raise ValueError(f"unknown noise kind {kind!r}")
        if kind == "awgn":
            if "snr_db" not in self.noise:
                raise ValueError("awgn noise requires snr_db")
            self.noise.setdefault("zeta", 3.0)
            if self.noise["zeta"] <= 0:
                raise ValueError("zeta must be positive")
        unknown = set(self.solver) - _SOLVER_FIELDS
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        defaults = {"subspace": 0, "scene": 1, "noise": 2}
        bad = set(self.seeds) - set(defaults)
        if bad:
            raise ValueError(f"unknown seed fields: {sorted(bad)}")
        self.seeds = {**defaults, **{k: int(v) for k, v in self.seeds.items()}}
        if self.shifts != "random-separated":
            pts = [(float(t), float(f)) for t, f in self.shifts]
            if len(pts) != self.R:
                raise ValueError(f"expected {self.R} shifts, got {len(pts)}")
            if any(not (0 <= t < 1 and 0 <= f < 1) for t, f in pts):
                raise ValueError("shifts must lie in [0, 1) x [0, 1)")
            self.shifts = pts
            N = (self.L - 1) // 2
            if len(pts) > 1:
                sep = check_separation(pts, N)
                if not sep.ok:
                    warnings.warn(
                        f"shifts are separated by {sep.delta_min:.4f} < "
                        f"{sep.threshold:.4f}; recovery guarantees do not apply",
                        stacklevel=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["shifts"] != "random-separated":
            out["shifts"] = [[t, f] for t, f in out["shifts"]]
        return out


def load_config(source: str) -> ExperimentConfig:
    """Resolve a preset name or a JSON file path into a config."""
    path = Path(source)
    if path.exists():
        data = json.loads(path.read_text())
    elif source in PRESETS:
        data = json.loads(
            resources.files("blindsr").joinpath(f"presets/{source}.json").read_text())
    else:
        raise ValueError(f"{source!r} is neither a config file nor one of "
                         f"the presets {', '.join(PRESETS)}")
    return ExperimentConfig.from_dict(data)


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        config.seeds = {"subspace": args.seed, "scene": args.seed + 1,
                        "noise": args.seed + 2}
    if getattr(args, "grid", None) is not None:
        config.grid = args.grid
    if getattr(args, "threshold", None) is not None:
        config.threshold = args.threshold
    if getattr(args, "zeta", None) is not None and config.noise["kind"] == "awgn":
        config.noise["zeta"] = args.zeta
    return config


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------

def _build_inputs(config: ExperimentConfig):
    sub = random_subspace(config.L, config.K, config.subspace_kind,
                          seed=config.seeds["subspace"])
    explicit = None if config.shifts == "random-separated" else config.shifts
    scene = random_scene(config.R, config.K, seed=config.seeds["scene"],
                         gain_model=config.gain_model, shifts=explicit,
                         N=sub.N, min_sep=config.min_sep)
    obs = synthesize(scene, sub)
    if config.noise["kind"] == "awgn":
        y, noise_meta = awgn(obs.y, config.noise["snr_db"],
                             seed=config.seeds["noise"])
        obs = Observation(y=y, meta={**obs.meta, **noise_meta})
    return scene, sub, obs


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=1) + "\n")


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run the earlier stages first")
    return json.loads(path.read_text())


def _solve_config(config: ExperimentConfig, obs, sub):
    variant = "noisy" if config.noise["kind"] == "awgn" else "exact"
    problem = assemble(obs.y, sub, variant=variant,
                       zeta=config.noise.get("zeta", 3.0),
                       include_redundant_q=config.include_redundant_q)
    return solve_dual(problem, SolverOptions(**config.solver))


def _dual_to_json(sol) -> dict:
    return {
        "version": 1,
        "q": [[float(v.real), float(v.imag)] for v in sol.q],
        "objective": float(sol.objective),
        "status": sol.status,
        "iterations": int(sol.iterations),
        "kkt": {k: float(v) for k, v in sol.kkt.items()},
    }


def _q_from_json(data: dict) -> np.ndarray:
    return np.array([complex(re, im) for re, im in data["q"]])


def _estimate_from_peaks(rows, grid: int) -> ShiftEstimate:
    shifts = [ShiftPair(float(r["tau"]), float(r["f"])) for r in rows]
    values = np.array([float(r["peak_value"]) for r in rows])
    return ShiftEstimate(shifts=shifts, peak_values=values, grid_step=1.0 / grid)


def _read_peaks(path: Path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _aligned_truth(scene, sub, report, waveforms):
    """True waveforms ordered like the estimates, when the match is complete."""
    if report.missed or report.spurious or len(report.matches) != len(waveforms):
        return None
    truth = [None] * len(waveforms)
    for t, e in report.matches:
        truth[e] = sub.D @ (scene.gains[t] * scene.directions[t])
    return truth


def cmd_synth(config: ExperimentConfig, out: Path) -> int:
    scene, sub, obs = _build_inputs(config)
    _write_json(out / "config.json", config.to_dict())
    _write_json(out / "scene.json", scene_to_json(scene))
    _write_json(out / "subspace.json", subspace_to_json(sub))
    _write_json(out / "observation.json", observation_to_json(obs))
    print(f"synthesized L={config.L} K={config.K} R={config.R} -> {out}")
    return 0


def cmd_solve(out: Path, args) -> int:
    config = ExperimentConfig.from_dict(_read_json(out / "config.json"))
    _apply_overrides(config, args)
    sub = subspace_from_json(_read_json(out / "subspace.json"))
    obs = observation_from_json(_read_json(out / "observation.json"))
    t0 = time.perf_counter()
    sol = _solve_config(config, obs, sub)
    elapsed = time.perf_counter() - t0
    write_solver_log(sol.log, out / "solver_log.csv")
    _write_json(out / "dual.json", _dual_to_json(sol))
    print(f"status={sol.status} objective={sol.objective:.9f} "
          f"iterations={sol.iterations} ({elapsed:.1f}s)")
    return 0 if sol.status.startswith("optimal") else 1


def cmd_localize(out: Path, args) -> int:
    config = ExperimentConfig.from_dict(_read_json(out / "config.json"))
    _apply_overrides(config, args)
    sub = subspace_from_json(_read_json(out / "subspace.json"))
    q = _q_from_json(_read_json(out / "dual.json"))
    vals = eval_grid(build_polynomial(q, sub), config.grid)
    est = extract_peaks(vals, config.threshold)
    save_grid(vals, out / "grid.bin",
              meta={"grid": config.grid, "threshold": config.threshold})
    write_peaks_csv(est, out / "peaks.csv")
    print(f"sup||f||={feasibility_sup(vals):.6f} peaks={est.R}")
    return 0


def cmd_recover(out: Path) -> int:
    config = ExperimentConfig.from_dict(_read_json(out / "config.json"))
    sub = subspace_from_json(_read_json(out / "subspace.json"))
    obs = observation_from_json(_read_json(out / "observation.json"))
    rows = _read_peaks(out / "peaks.csv")
    report = {"version": 1, "peaks": len(rows)}
    if not rows:
        write_waveforms_csv([], out / "waveforms.csv")
        _write_json(out / "recovery.json", report)
        print("no peaks to recover from")
        return 1
    est = _estimate_from_peaks(rows, config.grid)
    rec = recover_products(obs.y, [s.as_tuple() for s in est.shifts], sub)
    waveforms = reconstruct_waveforms(rec, sub)
    report["recovery"] = {
        "residual": float(rec.residual),
        "sigma_min": float(rec.sigma_min),
        "rank_deficient": bool(rec.rank_deficient),
        "magnitudes": [float(v) for v in rec.magnitudes],
    }
    truth = None
    scene_path = out / "scene.json"
    if scene_path.exists():
        scene = scene_from_json(_read_json(scene_path))
        sc = score(scene, est, rec, subspace=sub)
        report["score"] = score_to_json(sc)
        truth = _aligned_truth(scene, sub, sc, waveforms)
    write_waveforms_csv(waveforms, out / "waveforms.csv", truth=truth)
    _write_json(out / "recovery.json", report)
    print(f"recovered {len(waveforms)} sources, residual={rec.residual:.3e}")
    return 0


def cmd_certify(config: ExperimentConfig, out: Path) -> int:
    scene, sub, obs = _build_inputs(config)
    cert = build_certificate(scene, sub, grid=config.grid)
    report = certificate_to_json(cert)
    report["version"] = 1
    report["objective_bridge"] = float(np.real(np.vdot(cert.q, obs.y)))
    report["gain_total"] = float(np.abs(scene.gains).sum())
    report["q"] = [[float(v.real), float(v.imag)] for v in cert.q]
    report["valid"] = bool(
        cert.off_support_sup <= 1.0
        and (cert.interp_residuals <= 1e-8).all()
        and (cert.stationarity_residuals <= 1e-8 * cert.mu).all())
    _write_json(out / "certificate.json", report)
    print(f"interp<={cert.interp_residuals.max():.2e} "
          f"off_sup={cert.off_support_sup:.4f} valid={report['valid']}")
    return 0


def run_experiment(config: ExperimentConfig, out: Path) -> int:
    """Full chain with a single report; exit 0 iff the solver reached optimal."""
    out.mkdir(parents=True, exist_ok=True)
    report = {"version": 1, "command": "experiment", "config": config.to_dict()}
    try:
        scene, sub, obs = _build_inputs(config)
        _write_json(out / "config.json", config.to_dict())
        _write_json(out / "scene.json", scene_to_json(scene))
        _write_json(out / "subspace.json", subspace_to_json(sub))
        _write_json(out / "observation.json", observation_to_json(obs))
        if config.noise["kind"] == "awgn":
            report["noise"] = {k: obs.meta[k]
                               for k in ("snr_db_target", "snr_db_achieved")}
        t0 = time.perf_counter()
        sol = _solve_config(config, obs, sub)
        elapsed = time.perf_counter() - t0
        write_solver_log(sol.log, out / "solver_log.csv")
        _write_json(out / "dual.json", _dual_to_json(sol))
        report["solver"] = {k: v for k, v in _dual_to_json(sol).items()
                            if k != "q"}
        del report["solver"]["version"]
        vals = eval_grid(build_polynomial(sol.q, sub), config.grid)
        est = extract_peaks(vals, config.threshold)
        save_grid(vals, out / "grid.bin",
                  meta={"grid": config.grid, "threshold": config.threshold})
        write_peaks_csv(est, out / "peaks.csv")
        report["feasibility_sup"] = feasibility_sup(vals)
        report["peaks"] = [{"tau": s.tau, "f": s.f, "value": float(v)}
                           for s, v in zip(est.shifts, est.peak_values)]
        truth = None
        waveforms = []
        if est.R:
            rec = recover_products(obs.y, [s.as_tuple() for s in est.shifts], sub)
            waveforms = reconstruct_waveforms(rec, sub)
            report["recovery"] = {
                "residual": float(rec.residual),
                "sigma_min": float(rec.sigma_min),
                "rank_deficient": bool(rec.rank_deficient),
                "magnitudes": [float(v) for v in rec.magnitudes],
            }
            sc = score(scene, est, rec, subspace=sub)
            report["score"] = score_to_json(sc)
            truth = _aligned_truth(scene, sub, sc, waveforms)
        write_waveforms_csv(waveforms, out / "waveforms.csv", truth=truth)
        _write_json(out / "report.json", report)
        print(f"status={sol.status} objective={sol.objective:.9f} "
              f"peaks={est.R} ({elapsed:.1f}s)")
        return 0 if sol.status.startswith("optimal") else 1
    except Exception as exc:  # report what broke, then signal failure
        report["error"] = f"{type(exc).__name__}: {exc}"
        _write_json(out / "report.json", report)
        print(f"experiment failed: {report['error']}", file=sys.stderr)
        return 1


# ---------------------------------------------------------------------------
# Diagnostics and sweeps
# ---------------------------------------------------------------------------

def theorem1_diagnostic(L: int, R: int, K: int, ktilde: float = 1.0,
                        delta: float = 0.01) -> dict:
    """Sample-complexity shape ``R K ktilde^4 log^2(R^2K^2L^3/d) log^2((K+1)L^3/d)``.

    The proportionality constants are unknown, so only the dimensionless
    ratio ``L / shape`` is reported, explicitly labeled as such.  Larger
    ratios mean the sample budget clears the bound shape by more.
    """
    if min(L, R, K) < 1 or ktilde <= 0:
        raise ValueError("L, R, K, ktilde must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    log1 = math.log(R * R * K * K * L**3 / delta)
    log2 = math.log((K + 1) * L**3 / delta)
    shape = R * K * ktilde**4 * log1 * log1 * log2 * log2
    return {
        "L": L, "R": R, "K": K, "ktilde": ktilde, "delta": delta,
        "shape": shape,
        "ratio": L / shape,
        "unknown_constants": True,
        "note": "shape evaluated with unit constants; only ratios of "
                "diagnostics at equal constants are meaningful",
        "reference_regime": "ktilde=1 (gaussian rows)",
    }


def _trial_success(config: ExperimentConfig) -> bool:
    scene, sub, obs = _build_inputs(config)
    sol = _solve_config(config, obs, sub)
    vals = eval_grid(build_polynomial(sol.q, sub), config.grid)
    est = extract_peaks(vals, config.threshold)
    if est.R == 0:
        return False
    sc = score(scene, est, None)
    step = 1.0 / config.grid + 1e-12
    return sc.missed == 0 and all(e <= step for e in sc.shift_errors)


def phase_sweep(sweep: dict, out: Path) -> list:
    """Recovery success rates over a grid of (L, K, R) cells.

    Cells run on a thread pool; rows are written in cell-definition order so
    the CSV is byte-identical across runs with the same config.  Trials
    redraw the scene's shifts at the default minimum separation unless the
    base config pins explicit "shifts" (then only subspace, gains, and noise
    are fresh per trial, and every swept R must equal the shift count).
    Base "seeds" entries override the per-trial derivation the same way, so
    a cell can rerun one experiment configuration with only the unpinned
    randomness refreshed.
    """
    if sweep.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ValueError("unsupported sweep config version")
    trials = int(sweep.get("trials", 1))
    if trials < 1:
        raise ValueError("trial count must be >= 1")
    seed = int(sweep.get("seed", 0))
    base = dict(sweep.get("base", {}))
    shifts_spec = base.pop("shifts", "random-separated")
    pinned_seeds = dict(base.pop("seeds", {}))
    cells = sweep.get("cells", {})
    grid_L = [int(v) for v in cells.get("L", [])]
    grid_K = [int(v) for v in cells.get("K", [])]
    grid_R = [int(v) for v in cells.get("R", [])]
    if not (grid_L and grid_K and grid_R):
        raise ValueError("sweep cells need nonempty L, K, R lists")
    points = list(itertools.product(grid_L, grid_K, grid_R))

    def run_cell(item):
        ci, (L, K, R) = item
        if R == 0:
            return trials  # nothing to miss
        wins = 0
        for t in range(trials):
            s1, s2, s3 = np.random.SeedSequence([seed, ci, t]).generate_state(3)
            trial_seeds = {"subspace": int(s1), "scene": int(s2),
                           "noise": int(s3), **pinned_seeds}
            config = ExperimentConfig(
                L=L, K=K, R=R, shifts=shifts_spec, seeds=trial_seeds, **base)
            wins += _trial_success(config)
        return wins

    with ThreadPoolExecutor() as pool:
        successes = list(pool.map(run_cell, enumerate(points)))

    out.mkdir(parents=True, exist_ok=True)
    rows = []
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["L", "K", "R", "trials", "successes", "rate"])
        for (L, K, R), wins in zip(points, successes):
            rate = wins / trials
            writer.writerow([L, K, R, trials, wins, repr(rate)])
            rows.append((L, K, R, trials, wins, rate))
    return rows


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(p, *flags):
    p.add_argument("--out", default="out", help="working directory for artifacts")
    if "seed" in flags:
        p.add_argument("--seed", type=int, help="override all seeds from one base")
    if "grid" in flags:
        p.add_argument("--grid", type=int, help="evaluation grid size per axis")
    if "threshold" in flags:
        p.add_argument("--threshold", type=float, help="peak extraction level")
    if "zeta" in flags:
        p.add_argument("--zeta", type=float, help="noise-cone weight (noisy runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blindsr",
        description="Blind delay-Doppler super-resolution pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="draw scene, subspace, and samples")
    p.add_argument("config", help=f"preset ({'/'.join(PRESETS)}) or JSON path")
    _add_common(p, "seed", "grid", "threshold", "zeta")

    p = sub.add_parser("solve", help="assemble and solve the dual program")
    _add_common(p, "zeta")

    p = sub.add_parser("localize", help="rasterize ||f||^2 and extract peaks")
    _add_common(p, "grid", "threshold")

    p = sub.add_parser("recover", help="least-squares waveform products at peaks")
    _add_common(p)

    p = sub.add_parser("certify", help="kernel-based certificate for a config")
    p.add_argument("config", help=f"preset ({'/'.join(PRESETS)}) or JSON path")
    _add_common(p, "seed", "grid")

    p = sub.add_parser("experiment", help="run the full pipeline and report")
    p.add_argument("config", help=f"preset ({'/'.join(PRESETS)}) or JSON path")
    _add_common(p, "seed", "grid", "threshold", "zeta")

    p = sub.add_parser("sweep", help="success rates over (L, K, R) cells")
    p.add_argument("config", help="sweep config JSON path")
    _add_common(p, "seed")

    p = sub.add_parser("diagnostic", help="sample-bound shape up to constants")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--R", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--ktilde", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.01)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "diagnostic":
            report = theorem1_diagnostic(args.L, args.R, args.K,
                                         ktilde=args.ktilde, delta=args.delta)
            print(json.dumps(report, sort_keys=True, indent=1))
            return 0
        out = Path(args.out)
        if args.command in ("synth", "certify", "experiment"):
            config = _apply_overrides(load_config(args.config), args)
            out.mkdir(parents=True, exist_ok=True)
            if args.command == "synth":
                return cmd_synth(config, out)
            if args.command == "certify":
                return cmd_certify(config, out)
            return run_experiment(config, out)
        if args.command == "solve":
            return cmd_solve(out, args)
        if args.command == "localize":
            return cmd_localize(out, args)
        if args.command == "recover":
            return cmd_recover(out)
        if args.command == "sweep":
            sweep = json.loads(Path(args.config).read_text())
            if getattr(args, "seed", None) is not None:
                sweep["seed"] = args.seed
            rows = phase_sweep(sweep, out)
            for L, K, R, trials, wins, rate in rows:
                print(f"L={L} K={K} R={R}: {wins}/{trials} = {rate:.2f}")
            return 0
        raise ValueError(f"unhandled command {args.command!r}")
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

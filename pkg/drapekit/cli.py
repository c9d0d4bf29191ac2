"""
Command-line entry point.

    python -m drapekit <command> [--config run.json] [--section.key value ...]

Commands: drape, optimize, gradcheck, synth-target, experiment, export-assets.
Exit codes: 0 ok, 1 numerical failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from pydantic import ValidationError

from . import config
from .errors import (
    AdjointError,
    CageError,
    ConfigError,
    DimensionMismatchError,
    DrapekitError,
    LabelMismatchError,
    PatternError,
    SimulationError,
    TopologyMismatchError,
)
from .schemas import RunConfig

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2

# ValueError covers invalid arguments raised below the CLI (materials, targets, groups, fits).
_USAGE_ERRORS = (ConfigError, ValidationError, FileNotFoundError, PatternError, LabelMismatchError,
                 DimensionMismatchError, TopologyMismatchError, ValueError)
# Checked before the usage errors: LinAlgError derives from ValueError.
_NUMERIC_ERRORS = (SimulationError, AdjointError, CageError, FloatingPointError, np.linalg.LinAlgError)


class GradcheckFailed(DrapekitError):
    pass


# ---------- config ----------

def _decode(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_overrides(tokens: Sequence[str]) -> dict:
    """['--simulation.dt', '0.01', '--loss.rho=2'] -> {'simulation': {'dt': 0.01}, 'loss': {'rho': 2}}"""
    out: dict = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(tok, "unrecognized argument; overrides look like --section.key value")
        key = tok[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
        else:
            raw = next(it, None)
            if raw is None:
                raise ConfigError(key, "override is missing a value")
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "conflicting overrides")
        node[parts[-1]] = _decode(raw)
    return out


def _merge(base: dict, extra: dict) -> dict:
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def load_config(path: str | None, overrides: dict, args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError("--config", f"file not found: {path}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from exc
    _merge(data, overrides)
    for flag in ("output_dir", "seed", "threads", "log_level"):
        value = getattr(args, flag, None)
        if value is not None:
            data[flag] = value
    return RunConfig.model_validate(data)


def _prepare_output(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.json").write_text(cfg.model_dump_json(indent=2), encoding="utf-8")
    return out


# ---------- commands ----------

def cmd_drape(cfg: RunConfig, args: argparse.Namespace) -> int:
    from .scene import build_scene
    from .xpbd import energies, energy_logger, export_obj, export_trajectory_obj

    out = _prepare_output(cfg)
    scene = build_scene(cfg)
    compiled = scene.compile()
    log = energy_logger(compiled.model, out / "energy.jsonl")
    try:
        traj = scene.drape(compiled, max_steps=args.steps, fixed_steps=True if args.steps else None, on_step=log)
    finally:
        log.close()
    final = traj.final
    export_obj(final.x, scene.sim_faces, out / "drape.obj")
    frames = export_trajectory_obj(traj, scene.sim_faces, out / "frames", args.frames) if args.frames else []
    e = energies(compiled.model, final)
    quality = scene.quality()
    contacts = len(traj.records[-1].contacts) if traj.records else 0
    summary = {
        "steps": traj.n_steps, "converged": traj.converged, "max_speed": final.max_speed,
        "max_strain": e["max_strain"], "quality_min": quality.min, "quality_mean": quality.mean,
        "contacts": contacts, "frames": len(frames),
    }
    (out / "quality.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")

    print("\n=== Drape Report ===")
    print(f"Vertices          : {scene.n_sim} ({scene.n_pattern} pattern)")
    print(f"Steps             : {traj.n_steps} ({'converged' if traj.converged else 'not converged'})")
    print(f"Max speed         : {final.max_speed:.3e} m/s")
    print(f"Max strain        : {e['max_strain']:.3e}")
    print(f"Active contacts   : {contacts}")
    print(f"Triangle quality  : min {quality.min:.3f} / mean {quality.mean:.3f}")
    print(f"Output            : {out / 'drape.obj'}")
    if frames:
        print(f"Frames            : {len(frames)} in {out / 'frames'}")
    print("====================\n")
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, args: argparse.Namespace) -> int:
    from .loss import load_target
    from .optimizer import CoOptimizer
    from .pattern import save_pattern
    from .scene import build_scene, resolve_path
    from .xpbd import export_obj

    if not cfg.paths.target:
        raise ConfigError("paths.target", "optimize needs a target garment")
    out = _prepare_output(cfg)
    target = load_target(resolve_path(cfg.paths.target, "paths.target"))
    scene = build_scene(cfg, target=target)

    on_iteration = None
    if cfg.optimizer.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)

        def on_iteration(record, ev):
            export_obj(ev.trajectory.final.x, scene.sim_faces, snap_dir / f"iter_{record.iteration:04d}.obj")

    optimizer = CoOptimizer(scene, target, cfg, on_iteration=on_iteration)
    result = optimizer.run()
    rep = result.report
    xbar = result.best.compiled.xbar
    save_pattern(scene.pattern.with_vertices(xbar), out / "pattern_opt.obj")
    export_obj(result.best.trajectory.final.x, scene.sim_faces, out / "drape_opt.obj")
    if optimizer.cage is not None:
        optimizer.cage.export(out / "cage.json", result.params.values["cage"])
    (out / "report.json").write_text(rep.model_dump_json(indent=2), encoding="utf-8")

    print("\n=== Optimization Report ===")
    print(f"Iterations        : {len(rep.iterations)}")
    print(f"Stop reason       : {rep.stop_reason}")
    print(f"Loss              : {rep.initial_loss:.6e} -> {rep.final_loss:.6e}")
    for k, v in rep.final_terms.items():
        print(f"  {k:<16}: {v:.6e}")
    print(f"Bend compliance   : {rep.parameters['bend_compliance'][0]:.6g}")
    if rep.quality_final is not None:
        print(f"Triangle quality  : min {rep.quality_initial.min:.3f} -> {rep.quality_final.min:.3f}")
    for note in rep.notes:
        print(f"Note              : {note}")
    print(f"Report            : {out / 'report.json'}")
    print("===========================\n")
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, args: argparse.Namespace) -> int:
    from .gradcheck import run_gradcheck

    out = _prepare_output(cfg)
    report = run_gradcheck(cfg, args.group or None)
    (out / "gradcheck.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")

    print("\n=== Gradient Check Report ===")
    print(f"{'group':<9} {'parameter':<22} {'analytic':>14} {'finite diff':>14} {'rel err':>9}  h")
    for r in report.rows:
        flag = "" if r.passed else "  FAIL"
        if r.noisy:
            flag += "  (noisy)"
        print(f"{r.group:<9} {r.parameter:<22} {r.analytic:>14.6e} {r.finite_difference:>14.6e} "
              f"{r.rel_error:>9.2e}  {r.best_h:.0e}{flag}")
    failed = sum(not r.passed for r in report.rows)
    print(f"Failed            : {failed} / {len(report.rows)} (tolerance {report.tolerance:g})")
    print("=============================\n")
    if not report.passed:
        raise GradcheckFailed(f"{failed} gradient entries exceed tolerance")
    return EXIT_OK


def cmd_synth_target(cfg: RunConfig, args: argparse.Namespace) -> int:
    from .loss import save_target
    from .scene import build_scene
    from .synth import synth_target
    from .xpbd import export_obj

    out = _prepare_output(cfg)
    scene = build_scene(cfg)
    synth = synth_target(scene, cfg.synth, cfg.seed)
    path = out / cfg.synth.output
    save_target(synth.target, path)
    export_obj(synth.truth, scene.sim_faces, out / "truth.obj")

    print("\n=== Synthetic Target Report ===")
    print(f"Points            : {synth.target.interior.shape[0]} of {synth.truth.shape[0]}")
    print(f"Boundary loops    : {', '.join(synth.target.polylines)}")
    print(f"Noise / dropout   : {cfg.synth.noise:g} m / {cfg.synth.dropout:g}")
    print(f"Chamfer to truth  : {synth.chamfer_mm:.4g} mm^2")
    print(f"Drape steps       : {synth.trajectory.n_steps}")
    print(f"Target            : {path}")
    print("===============================\n")
    return EXIT_OK


def cmd_experiment(cfg: RunConfig, args: argparse.Namespace) -> int:
    from .experiments import EXPERIMENTS, run_experiment

    if args.name not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {args.name!r}; choose from {sorted(EXPERIMENTS)}")
    out = _prepare_output(cfg)
    report = run_experiment(args.name, cfg)
    (out / f"experiment_{args.name}.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")

    print(f"\n=== Experiment Report: {args.name} ===")
    for k, v in report.metrics.items():
        print(f"{k:<24}: {v:.6g}")
    for k, ok in report.checks.items():
        print(f"{k:<24}: {'ok' if ok else 'FAILED'}")
    print("=" * 32 + "\n")
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_export_assets(cfg: RunConfig, args: argparse.Namespace) -> int:
    from .assets import export_assets

    out = Path(args.dir) if args.dir else Path(cfg.output_dir) / "assets"
    written = export_assets(out)
    print("\n=== Asset Export Report ===")
    for p in written:
        print(f"  - {p}")
    print("===========================\n")
    return EXIT_OK


COMMANDS = {
    "drape": cmd_drape,
    "optimize": cmd_optimize,
    "gradcheck": cmd_gradcheck,
    "synth-target": cmd_synth_target,
    "experiment": cmd_experiment,
    "export-assets": cmd_export_assets,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drapekit", description="Differentiable garment drape and inverse design.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration.")
    common.add_argument("--out", dest="output_dir", help="Output directory (default DRAPEKIT_OUTPUT_DIR).")
    common.add_argument("--seed", type=int, help="Random seed (default DRAPEKIT_SEED).")
    common.add_argument("--threads", type=int, help="Worker threads for numerical libraries.")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING, ...")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("drape", parents=[common], help="Drape a pattern on the body and export the result.")
    p.add_argument("--steps", type=int, help="Run exactly this many steps.")
    p.add_argument("--frames", type=int, default=0, help="Export every N-th state as OBJ (0 = off).")

    sub.add_parser("optimize", parents=[common], help="Co-optimize pattern, material and body against a target.")

    p = sub.add_parser("gradcheck", parents=[common], help="Compare adjoint gradients to finite differences.")
    p.add_argument("--group", action="append", help="Parameter group to check (repeatable).")

    sub.add_parser("synth-target", parents=[common], help="Generate a synthetic target garment.")

    p = sub.add_parser("experiment", parents=[common], help="Run a recovery or ablation scenario.")
    p.add_argument("name", help="material, pattern, body or ablations")

    p = sub.add_parser("export-assets", parents=[common], help="Write the bundled assets to files.")
    p.add_argument("--dir", help="Destination directory (default <out>/assets).")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        cfg = load_config(args.config, parse_overrides(extra), args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    config.configure_logging(cfg.log_level)
    if cfg.threads != config.APPLIED_THREADS:
        logger.warning("threads=%d was set after the numerical libraries started; running with %d "
                       "(use --threads or DRAPEKIT_THREADS)", cfg.threads, config.APPLIED_THREADS)
    try:
        return COMMANDS[args.command](cfg, args)
    except (GradcheckFailed, *_NUMERIC_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DrapekitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end: ``run``, ``validate`` and ``list-presets``.

Exit codes: 0 on completion, 1 for an invalid config, 2 when a model
precondition fails, 3 when zero-hit estimates dominate a verdict.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import subprocess
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy

from . import __version__
from .config import ExperimentFile, config_hash, dump_config, load_config, parse_config
from .errors import ConfigError, PreconditionError
from .experiments import CSV_COLUMNS, ExperimentResult, run_experiment
from .presets import list_presets, preset_path

log = logging.getLogger("mvsubexp")

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_ZERO_HIT = 0, 1, 2, 3
ZERO_HIT_DOMINANCE = 0.5


def _git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=Path(__file__).resolve().parent,
                             capture_output=True, text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 else "unknown"


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else str(float(v))
    return str(v)


def write_csv(path: Path, results: Sequence[ExperimentResult]):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for res in results:
            for row in res.rows:
                full = dict(row, experiment=res.kind, name=res.name)
                w.writerow([_fmt(full.get(c)) for c in CSV_COLUMNS])


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def apply_overrides(cfg: ExperimentFile, seed: int | None, workers: int | None) -> ExperimentFile:
    eng = cfg.engine
    upd = {}
    if seed is not None:
        upd["seed"] = seed
    if workers is not None:
        upd["workers"] = workers
    elif os.environ.get("MVSUBEXP_WORKERS"):
        upd["workers"] = int(os.environ["MVSUBEXP_WORKERS"])
    if not upd:
        return cfg
    return cfg.model_copy(update={"engine": eng.model_copy(update=upd)})


def run_config(cfg: ExperimentFile, outdir: Path, budget_scale: float = 1.0,
               source: str = "") -> tuple[int, list[ExperimentResult]]:
    """Run every experiment in ``cfg`` and write ``report.json`` and ``data.csv``."""
    outdir.mkdir(parents=True, exist_ok=True)
    engine = cfg.engine.build(budget_scale)
    results: list[ExperimentResult] = []
    code = EXIT_OK
    errors = []
    for exp in cfg.experiments:
        log.info("running %s (%s)", exp.name or exp.experiment, exp.experiment)
        try:
            res = run_experiment(exp, engine)
        except PreconditionError as exc:
            errors.append({"name": exp.name, "experiment": exp.experiment, "error": type(exc).__name__,
                           "message": str(exc)})
            code = EXIT_PRECONDITION
            continue
        results.append(res)
        if res.zero_hit_fraction > ZERO_HIT_DOMINANCE and code == EXIT_OK:
            code = EXIT_ZERO_HIT
    report = {
        "source": source,
        "description": cfg.description,
        "seed": cfg.engine.seed,
        "budget": engine.budget,
        "budget_scale": budget_scale,
        "workers": engine.workers,
        "config_hash": config_hash(cfg),
        "git_revision": _git_revision(),
        "versions": {"mvsubexp": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "config": json.loads(dump_config(cfg)),
        "experiments": [r.report() for r in results],
        "errors": errors,
        "exit_code": code,
    }
    (outdir / "report.json").write_text(json.dumps(report, indent=2, default=_json_default, allow_nan=True))
    write_csv(outdir / "data.csv", results)
    return code, results


def _resolve(config: str) -> Path:
    p = Path(config)
    if p.exists():
        return p
    try:
        return preset_path(config)
    except KeyError:
        return p


def cmd_run(args) -> int:
    path = _resolve(args.config)
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        print(f"invalid config {path}:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = apply_overrides(cfg, args.seed, args.workers)
    outdir = Path(args.outdir or Path("runs") / path.stem)
    code, results = run_config(cfg, outdir, args.budget_scale, str(path))
    for r in results:
        print(f"{r.name:<32} {r.kind:<20} {r.verdict:<16} {r.elapsed_s:8.1f}s")
    print(f"wrote {outdir / 'report.json'} and {outdir / 'data.csv'} (exit {code})")
    return code


def cmd_validate(args) -> int:
    path = _resolve(args.config)
    try:
        cfg = load_config(path)
        again = parse_config(dump_config(cfg))
    except ConfigError as exc:
        print(f"invalid config {path}:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    if again != cfg:
        print("config does not round-trip", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{path}: ok ({len(cfg.experiments)} experiments, hash {config_hash(cfg)[:12]})")
    return EXIT_OK


def cmd_list(args) -> int:
    for name, desc in list_presets():
        print(f"{name:<24} {desc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvsubexp", description="Heavy-tailed rare-set experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a config file or a preset name")
    r.add_argument("config")
    r.add_argument("--outdir")
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--budget-scale", type=float, default=1.0)
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a config against the schema")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    ls = sub.add_parser("list-presets", help="show bundled presets")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "budget_scale", 1.0) is not None and getattr(args, "budget_scale", 1.0) <= 0:
        print("--budget-scale must be positive", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

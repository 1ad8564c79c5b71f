"""Command-line runner: ``satiss run CONFIG [--out DIR] [--format ...]``.

Exit codes: 0 check passed, 1 check failed, 2 configuration error,
3 numerical failure (blow-up guard or diverging Picard iteration).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time

from . import __version__
from .config import ConfigError, canonical, load_config
from .experiments import run_experiment
from .systems import BlowUpError, PicardDivergenceError

SCHEMA_VERSION = 1
FORMATS = ("json", "csv", "gnuplot-dat")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def config_hash(cfg) -> str:
    blob = json.dumps(canonical({"experiment": cfg.experiment, "system": cfg.system, "numerics": cfg.numerics}),
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def build_record(cfg, outcome, wall_time: float) -> dict:
    return canonical({
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "config": {"system": cfg.system, "numerics": cfg.numerics},
        "columns": [{"name": n, "unit": u} for n, u in outcome.columns],
        "rows": outcome.rows,
        "verdict": "pass" if outcome.passed else "fail",
        "summary": outcome.summary,
        "notes": outcome.notes,
        "provenance": {"config_hash": config_hash(cfg), "code_version": __version__},
        "wall_time": wall_time,
    })


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_json_safe(x) for x in v]
    return v


def _numeric(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, bool):
        return "1" if v else "0"
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit(record: dict, fmt: str, out_dir: str) -> str:
    """Write the record as ``<experiment>.<ext>`` under ``out_dir`` and return the path."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    ext = {"json": "json", "csv": "csv", "gnuplot-dat": "dat"}[fmt]
    path = os.path.join(out_dir, f"{record['experiment']}.{ext}")
    cols = record["columns"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if fmt == "json":
            json.dump(_json_safe(record), fh, indent=2, sort_keys=True)
            fh.write("\n")
        elif fmt == "csv":
            writer = csv.writer(fh)
            writer.writerow([f"{c['name']} [{c['unit']}]" for c in cols])
            for row in record["rows"]:
                writer.writerow(["" if row.get(c["name"]) is None else row.get(c["name"]) for c in cols])
        else:
            fh.write(f"# experiment: {record['experiment']}  verdict: {record['verdict']}\n")
            fh.write("# " + " ".join(f"{c['name']}[{c['unit']}]" for c in cols) + "\n")
            for row in record["rows"]:
                fh.write(" ".join(_numeric(row.get(c["name"])) for c in cols) + "\n")
    return path


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="satiss", description="Stability experiments for saturated collocated systems.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a YAML config")
    run.add_argument("config")
    run.add_argument("--out", default=".", help="output directory (default: current directory)")
    run.add_argument("--format", choices=FORMATS, default="json")
    run.add_argument("--strict-alignment", action="store_true",
                     help="reject periodic shifts that are not whole grid cells instead of interpolating")
    run.add_argument("--seed", type=int, default=None, help="override numerics.seed")
    run.add_argument("--threads", type=int, default=1, help="worker threads for sample sweeps")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg.numerics["seed"] = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    start = time.perf_counter()
    try:
        outcome = run_experiment(cfg, strict=args.strict_alignment, threads=args.threads)
    except (BlowUpError, PicardDivergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    record = build_record(cfg, outcome, time.perf_counter() - start)
    try:
        path = emit(record, args.format, args.out)
    except OSError as exc:
        print(f"cannot write results: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{cfg.experiment}: {record['verdict']} -> {path}")
    return EXIT_PASS if outcome.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

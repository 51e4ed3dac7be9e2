"""Command-line entry point: ``rfpim-ci <subcommand> ...``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal failure.
Results go to files under ``--out``; progress goes to standard error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import traceback
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from ._rng import derive_seed, stream
from .config import ConfigError, ExperimentConfig, config_to_json, parse_config
from .dataset import DataError, load_csv, save_csv
from .harness import (
    cached_ground_truth,
    coverage,
    run_benchmark,
    run_simulation,
    stratify,
    summarize_benchmark,
    write_benchmark,
    write_coverage,
    write_results,
    GROUND_TRUTH_COLUMNS,
)
from .importance import estimate_importance
from .imputation import ImputationError, ImputeMethod, impute

log = logging.getLogger("rfpim_ci")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
_IMPORTANCE_KEY, _IMPUTE_KEY = 4, 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_common(sp, data=False, threads=False):
    sp.add_argument("--out", required=True, type=Path, help="output directory")
    sp.add_argument("--config", type=Path, help="JSON experiment configuration")
    sp.add_argument("--seed", type=int, help="override master_seed")
    if data:
        sp.add_argument("--data", required=True, type=Path, help="input CSV")
        sp.add_argument("--target", required=True, help="response column name")
    if threads:
        sp.add_argument("--threads", type=int, help="worker count (default: $RFPIM_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rfpim-ci", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    sp = sub.add_parser("simulate", help="coverage simulation for one condition")
    _add_common(sp, threads=True)

    sp = sub.add_parser("ground-truth", help="Monte-Carlo ground-truth importances")
    _add_common(sp, threads=True)
    sp.add_argument("--generator", type=int, action="append",
                    help="generator id (repeatable; default: the config's generator)")

    sp = sub.add_parser("importance", help="importance CIs on a fully observed CSV")
    _add_common(sp, data=True)

    sp = sub.add_parser("impute", help="impute a CSV with blanks")
    _add_common(sp, data=True)
    sp.add_argument("--method", choices=[m.value for m in ImputeMethod], default="PMM_CHAINED")
    sp.add_argument("--R", type=int, dest="R", help="number of imputations (PMM_CHAINED)")

    sp = sub.add_parser("benchmark", help="standardized CIs on a fully observed CSV")
    _add_common(sp, data=True, threads=True)
    return parser


def _threads(args) -> int:
    value = args.threads
    if value is None:
        env = os.environ.get("RFPIM_THREADS")
        try:
            value = int(env) if env else 1
        except ValueError:
            raise UsageError(f"RFPIM_THREADS must be an integer, got {env!r}") from None
    if value < 1:
        raise UsageError("--threads must be >= 1")
    return value


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise UsageError("--seed must be non-negative")
        cfg = replace(cfg, master_seed=args.seed)
    return cfg


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class Manifest:
    """``manifest.json``: written before any result, finalized at the end."""

    def __init__(self, out: Path, command: str, cfg: ExperimentConfig, params: dict, inputs=()):
        self.path = out / "manifest.json"
        hashed = {
            "command": command,
            "config": config_to_json(cfg),
            "params": params,
            "inputs": {str(p): _sha256(p) for p in inputs},
        }
        blob = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
        self.data = {
            "tool": "rfpim-ci",
            "version": __version__,
            "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
            "master_seed": cfg.master_seed,
            **hashed,
            "started": _now(),
            "finished": None,
            "outputs": [],
        }
        self._write()

    def _write(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def output(self, path: Path) -> Path:
        self.data["outputs"].append(path.name)
        self._write()
        return path

    def finish(self):
        self.data["finished"] = _now()
        self._write()


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    n_jobs = _threads(args)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "simulate", cfg, {})
    truth = cached_ground_truth(cfg, cfg.generator, out / "ground_truth", n_jobs)
    log.info("running %d replicates with %d worker(s)", cfg.n_sim, n_jobs)
    results = run_simulation(cfg, truth, n_jobs)
    write_results(results, cfg, manifest.output(out / "results.csv"))
    write_coverage(coverage(results, truth), truth, manifest.output(out / "coverage.csv"))
    manifest.finish()
    return EXIT_OK


def cmd_ground_truth(args) -> int:
    cfg = _load_config(args)
    n_jobs = _threads(args)
    gens = args.generator or [cfg.generator]
    for g in gens:
        if not 1 <= g <= 12:
            raise UsageError(f"generator must be in 1..12, got {g}")
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "ground-truth", cfg, {"generators": gens})
    truths = [cached_ground_truth(replace(cfg, generator=g), g, out / "cache", n_jobs) for g in gens]
    with manifest.output(out / "ground_truth.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GROUND_TRUTH_COLUMNS)
        for gt in truths:
            for j, s in enumerate(gt.scores):
                w.writerow([gt.generator, j + 1, repr(float(s)), gt.reps, gt.n_ref, gt.seed])
    strata = stratify(truths)
    with manifest.output(out / "strata.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generator", "feature", "stratum"])
        for (g, j), s in sorted(strata.items()):
            w.writerow([g, j + 1, s.value])
    manifest.finish()
    return EXIT_OK


def cmd_importance(args) -> int:
    cfg = _load_config(args)
    data = load_csv(args.data, args.target)
    if not data.is_complete():
        raise DataError("importance needs a fully observed CSV; run `impute` first")
    complete = data.to_complete()
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "importance", cfg, {"target": args.target}, [args.data])
    seed = cfg.master_seed
    forest_cfg = replace(cfg.forest, seed=derive_seed(seed, _IMPORTANCE_KEY, 0))
    estimates = estimate_importance(
        complete, forest_cfg, stream(seed, _IMPORTANCE_KEY, 1), K=cfg.K, b=cfg.b, alpha=cfg.alpha
    )
    with manifest.output(out / "importance.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "point", "variance", "ci_lower", "ci_upper", "alpha", "K", "b", "seed"])
        for e in estimates:
            w.writerow([
                complete.columns[e.feature], repr(e.point), repr(e.variance), repr(e.ci_lower),
                repr(e.ci_upper), repr(e.alpha), e.K, e.b, seed,
            ])
    manifest.finish()
    return EXIT_OK


def cmd_impute(args) -> int:
    cfg = _load_config(args)
    data = load_csv(args.data, args.target)
    method = ImputeMethod(args.method)
    R = args.R if args.R is not None else (cfg.imputer.R if method is ImputeMethod.PMM_CHAINED else 1)
    if R < 1:
        raise UsageError("--R must be >= 1")
    if method is ImputeMethod.RF_CHAINED and R != 1:
        raise UsageError("RF_CHAINED produces a single imputation; drop --R")
    imp_cfg = replace(cfg.imputer, method=method, R=R, seed=derive_seed(cfg.master_seed, _IMPUTE_KEY))
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "impute", cfg, {"method": method.value, "R": R, "target": args.target}, [args.data])
    result = impute(data, imp_cfg)
    stem = args.data.stem
    for r, ds in enumerate(result.completed, start=1):
        save_csv(ds, manifest.output(out / f"{stem}_r{r}.csv"))
    manifest.finish()
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _load_config(args)
    n_jobs = _threads(args)
    data = load_csv(args.data, args.target)
    if not data.is_complete():
        raise DataError("benchmark input must be fully observed")
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, "benchmark", cfg, {"target": args.target}, [args.data])
    rows = run_benchmark(data, cfg, n_jobs)
    write_benchmark(rows, data.columns, manifest.output(out / "benchmark.csv"))
    summary = summarize_benchmark(rows)
    with manifest.output(out / "benchmark_summary.csv").open("w", newline="") as fh:
        fields = list(summary[0]) if summary else ["feature", "method"]
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(summary)
    manifest.finish()
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "ground-truth": cmd_ground_truth,
    "importance": cmd_importance,
    "impute": cmd_impute,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"rfpim-ci: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"rfpim-ci: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ImputationError) as exc:
        print(f"rfpim-ci: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

"""Coverage simulations and the real-data benchmark.

A replicate is the unit of work: generate, ampute, then for each method
impute (or not), estimate importances with jackknife CIs, and pool via Rubin's
rule where there are several imputations. All randomness of replicate ``rep``
comes from streams keyed by ``(master_seed, rep, ...)``, so the results do not
depend on how replicates are distributed over workers.

Within a replicate every arm estimates its first completed dataset with the
same forest stream (common random numbers); further Rubin imputations get
their own streams.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from ._rng import derive_seed, stream
from .config import ExperimentConfig, Method, forest_digest
from .dataset import CompleteDataset, DataError, IncompleteDataset
from .importance import EmptyOOBError, default_subsample_size, ishwaran_ci, jackknife
from .imputation import ImputationError, ImputeMethod, ImputerConfig, impute
from .missingness import AmputationSpec, ampute_mcar
from .pooling import pool, rubin_ci
from .simgen import GroundTruth, generate, ground_truth_importance

log = logging.getLogger(__name__)

# stream keys
_REP, _GT, _BENCH = 1, 2, 3
_DATA, _AMPUTE, _IMPUTE, _ESTIMATE, _FOREST = 0, 1, 2, 3, 4
_METHOD_CODE = {Method.NONE: 0, Method.SINGLE_PMM: 1, Method.SINGLE_RF: 2, Method.RUBIN_PMM: 3}

RESULT_COLUMNS = (
    "condition_id", "generator", "n", "mechanism", "rate", "method", "replicate",
    "feature", "point", "variance", "ci_lower", "ci_upper", "covered", "std_length",
)
GROUND_TRUTH_COLUMNS = ("generator", "feature", "score", "reps", "n_ref", "seed")


class Stratum(str, Enum):
    ZERO = "ZERO"
    HIGH = "HIGH"
    MODERATE = "MODERATE"


@dataclass(frozen=True)
class ReplicateResult:
    replicate: int
    method: str
    feature: int  # 0-based
    point: float
    variance: float
    ci_lower: float
    ci_upper: float
    covered: bool | None = None
    std_length: float | None = None

    @property
    def length(self) -> float:
        return self.ci_upper - self.ci_lower


@dataclass
class CoverageReport:
    coverage: dict[tuple[str, int], float]
    counts: dict[tuple[str, int], int]
    mean_std_length: dict[tuple[str, int], float] = field(default_factory=dict)
    strata: dict[int, Stratum] = field(default_factory=dict)

    def rows(self, truth: GroundTruth) -> list[dict]:
        out = []
        for (method, j), cov in sorted(self.coverage.items(), key=lambda kv: (_method_order(kv[0][0]), kv[0][1])):
            out.append({
                "method": method,
                "feature": j + 1,
                "stratum": self.strata[j].value if j in self.strata else "",
                "truth": _fmt(truth.scores[j]),
                "coverage": _fmt(cov),
                "n_valid": self.counts[(method, j)],
                "mean_std_length": _fmt(self.mean_std_length.get((method, j))),
            })
        return out


def _method_order(name: str) -> int:
    return _METHOD_CODE.get(Method(name), 99)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return repr(float(x))


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------


def _estimate(ds: CompleteDataset, cfg: ExperimentConfig, root: tuple, r: int):
    """Jackknife estimate for completed dataset ``r`` under the stream prefix ``root``."""
    seed = cfg.master_seed
    forest_cfg = replace(cfg.forest, seed=derive_seed(seed, *root, _FOREST, r))
    b = default_subsample_size(ds.n) if cfg.b is None else cfg.b
    return jackknife(ds, forest_cfg, cfg.K, b, stream(seed, *root, _ESTIMATE, r))


def _imputer_for(method: Method, cfg: ExperimentConfig, root: tuple) -> ImputerConfig:
    seed = derive_seed(cfg.master_seed, *root, _IMPUTE, _METHOD_CODE[method])
    if method is Method.SINGLE_RF:
        return replace(cfg.imputer, method=ImputeMethod.RF_CHAINED, R=1, seed=seed)
    R = 1 if method is Method.SINGLE_PMM else cfg.imputer.R
    return replace(cfg.imputer, method=ImputeMethod.PMM_CHAINED, R=R, seed=seed)


def method_intervals(
    method: Method,
    complete: CompleteDataset,
    incomplete: IncompleteDataset,
    cfg: ExperimentConfig,
    root: tuple,
):
    """Per-feature (point, variance, lower, upper) arrays for one arm."""
    if method is Method.NONE:
        datasets = [complete]
    else:
        datasets = impute(incomplete, _imputer_for(method, cfg, root)).completed
    estimates = [_estimate(ds, cfg, root, r) for r, ds in enumerate(datasets)]
    points = np.array([e[0] for e in estimates])
    variances = np.array([e[1] for e in estimates])
    p = complete.p
    out = np.empty((p, 4))
    for j in range(p):
        if method is Method.RUBIN_PMM:
            est = pool(points[:, j], variances[:, j])
            lo, hi = rubin_ci(est, cfg.alpha)
            out[j] = est.mean_point, est.total_var, lo, hi
        else:
            lo, hi = ishwaran_ci(points[0, j], variances[0, j], cfg.alpha)
            out[j] = points[0, j], variances[0, j], lo, hi
    return out


_RECOVERABLE = (ImputationError, EmptyOOBError, np.linalg.LinAlgError)


def run_replicate(cfg: ExperimentConfig, rep: int, truth: GroundTruth | None = None) -> list[ReplicateResult]:
    root = (_REP, rep)
    complete = generate(cfg.generator, cfg.n, cfg.p, stream(cfg.master_seed, *root, _DATA))
    spec = AmputationSpec(cfg.mechanism, cfg.rate, cfg.cond_feature)
    incomplete = spec.apply(complete, stream(cfg.master_seed, *root, _AMPUTE))
    results = []
    for method in cfg.methods:
        try:
            table = method_intervals(method, complete, incomplete, cfg, root)
        except _RECOVERABLE as exc:
            log.warning("replicate %d: method %s failed: %s", rep, method.value, exc)
            continue
        for j, (point, var, lo, hi) in enumerate(table):
            covered = None if truth is None else bool(lo <= truth.scores[j] <= hi)
            results.append(ReplicateResult(rep, method.value, j, point, var, lo, hi, covered))
    return results


def _parallel(func, items, n_jobs: int):
    if n_jobs <= 1:
        return [func(i) for i in items]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs, backend="loky")(delayed(func)(i) for i in items)


class _Replicator:
    # a picklable callable for the process pool
    def __init__(self, cfg, truth):
        self.cfg, self.truth = cfg, truth

    def __call__(self, rep):
        return run_replicate(self.cfg, rep, self.truth)


def run_simulation(cfg: ExperimentConfig, truth: GroundTruth | None, n_jobs: int = 1) -> list[ReplicateResult]:
    batches = _parallel(_Replicator(cfg, truth), range(cfg.n_sim), n_jobs)
    results = [r for batch in batches for r in batch]
    if Method.NONE in cfg.methods:
        results = attach_std_lengths(results)
    return results


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------


def ground_truth_seed(cfg: ExperimentConfig, generator: int) -> int:
    return derive_seed(cfg.master_seed, _GT, generator)


def ground_truth_path(cache_dir, cfg: ExperimentConfig, generator: int) -> Path:
    seed = ground_truth_seed(cfg, generator)
    name = (
        f"ground_truth_g{generator}_n{cfg.n_ref}_r{cfg.ground_truth_reps}"
        f"_p{cfg.p}_{forest_digest(cfg.forest)}_s{seed}.csv"
    )
    return Path(cache_dir) / name


def compute_ground_truth(cfg: ExperimentConfig, generator: int, n_jobs: int = 1) -> GroundTruth:
    seed = ground_truth_seed(cfg, generator)
    gt = ground_truth_importance(
        generator, cfg.n_ref, cfg.ground_truth_reps, cfg.forest,
        np.random.default_rng(np.random.SeedSequence(seed)), p=cfg.p, n_jobs=n_jobs,
    )
    return replace(gt, seed=seed)


def write_ground_truth(gt: GroundTruth, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GROUND_TRUTH_COLUMNS)
        for j, s in enumerate(gt.scores):
            w.writerow([gt.generator, j + 1, repr(float(s)), gt.reps, gt.n_ref, gt.seed])


def read_ground_truth(path) -> GroundTruth:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"empty ground-truth file {path}")
    rows.sort(key=lambda r: int(r["feature"]))
    first = rows[0]
    return GroundTruth(
        np.array([float(r["score"]) for r in rows]),
        int(first["generator"]), int(first["n_ref"]), int(first["reps"]), int(first["seed"]),
    )


def cached_ground_truth(cfg: ExperimentConfig, generator: int, cache_dir, n_jobs: int = 1) -> GroundTruth:
    path = ground_truth_path(cache_dir, cfg, generator)
    if path.exists():
        log.info("ground truth for generator %d loaded from %s", generator, path)
        return read_ground_truth(path)
    log.info("computing ground truth for generator %d (%d reps)", generator, cfg.ground_truth_reps)
    gt = compute_ground_truth(cfg, generator, n_jobs)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_ground_truth(gt, path)
    return gt


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def coverage(
    results: list[ReplicateResult], truth: GroundTruth, strata: dict[int, Stratum] | None = None
) -> CoverageReport:
    hits: dict = defaultdict(int)
    counts: dict = defaultdict(int)
    lengths: dict = defaultdict(list)
    for r in results:
        key = (r.method, r.feature)
        counts[key] += 1
        hits[key] += r.ci_lower <= truth.scores[r.feature] <= r.ci_upper
        if r.std_length is not None:
            lengths[key].append(r.std_length)
    rates = {k: hits[k] / counts[k] for k in counts}
    mean_len = {k: float(np.mean(v)) for k, v in lengths.items()}
    if strata is None:
        strata = {j: s for (_, j), s in stratify([truth]).items()}
    return CoverageReport(rates, dict(counts), mean_len, strata)


def stratify(truths: list[GroundTruth]) -> dict[tuple[int, int], Stratum]:
    """Label every (generator, feature) as ZERO, HIGH (top 10 %) or MODERATE."""
    entries = [(gt.generator, j, float(s)) for gt in truths for j, s in enumerate(gt.scores)]
    n_high = math.ceil(0.10 * len(entries))
    nonzero = sorted((e for e in entries if e[2] != 0.0), key=lambda e: (-e[2], e[0], e[1]))
    high = {(g, j) for g, j, _ in nonzero[:n_high]}
    out = {}
    for g, j, s in entries:
        if s == 0.0:
            out[(g, j)] = Stratum.ZERO
        elif (g, j) in high:
            out[(g, j)] = Stratum.HIGH
        else:
            out[(g, j)] = Stratum.MODERATE
    return out


def reference_lengths(results: list[ReplicateResult], reference: str = Method.NONE.value) -> dict[int, float]:
    acc = defaultdict(list)
    for r in results:
        if r.method == reference:
            acc[r.feature].append(r.length)
    return {j: float(np.mean(v)) for j, v in acc.items()}


def standardized_lengths(
    results: list[ReplicateResult], reference_results: list[ReplicateResult]
) -> dict[tuple[str, int], float]:
    """Mean CI length per (method, feature) divided by the reference mean length."""
    ref = reference_lengths(reference_results, reference_results[0].method if reference_results else "")
    acc = defaultdict(list)
    for r in results:
        if r.feature not in ref:
            raise ValueError(f"no reference intervals for feature {r.feature}")
        if ref[r.feature] == 0.0:
            raise ZeroDivisionError(f"reference mean CI length of feature {r.feature} is zero")
        acc[(r.method, r.feature)].append(r.length / ref[r.feature])
    return {k: float(np.mean(v)) for k, v in acc.items()}


def attach_std_lengths(results: list[ReplicateResult], reference: str = Method.NONE.value) -> list[ReplicateResult]:
    ref = reference_lengths(results, reference)
    out = []
    for r in results:
        m = ref.get(r.feature)
        std = r.length / m if m else None
        out.append(replace(r, std_length=std))
    return out


def condition_id(cfg: ExperimentConfig) -> str:
    return f"g{cfg.generator}_n{cfg.n}_{cfg.mechanism.value}_{cfg.rate!r}"


def write_results(results: list[ReplicateResult], cfg: ExperimentConfig, path) -> None:
    cid = condition_id(cfg)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in results:
            w.writerow([
                cid, cfg.generator, cfg.n, cfg.mechanism.value, repr(cfg.rate), r.method,
                r.replicate, r.feature + 1, _fmt(r.point), _fmt(r.variance), _fmt(r.ci_lower),
                _fmt(r.ci_upper), _fmt(r.covered), _fmt(r.std_length),
            ])


def write_coverage(report: CoverageReport, truth: GroundTruth, path) -> None:
    rows = report.rows(truth)
    cols = ["method", "feature", "stratum", "truth", "coverage", "n_valid", "mean_std_length"]
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

BENCHMARK_COLUMNS = (
    "feature", "method", "repetition", "point", "variance", "ci_lower", "ci_upper",
    "std_center", "std_lower", "std_upper", "std_length",
)


@dataclass(frozen=True)
class BenchmarkRow:
    feature: int
    method: str
    repetition: int
    point: float
    variance: float
    ci_lower: float
    ci_upper: float
    std_center: float = math.nan
    std_lower: float = math.nan
    std_upper: float = math.nan
    std_length: float = math.nan


class _BenchRep:
    def __init__(self, complete, cfg):
        self.complete, self.cfg = complete, cfg

    def __call__(self, rep):
        cfg, complete = self.cfg, self.complete
        root = (_BENCH, rep)
        incomplete = ampute_mcar(complete, cfg.benchmark_rate, stream(cfg.master_seed, *root, _AMPUTE))
        rows = []
        for method in cfg.methods:
            try:
                table = method_intervals(method, complete, incomplete, cfg, root)
            except _RECOVERABLE as exc:
                log.warning("benchmark repetition %d: method %s failed: %s", rep, method.value, exc)
                continue
            for j, (point, var, lo, hi) in enumerate(table):
                rows.append(BenchmarkRow(j, method.value, rep, point, var, lo, hi))
        return rows


def run_benchmark(data: IncompleteDataset, cfg: ExperimentConfig, n_jobs: int = 1) -> list[BenchmarkRow]:
    """Standardized intervals of every arm relative to the complete-data arm.

    Each repetition amputes the (fully observed) data MCAR, runs every arm and
    the complete-data reference. Intervals are shifted by that repetition's
    complete-data center and scaled by the feature's mean complete-data length.
    """
    if not data.is_complete():
        raise DataError("benchmark input must be fully observed")
    if Method.NONE not in cfg.methods:
        raise ValueError("benchmark needs the NONE (complete-data) arm as reference")
    complete = data.to_complete()
    batches = _parallel(_BenchRep(complete, cfg), range(cfg.benchmark_repetitions), n_jobs)
    rows = [r for batch in batches for r in batch]

    centers = {(r.repetition, r.feature): 0.5 * (r.ci_lower + r.ci_upper) for r in rows if r.method == "NONE"}
    ref_len = defaultdict(list)
    for r in rows:
        if r.method == "NONE":
            ref_len[r.feature].append(r.ci_upper - r.ci_lower)
    mean_len = {j: float(np.mean(v)) for j, v in ref_len.items()}

    out = []
    for r in rows:
        scale = mean_len.get(r.feature, 0.0)
        center = centers.get((r.repetition, r.feature))
        if center is None or scale == 0.0:
            out.append(r)
            continue
        lo = (r.ci_lower - center) / scale
        hi = (r.ci_upper - center) / scale
        out.append(replace(r, std_center=0.5 * (lo + hi), std_lower=lo, std_upper=hi, std_length=hi - lo))
    return out


def write_benchmark(rows: list[BenchmarkRow], columns: tuple[str, ...], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("feature_name",) + BENCHMARK_COLUMNS)
        for r in rows:
            w.writerow([
                columns[r.feature], r.feature + 1, r.method, r.repetition,
                *(_fmt(getattr(r, c)) for c in BENCHMARK_COLUMNS[3:]),
            ])


def summarize_benchmark(rows: list[BenchmarkRow]) -> list[dict]:
    """Mean standardized bounds per (feature, method)."""
    acc = defaultdict(list)
    for r in rows:
        acc[(r.feature, r.method)].append(r)
    out = []
    for (j, method), group in sorted(acc.items(), key=lambda kv: (kv[0][0], _method_order(kv[0][1]))):
        out.append({
            "feature": j + 1,
            "method": method,
            "repetitions": len(group),
            "mean_std_lower": _fmt(np.mean([g.std_lower for g in group])),
            "mean_std_upper": _fmt(np.mean([g.std_upper for g in group])),
            "mean_std_center": _fmt(np.mean([g.std_center for g in group])),
            "mean_std_length": _fmt(np.mean([g.std_length for g in group])),
        })
    return out


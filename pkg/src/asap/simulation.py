"""Monte Carlo evaluation harness.

Ground truth is either a vector of point scores (synthetic mode, outcomes
drawn from the Thurstonian choice probability) or an empirical
comparison-count matrix (replay mode, outcomes drawn from the measured
frequencies).  Each run interleaves pair selection, outcome generation and
posterior refreshes, recording accuracy metrics on a grid of standard-trial
checkpoints.  Estimated scores at a checkpoint always come from full
inference over the data collected so far, regardless of the sampling
strategy's own update rule, so the metrics reflect the collected data.
"""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .core import (
    ComparisonRecord,
    ExperimentState,
    ModelConfig,
    ValidationError,
    comparisons_per_standard_trial,
)
from .inference import EpEngine, EpSettings
from .samplers import AsapSampler, SamplerKind, make_sampler

RANGES = {"small": (0.0, 1.0), "medium": (0.0, 5.0), "large": (0.0, 20.0)}

FISHER_CLAMP = 1.0 - 1e-7


@dataclass(frozen=True)
class GroundTruth:
    """Either point scores or an empirical count matrix (``counts[i, j]`` is
    the number of times i was preferred over j)."""

    scores: np.ndarray | None = None
    counts: np.ndarray | None = None

    def __post_init__(self) -> None:
        if (self.scores is None) == (self.counts is None):
            raise ValidationError("provide exactly one of scores or counts")
        if self.scores is not None:
            scores = np.asarray(self.scores, float)
            if scores.ndim != 1 or not np.all(np.isfinite(scores)):
                raise ValidationError("scores must be a finite 1-D vector")
            object.__setattr__(self, "scores", scores)
        else:
            counts = np.asarray(self.counts)
            if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
                raise ValidationError("count matrix must be square")
            if np.any(counts < 0):
                raise ValidationError("counts must be non-negative")
            if np.any(np.diag(counts) != 0):
                raise ValidationError("count matrix diagonal must be zero")
            object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def n(self) -> int:
        if self.scores is not None:
            return self.scores.shape[0]
        return self.counts.shape[0]

    @property
    def replay(self) -> bool:
        return self.counts is not None

    @classmethod
    def uniform(cls, n: int, low: float, high: float,
                rng: np.random.Generator) -> "GroundTruth":
        return cls(scores=rng.uniform(low, high, size=n))


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 20
    score_range: tuple[float, float] = RANGES["medium"]
    runs: int = 100
    max_standard_trials: float = 15.0
    methods: tuple[SamplerKind, ...] = (SamplerKind("asap"),)
    seed: int = 0
    checkpoints: tuple[float, ...] | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    ep: EpSettings = field(default_factory=EpSettings)

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValidationError("n must be >= 2")
        if self.runs < 1:
            raise ValidationError("runs must be positive")
        if not self.methods:
            raise ValidationError("at least one method is required")
        if self.max_standard_trials <= 0:
            raise ValidationError("max_standard_trials must be positive")
        if self.score_range[0] >= self.score_range[1]:
            raise ValidationError("score range must be an increasing interval")

    def checkpoint_grid(self) -> tuple[float, ...]:
        """Standard-trial checkpoints: the explicit grid, or whole trials up
        to the maximum (plus the fractional endpoint when below 1 whole
        trial)."""
        if self.checkpoints is not None:
            grid = tuple(sorted(self.checkpoints))
            if any(x <= 0 for x in grid) or len(set(grid)) != len(grid):
                raise ValidationError("checkpoints must be positive and distinct")
            return grid
        whole = tuple(float(k) for k in range(1, int(self.max_standard_trials) + 1))
        if not whole or whole[-1] < self.max_standard_trials:
            whole = whole + (float(self.max_standard_trials),)
        return whole


@dataclass(frozen=True)
class TrajectoryPoint:
    method: str
    run: int
    standard_trials: float
    comparisons: int
    rmse: float
    srocc: float
    srocc_fisher: float
    eig_evaluated_fraction: float  # NaN for strategies without gain evaluation


def draw_outcome(gt: GroundTruth, pair: tuple[int, int],
                 config: ModelConfig | None = None,
                 rng: np.random.Generator | None = None) -> int:
    """Sample +1 (first preferred) or -1 for one comparison of the pair."""
    config = config or ModelConfig()
    rng = rng if rng is not None else np.random.default_rng()
    i, j = pair
    if i == j or not (0 <= i < gt.n and 0 <= j < gt.n):
        raise ValidationError(f"invalid pair ({i}, {j})")
    if gt.replay:
        wins = gt.counts[i, j]
        total = wins + gt.counts[j, i]
        if total == 0:
            raise ValidationError(
                f"replay matrix has no observations for pair ({i}, {j})"
            )
        p = wins / total
    else:
        s = gt.scores
        p = float(ndtr((s[i] - s[j]) / (math.sqrt(2.0) * config.beta)))
    return 1 if rng.random() < p else -1


def rmse_aligned(estimated: Sequence[float], truth: Sequence[float]) -> float:
    """Root-mean-squared error after removing the free shift (both vectors are
    mean-centered; the scale unit is already pinned by the model's beta)."""
    e = np.asarray(estimated, float)
    t = np.asarray(truth, float)
    if e.shape != t.shape or e.ndim != 1 or e.shape[0] < 2:
        raise ValidationError("inputs must be equal-length vectors of length >= 2")
    e = e - e.mean()
    t = t - t.mean()
    return float(np.sqrt(np.mean((e - t) ** 2)))


def srocc(estimated: Sequence[float], truth: Sequence[float]) -> float:
    """Spearman rank correlation with average-rank tie handling."""
    e = np.asarray(estimated, float)
    t = np.asarray(truth, float)
    if e.shape != t.shape or e.ndim != 1 or e.shape[0] < 2:
        raise ValidationError("inputs must be equal-length vectors of length >= 2")
    if np.all(e == e[0]) or np.all(t == t[0]):
        raise ValidationError("rank correlation undefined for a constant vector")
    return float(stats.spearmanr(e, t).statistic)


def fisher_transform(y: float) -> float:
    """arctanh for reporting correlations, clamped just inside (-1, 1)."""
    return float(np.arctanh(np.clip(y, -FISHER_CLAMP, FISHER_CLAMP)))


def load_comparison_matrix(source) -> GroundTruth:
    """Read a headerless CSV count matrix; validation failures name the
    offending row/column."""
    path = Path(source)
    rows: list[list[int]] = []
    with path.open(newline="") as handle:
        for r, row in enumerate(csv.reader(handle)):
            if not row:
                continue
            parsed = []
            for c, cell in enumerate(row):
                try:
                    value = int(cell.strip())
                except ValueError:
                    raise ValidationError(
                        f"{path}: row {r}, col {c}: not an integer: {cell!r}"
                    ) from None
                if value < 0:
                    raise ValidationError(
                        f"{path}: row {r}, col {c}: negative count {value}"
                    )
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise ValidationError(f"{path}: empty matrix")
    n = len(rows)
    for r, row in enumerate(rows):
        if len(row) != n:
            raise ValidationError(
                f"{path}: row {r}: expected {n} columns, got {len(row)}"
            )
    counts = np.array(rows, np.int64)
    for r in range(n):
        if counts[r, r] != 0:
            raise ValidationError(
                f"{path}: row {r}, col {r}: nonzero diagonal entry"
            )
    return GroundTruth(counts=counts)


def counts_to_history(counts: np.ndarray) -> list[ComparisonRecord]:
    """Expand a count matrix into an explicit comparison history in canonical
    pair order."""
    records: list[ComparisonRecord] = []
    n = counts.shape[0]
    t = 0
    for i in range(n):
        for j in range(i + 1, n):
            for _ in range(int(counts[i, j])):
                records.append(ComparisonRecord(t, i, j, 1))
                t += 1
            for _ in range(int(counts[j, i])):
                records.append(ComparisonRecord(t, i, j, -1))
                t += 1
    return records


def scale_counts(counts: np.ndarray, config: ModelConfig | None = None,
                 settings: EpSettings | None = None):
    """Score a full count matrix: expand to a history and run inference."""
    from .inference import full_posterior

    history = counts_to_history(np.asarray(counts, np.int64))
    return full_posterior(history, counts.shape[0], config, settings)


def _truth_scores(gt: GroundTruth, config: ModelConfig,
                  settings: EpSettings) -> np.ndarray:
    if not gt.replay:
        return gt.scores
    return np.asarray(scale_counts(gt.counts, config, settings).means)


def _run_one(method: SamplerKind, method_idx: int, run: int,
             config: SimulationConfig, gt: GroundTruth | None
             ) -> list[TrajectoryPoint]:
    rng = np.random.default_rng([config.seed, method_idx, run])
    if gt is None:
        truth_gt = GroundTruth.uniform(config.n, *config.score_range, rng=rng)
    else:
        truth_gt = gt
    n = truth_gt.n
    truth = _truth_scores(truth_gt, config.model, config.ep)
    pairs_per_trial = comparisons_per_standard_trial(n)
    grid = config.checkpoint_grid()
    targets = [max(1, round(st * pairs_per_trial)) for st in grid]

    state = ExperimentState(n, config.model)
    sampler = make_sampler(method, n, config.model, rng, config.ep)
    # strategies that already maintain full inference double as the metrics
    # engine; everything else gets its own
    if isinstance(sampler, AsapSampler) and sampler.mode == "full":
        metrics_engine = sampler.engine
        shared_engine = True
    else:
        metrics_engine = EpEngine(n, config.model, config.ep)
        shared_engine = False

    points: list[TrajectoryPoint] = []
    ck = 0
    label = method.label
    while ck < len(targets):
        batch = sampler.propose(state)
        for pair in batch:
            outcome = draw_outcome(truth_gt, pair, config.model, rng)
            record = ComparisonRecord(len(state.history), pair[0], pair[1],
                                      outcome)
            state.append(record)
            sampler.observe(state, record)
            if not shared_engine:
                metrics_engine.add(record)
            while ck < len(targets) and len(state.history) == targets[ck]:
                metrics_engine.refresh()
                estimated = metrics_engine.marg_tau / metrics_engine.marg_pi
                rho = srocc(estimated, truth)
                fractions = getattr(sampler, "eval_fractions", None)
                if fractions:
                    fraction = float(np.mean(fractions))
                    fractions.clear()
                elif fractions is not None and points:
                    fraction = points[-1].eig_evaluated_fraction
                else:
                    fraction = float("nan")
                points.append(TrajectoryPoint(
                    method=label,
                    run=run,
                    standard_trials=grid[ck],
                    comparisons=targets[ck],
                    rmse=rmse_aligned(estimated, truth),
                    srocc=rho,
                    srocc_fisher=fisher_transform(rho),
                    eig_evaluated_fraction=fraction,
                ))
                ck += 1
    return points


def run_experiment(config: SimulationConfig,
                   gt: GroundTruth | None = None
                   ) -> dict[str, list[list[TrajectoryPoint]]]:
    """Run every configured method for every Monte Carlo run.  ``gt`` fixes a
    shared ground truth (replay mode); when omitted, each run draws fresh
    point scores from the configured range.  Results are keyed by method
    label, one trajectory per run."""
    if gt is not None and gt.n != config.n:
        raise ValidationError("ground truth size does not match config.n")
    results: dict[str, list[list[TrajectoryPoint]]] = {}
    for method_idx, method in enumerate(config.methods):
        trajectories = []
        for run in range(config.runs):
            trajectories.append(_run_one(method, method_idx, run, config, gt))
        results[method.label] = trajectories
    return results


# ---------------------------------------------------------------------------
# output formats

CSV_COLUMNS = ("method", "run", "standard_trials", "comparisons", "rmse",
               "srocc", "srocc_fisher", "eig_evaluated_fraction")


def atomic_write_text(path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a torn
    file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectories_to_csv(results: dict[str, list[list[TrajectoryPoint]]]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for method in results:
        for trajectory in results[method]:
            for p in trajectory:
                lines.append(",".join([
                    p.method, str(p.run), repr(p.standard_trials),
                    str(p.comparisons), repr(p.rmse), repr(p.srocc),
                    repr(p.srocc_fisher), repr(p.eig_evaluated_fraction),
                ]))
    return "\n".join(lines) + "\n"


def read_trajectory_csv(path) -> list[TrajectoryPoint]:
    points = []
    with Path(path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or not set(CSV_COLUMNS) <= set(reader.fieldnames):
            missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
            raise ValidationError(
                f"{path}: missing trajectory columns {sorted(missing)}"
            )
        for row in reader:
            points.append(TrajectoryPoint(
                method=row["method"],
                run=int(row["run"]),
                standard_trials=float(row["standard_trials"]),
                comparisons=int(row["comparisons"]),
                rmse=float(row["rmse"]),
                srocc=float(row["srocc"]),
                srocc_fisher=float(row["srocc_fisher"]),
                eig_evaluated_fraction=float(row["eig_evaluated_fraction"]),
            ))
    if not points:
        raise ValidationError(f"{path}: no trajectory rows")
    return points


def aggregate_summary(points: Iterable[TrajectoryPoint]) -> dict:
    """Per-method, per-checkpoint mean and central 75% band (12.5/87.5
    percentiles) of the metrics."""
    by_key: dict[tuple[str, float], list[TrajectoryPoint]] = {}
    for p in points:
        by_key.setdefault((p.method, p.standard_trials), []).append(p)
    summary: dict[str, list[dict]] = {}
    for (method, st) in sorted(by_key, key=lambda k: (k[0], k[1])):
        group = by_key[(method, st)]
        rmse = np.array([p.rmse for p in group])
        rho = np.array([p.srocc for p in group])
        rho_f = np.array([p.srocc_fisher for p in group])
        fractions = np.array([p.eig_evaluated_fraction for p in group])
        entry = {
            "standard_trials": st,
            "comparisons": int(np.median([p.comparisons for p in group])),
            "runs": len(group),
            "rmse_mean": float(rmse.mean()),
            "rmse_p12_5": float(np.percentile(rmse, 12.5)),
            "rmse_p87_5": float(np.percentile(rmse, 87.5)),
            "srocc_mean": float(rho.mean()),
            "srocc_p12_5": float(np.percentile(rho, 12.5)),
            "srocc_p87_5": float(np.percentile(rho, 87.5)),
            "srocc_fisher_mean": float(rho_f.mean()),
            "eig_evaluated_fraction_mean": (
                float(np.nanmean(fractions))
                if not np.all(np.isnan(fractions)) else None
            ),
        }
        summary.setdefault(method, []).append(entry)
    return {"methods": summary}


def experimental_effort(points: Iterable[TrajectoryPoint], target_rmse: float,
                        seconds_per_comparison: float = 5.0) -> dict:
    """Comparisons (and wall-clock seconds/hours) needed to reach the target
    mean RMSE, per method; the first checkpoint at or below the target is
    used."""
    summary = aggregate_summary(points)["methods"]
    effort: dict[str, dict | None] = {}
    for method, entries in summary.items():
        hit = next((e for e in entries if e["rmse_mean"] <= target_rmse), None)
        if hit is None:
            effort[method] = None
            continue
        seconds = hit["comparisons"] * seconds_per_comparison
        effort[method] = {
            "comparisons": hit["comparisons"],
            "standard_trials": hit["standard_trials"],
            "seconds": seconds,
            "hours": seconds / 3600.0,
        }
    return {
        "target_rmse": target_rmse,
        "seconds_per_comparison": seconds_per_comparison,
        "per_method": effort,
    }

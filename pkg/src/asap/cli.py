"""Command-line entry point: simulations, standalone scaling, trajectory
analysis and the live-experiment service."""
from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from .core import ModelConfig, ValidationError
from .samplers import SamplerKind
from .simulation import (
    RANGES,
    GroundTruth,
    SimulationConfig,
    aggregate_summary,
    atomic_write_text,
    experimental_effort,
    load_comparison_matrix,
    read_trajectory_csv,
    run_experiment,
    scale_counts,
    trajectories_to_csv,
)


def _effective_seed(seed: int) -> int:
    env = os.environ.get("ASAP_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise click.ClickException(f"ASAP_SEED must be an integer, got {env!r}")
    return seed


def _parse_range(value: str) -> tuple[float, float]:
    if value in RANGES:
        return RANGES[value]
    try:
        low, high = (float(x) for x in value.split(","))
    except ValueError:
        raise click.BadParameter(
            f"expected small|medium|large or 'low,high', got {value!r}"
        )
    return (low, high)


@click.group()
def main() -> None:
    """Active sampling toolkit for pairwise-comparison experiments."""


@main.command()
@click.option("--n", type=int, default=20, show_default=True,
              help="Number of conditions (synthetic mode).")
@click.option("--range", "score_range", default="medium", show_default=True,
              help="Ground-truth score range: small|medium|large or 'low,high'.")
@click.option("--replay", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Replay outcomes from a count-matrix CSV.")
@click.option("--runs", type=int, default=100, show_default=True)
@click.option("--trials", type=float, default=15.0, show_default=True,
              help="Maximum standard trials per run.")
@click.option("--methods", default="asap", show_default=True,
              help="Comma-separated strategies, e.g. asap,asap_approx,random; "
                   "suffixes :seq and :noselect tune the gain-driven kinds.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Master seed (ASAP_SEED overrides).")
@click.option("--beta", type=float, default=1.0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Trajectory CSV path; an aggregated JSON summary is "
                   "written next to it.")
def simulate(n, score_range, replay, runs, trials, methods, seed, beta, out):
    """Run the Monte Carlo evaluation harness and write trajectories."""
    if n < 2:
        raise click.BadParameter("n must be >= 2", param_hint="--n")
    if runs < 1:
        raise click.BadParameter("runs must be positive", param_hint="--runs")
    if trials <= 0:
        raise click.BadParameter("trials must be positive", param_hint="--trials")
    seed = _effective_seed(seed)
    try:
        kinds = tuple(
            SamplerKind.parse(token.strip())
            for token in methods.split(",") if token.strip()
        )
        if not kinds:
            raise ValidationError("no methods given")
        gt = None
        if replay is not None:
            gt = load_comparison_matrix(replay)
            n = gt.n
        config = SimulationConfig(
            n=n,
            score_range=_parse_range(score_range),
            runs=runs,
            max_standard_trials=trials,
            methods=kinds,
            seed=seed,
            model=ModelConfig(beta=beta),
        )
        results = run_experiment(config, gt)
    except ValidationError as exc:
        raise click.BadParameter(str(exc))
    out = Path(out)
    atomic_write_text(out, trajectories_to_csv(results))
    points = [p for runs_ in results.values() for t in runs_ for p in t]
    summary = aggregate_summary(points)
    summary["seed"] = seed
    atomic_write_text(out.with_suffix(".json"),
                      json.dumps(summary, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {out} and {out.with_suffix('.json')}")


@main.command()
@click.option("--matrix", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Count-matrix CSV (headerless, square).")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Output JSON of per-condition mean/variance.")
@click.option("--beta", type=float, default=1.0, show_default=True)
def scale(matrix, out, beta):
    """Scale a collected comparison matrix into scores."""
    try:
        gt = load_comparison_matrix(matrix)
        if int(gt.counts.sum()) == 0:
            click.echo("warning: empty matrix, emitting prior scores", err=True)
        posterior = scale_counts(gt.counts, ModelConfig(beta=beta))
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    payload = {
        "n": len(posterior),
        "converged": posterior.converged,
        "scores": [
            {"index": i, "mean": float(posterior.means[i]),
             "variance": float(posterior.variances[i])}
            for i in range(len(posterior))
        ],
    }
    atomic_write_text(out, json.dumps(payload, indent=2) + "\n")
    click.echo(f"wrote {out}")


@main.command()
@click.option("--trajectory", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Trajectory CSV from simulate.")
@click.option("--target-rmse", type=float, default=0.15, show_default=True)
@click.option("--seconds-per-comparison", type=float, default=5.0,
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Optional JSON output path (prints to stdout otherwise).")
def analyze(trajectory, target_rmse, seconds_per_comparison, out):
    """Aggregate a trajectory file and estimate experimental effort."""
    try:
        points = read_trajectory_csv(trajectory)
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    report = aggregate_summary(points)
    report["effort"] = experimental_effort(points, target_rmse,
                                           seconds_per_comparison)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out is not None:
        atomic_write_text(out, text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--static", "static_dir",
              type=click.Path(exists=True, file_okay=False), default=None,
              help="Directory of web-UI assets to serve at /.")
@click.option("--persist", type=click.Path(dir_okay=False),
              default="asap_sessions.jsonl", show_default=True,
              help="Append-only session event log.")
def serve(host, port, static_dir, persist):
    """Start the live-experiment HTTP API."""
    import uvicorn

    from .service import create_app

    app = create_app(persist_path=persist, static_dir=static_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except (SystemExit, OSError) as exc:
        click.echo(f"error: could not serve on {host}:{port}: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()

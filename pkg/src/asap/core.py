"""Shared domain types and comparison-history bookkeeping.

Conditions are identified by dense integer indices ``0..n-1``; any external
labels are mapped at the service/ingestion boundary.  All value types here are
immutable once constructed; :class:`ExperimentState` is the single mutable
object and is meant for single-writer use.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np


class AsapError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(AsapError, ValueError):
    """An input violated a documented contract."""


class InferenceError(AsapError, RuntimeError):
    """Message passing could not produce a valid posterior."""


class StalePosteriorError(AsapError, RuntimeError):
    """An operation required a fresh posterior but the cached one is stale."""


@dataclass(frozen=True)
class ModelConfig:
    """Observation-model parameters.

    ``beta`` is the observer-noise scale; ``prior_mean``/``prior_variance``
    parameterize the shared Gaussian prior over condition scores.
    """

    beta: float = 1.0
    prior_mean: float = 0.0
    prior_variance: float = 0.5

    def __post_init__(self) -> None:
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValidationError("beta must be a positive finite real")
        if not np.isfinite(self.prior_mean):
            raise ValidationError("prior_mean must be finite")
        if not (np.isfinite(self.prior_variance) and self.prior_variance > 0):
            raise ValidationError("prior_variance must be a positive finite real")


@dataclass(frozen=True)
class ComparisonRecord:
    """One trial outcome: ``outcome`` is +1 if ``first`` was preferred, -1 if
    ``second`` was preferred.  Draws are not representable."""

    trial_index: int
    first: int
    second: int
    outcome: int

    def __post_init__(self) -> None:
        if self.trial_index < 0:
            raise ValidationError(
                f"trial {self.trial_index}: trial_index must be non-negative"
            )
        if self.first == self.second:
            raise ValidationError(
                f"trial {self.trial_index}: self-comparison ({self.first}, {self.second})"
            )
        if self.first < 0 or self.second < 0:
            raise ValidationError(
                f"trial {self.trial_index}: condition index out of range"
            )
        if self.outcome not in (-1, 1):
            raise ValidationError(
                f"trial {self.trial_index}: outcome must be +1 or -1, got {self.outcome}"
            )

    @property
    def pair(self) -> tuple[int, int]:
        return (self.first, self.second)

    @property
    def winner(self) -> int:
        return self.first if self.outcome == 1 else self.second

    @property
    def loser(self) -> int:
        return self.second if self.outcome == 1 else self.first


@dataclass(frozen=True)
class GaussianScore:
    """Posterior marginal of one condition's score."""

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.mean):
            raise ValidationError("score mean must be finite")
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ValidationError("score variance must be positive and finite")


class ScorePosterior:
    """Diagonal multivariate Gaussian over the n condition scores.

    Backed by read-only numpy arrays; index access yields
    :class:`GaussianScore` values.  ``converged`` is False when message
    passing hit its sweep limit and the values are best-so-far.
    """

    __slots__ = ("means", "variances", "converged")

    def __init__(self, means, variances, converged: bool = True) -> None:
        means = np.array(means, dtype=float)
        variances = np.array(variances, dtype=float)
        if means.shape != variances.shape or means.ndim != 1:
            raise ValidationError("means and variances must be 1-D and equal length")
        if not np.all(np.isfinite(means)):
            raise ValidationError("posterior means must be finite")
        if not (np.all(np.isfinite(variances)) and np.all(variances > 0)):
            raise ValidationError("posterior variances must be positive and finite")
        means.flags.writeable = False
        variances.flags.writeable = False
        self.means = means
        self.variances = variances
        self.converged = converged

    @classmethod
    def prior(cls, n: int, config: ModelConfig | None = None) -> "ScorePosterior":
        config = config or ModelConfig()
        return cls(
            np.full(n, config.prior_mean),
            np.full(n, config.prior_variance),
        )

    def __len__(self) -> int:
        return self.means.shape[0]

    def __getitem__(self, i: int) -> GaussianScore:
        return GaussianScore(float(self.means[i]), float(self.variances[i]))

    def __iter__(self) -> Iterator[GaussianScore]:
        return (self[i] for i in range(len(self)))

    def __repr__(self) -> str:
        return f"ScorePosterior(n={len(self)}, converged={self.converged})"


def standard_trials(n: int, num_comparisons: int) -> float:
    """Number of standard trials represented by ``num_comparisons`` outcomes;
    one standard trial is n(n-1)/2 comparisons."""
    if n < 2:
        raise ValidationError("n must be >= 2")
    if num_comparisons < 0:
        raise ValidationError("num_comparisons must be non-negative")
    return num_comparisons / (n * (n - 1) / 2)


def comparisons_per_standard_trial(n: int) -> int:
    if n < 2:
        raise ValidationError("n must be >= 2")
    return n * (n - 1) // 2


class ExperimentState:
    """Condition count, comparison history, model config and cached posterior.

    The posterior is refreshed on demand (full inference is the expensive
    step); appending a record flags it stale.
    """

    def __init__(
        self,
        n: int,
        config: ModelConfig | None = None,
        history: Iterable[ComparisonRecord] | None = None,
    ) -> None:
        if n < 1:
            raise ValidationError("n must be a positive integer")
        self.n = n
        self.config = config or ModelConfig()
        self.history: list[ComparisonRecord] = []
        self._posterior = ScorePosterior.prior(n, self.config)
        self.posterior_stale = False
        for record in history or ():
            self.append(record)

    def append(self, record: ComparisonRecord) -> None:
        self._check_record(record, len(self.history))
        self.history.append(record)
        self.posterior_stale = True

    def _check_record(self, record: ComparisonRecord, expected_index: int) -> None:
        if record.first >= self.n or record.second >= self.n:
            raise ValidationError(
                f"trial {record.trial_index}: condition index out of range for n={self.n}"
            )
        if record.trial_index != expected_index:
            raise ValidationError(
                f"trial {record.trial_index}: expected trial_index {expected_index}"
            )

    @property
    def posterior(self) -> ScorePosterior:
        return self._posterior

    def set_posterior(self, posterior: ScorePosterior) -> None:
        """Install an externally computed posterior and clear the stale flag."""
        if len(posterior) != self.n:
            raise ValidationError("posterior length must equal n")
        self._posterior = posterior
        self.posterior_stale = False

    def refresh_posterior(self, settings=None) -> ScorePosterior:
        from .inference import full_posterior

        self.set_posterior(
            full_posterior(self.history, self.n, self.config, settings)
        )
        return self._posterior

    def require_fresh_posterior(self) -> ScorePosterior:
        if self.posterior_stale:
            raise StalePosteriorError(
                "posterior is stale; call refresh_posterior() first"
            )
        return self._posterior

    @property
    def num_comparisons(self) -> int:
        return len(self.history)

    def standard_trials_completed(self) -> float:
        return standard_trials(self.n, len(self.history))


def validate_history(state: ExperimentState) -> None:
    """Check every record in the state's history against the record invariants
    and the state's condition count.  Raises :class:`ValidationError` naming
    the offending trial."""
    for expected, record in enumerate(state.history):
        state._check_record(record, expected)

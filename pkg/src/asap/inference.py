"""Posterior estimation over condition scores.

Scores carry a factorizing Gaussian prior; each comparison contributes a
difference factor (score difference plus Gaussian noise) and a sign factor
tied to the observed outcome.  Sign factors are handled by moment matching,
so all messages stay one-dimensional Gaussians and the posterior is a
diagonal multivariate Gaussian.

The per-observation noise is ``2 * beta**2`` on the difference variable, so
with point scores the implied outcome probability reduces to
``Phi((mu_i - mu_j) / (sqrt(2) * beta))`` -- the same form the simulator
uses.  :func:`outcome_probability` instead evaluates the marginal form with
``sigma_ij**2 = var_i + var_j + beta**2``, which is what the selection
machinery weights outcomes with.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernel
from .core import (
    ComparisonRecord,
    GaussianScore,
    InferenceError,
    ModelConfig,
    ScorePosterior,
    ValidationError,
)


@dataclass(frozen=True)
class EpSettings:
    """Message-passing schedule: sweep limit, per-sweep convergence tolerance
    (max absolute change in any marginal mean or variance) and initial
    damping."""

    max_sweeps: int = 100
    tolerance: float = 1e-6
    damping: float = 0.0

    def __post_init__(self) -> None:
        if self.max_sweeps < 1:
            raise ValidationError("max_sweeps must be positive")
        if not (self.tolerance > 0):
            raise ValidationError("tolerance must be positive")
        if not (0 <= self.damping < 1):
            raise ValidationError("damping must be in [0, 1)")


def truncated_gaussian_moments(z: float) -> tuple[float, float]:
    """Correction terms of the standard normal truncated below at ``-z``:
    ``v = pdf(z)/cdf(z)`` and ``w = v*(v+z)``; ``w`` lies in (0, 1) for
    finite ``z``."""
    z = float(z)
    if not math.isfinite(z):
        raise ValidationError("z must be finite")
    v, w = _kernel.trunc_moments(z)
    return float(v), float(w)


class EpEngine:
    """Incremental message-passing solver over a growing comparison history.

    Comparisons are appended with :meth:`add`; :meth:`refresh` runs sweeps to
    convergence, warm-starting from the previous converged message state so
    that appending a few comparisons is cheap.  One spare factor slot is kept
    for hypothetical-outcome evaluation (see :mod:`asap.eig`).
    """

    def __init__(self, n: int, config: ModelConfig | None = None,
                 settings: EpSettings | None = None) -> None:
        if n < 1:
            raise ValidationError("n must be a positive integer")
        self.n = n
        self.config = config or ModelConfig()
        self.settings = settings or EpSettings()
        self.noise_var = 2.0 * self.config.beta ** 2
        cap = 64
        self.ia = np.zeros(cap, np.int64)
        self.ib = np.zeros(cap, np.int64)
        self.yy = np.zeros(cap, float)
        self.mpa = np.zeros(cap, float)
        self.mta = np.zeros(cap, float)
        self.mpb = np.zeros(cap, float)
        self.mtb = np.zeros(cap, float)
        self.T = 0
        prior_pi = 1.0 / self.config.prior_variance
        self.marg_pi = np.full(n, prior_pi)
        self.marg_tau = np.full(n, self.config.prior_mean * prior_pi)
        self._first_dirty = 0
        self.converged = True

    def _grow(self) -> None:
        # keep one spare slot beyond T for the hypothetical factor
        if self.T + 1 >= self.ia.shape[0]:
            cap = 2 * self.ia.shape[0]
            for name in ("ia", "ib", "yy", "mpa", "mta", "mpb", "mtb"):
                old = getattr(self, name)
                new = np.zeros(cap, old.dtype)
                new[: self.T] = old[: self.T]
                setattr(self, name, new)

    def add(self, record: ComparisonRecord) -> None:
        if record.first >= self.n or record.second >= self.n:
            raise ValidationError(
                f"trial {record.trial_index}: condition index out of range for n={self.n}"
            )
        self._grow()
        t = self.T
        self.ia[t] = record.first
        self.ib[t] = record.second
        self.yy[t] = float(record.outcome)
        self.mpa[t] = 0.0
        self.mta[t] = 0.0
        self.mpb[t] = 0.0
        self.mtb[t] = 0.0
        self.T = t + 1

    def extend(self, records: Iterable[ComparisonRecord]) -> None:
        for record in records:
            self.add(record)

    def refresh(self) -> bool:
        """Run sweeps until convergence over everything that can still move;
        returns the converged flag."""
        if self.T == 0:
            self.converged = True
            return True
        active = np.zeros(self.T, np.bool_)
        if self.converged:
            active[self._first_dirty:] = True
        else:
            active[:] = True
        if not active.any():
            return self.converged
        conv, _ = _kernel.ep_run(
            self.ia, self.ib, self.yy, self.mpa, self.mta, self.mpb, self.mtb,
            self.T, self.marg_pi, self.marg_tau, self.noise_var, active,
            self.settings.tolerance, self.settings.max_sweeps,
            self.settings.damping,
        )
        self.converged = bool(conv)
        self._first_dirty = self.T
        if not np.all(np.isfinite(self.marg_pi[: self.n])) or np.any(
            self.marg_pi <= 0
        ):
            raise InferenceError("message passing produced a non-positive precision")
        return self.converged

    def adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR variable-to-factor adjacency over the current history: factor
        indices touching variable v are ``adj[indptr[v]:indptr[v+1]]``."""
        ends = np.concatenate([self.ia[: self.T], self.ib[: self.T]])
        counts = np.bincount(ends, minlength=self.n)
        indptr = np.zeros(self.n + 1, np.int64)
        np.cumsum(counts, out=indptr[1:])
        factors = np.concatenate([np.arange(self.T, dtype=np.int64)] * 2)
        order = np.argsort(ends, kind="stable")
        adj = factors[order]
        return indptr, adj

    def posterior(self) -> ScorePosterior:
        return ScorePosterior(
            self.marg_tau / self.marg_pi,
            1.0 / self.marg_pi,
            converged=self.converged,
        )


def _validate_history(history: Sequence[ComparisonRecord], n: int) -> None:
    for record in history:
        if record.first >= n or record.second >= n:
            raise ValidationError(
                f"trial {record.trial_index}: condition index out of range for n={n}"
            )


def full_posterior(history: Sequence[ComparisonRecord], n: int,
                   config: ModelConfig | None = None,
                   settings: EpSettings | None = None) -> ScorePosterior:
    """Posterior marginals from message passing over the whole history; with
    an empty history this is the prior.  Non-convergence returns best-so-far
    with ``converged=False``."""
    config = config or ModelConfig()
    _validate_history(history, n)
    engine = EpEngine(n, config, settings)
    engine.extend(history)
    engine.refresh()
    return engine.posterior()


def online_update(posterior: ScorePosterior, record: ComparisonRecord,
                  config: ModelConfig | None = None) -> ScorePosterior:
    """Single-observation assumed-density-filtering update: only the two
    compared entries change, both variances strictly decrease."""
    config = config or ModelConfig()
    n = len(posterior)
    if record.first >= n or record.second >= n:
        raise ValidationError(
            f"trial {record.trial_index}: condition index out of range for n={n}"
        )
    i, j = record.first, record.second
    mu = posterior.means.copy()
    var = posterior.variances.copy()
    mu_i, var_i, mu_j, var_j = _kernel.adf_update(
        mu[i], var[i], mu[j], var[j], float(record.outcome),
        2.0 * config.beta ** 2,
    )
    mu[i] = mu_i
    var[i] = var_i
    mu[j] = mu_j
    var[j] = var_j
    if var_i <= 0 or var_j <= 0:
        raise InferenceError("online update produced a non-positive variance")
    return ScorePosterior(mu, var, converged=posterior.converged)


def outcome_probability(score_i: GaussianScore, score_j: GaussianScore,
                        config: ModelConfig | None = None) -> float:
    """Probability that condition i beats condition j given the two marginals:
    ``Phi((mu_i - mu_j) / (sqrt(2) * sigma_ij))`` with
    ``sigma_ij**2 = var_i + var_j + beta**2``."""
    config = config or ModelConfig()
    denom = math.sqrt(2.0 * (score_i.variance + score_j.variance
                             + config.beta ** 2))
    return float(_kernel.norm_cdf((score_i.mean - score_j.mean) / denom))

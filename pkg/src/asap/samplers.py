"""Pair-selection strategies.

The gain-driven strategies (full-posterior and online-approximate) support a
sequential argmax mode and a batch mode that returns the minimum spanning
tree of the reciprocal-gain graph, so every condition is measured at least
once per batch.  Baselines: uniform random pairs, quicksort partitions, Swiss
rounds and similarity matchmaking on the current marginals.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel
from .core import (
    ComparisonRecord,
    ExperimentState,
    ModelConfig,
    ScorePosterior,
    ValidationError,
)
from .eig import (
    _approx_eig_round,
    _full_eig_round,
    _pair_thresholds,
    selection_probabilities,
)
from .inference import EpEngine, EpSettings

Pair = tuple[int, int]

KINDS = ("asap", "asap_approx", "random", "quicksort", "swiss", "ts_sampling")
_EIG_KINDS = ("asap", "asap_approx")


@dataclass(frozen=True)
class SamplerKind:
    """Strategy selector plus its options.  ``selective`` and ``batch`` only
    affect the gain-driven kinds, where batch (MST) mode is the default."""

    kind: str
    selective: bool = True
    batch: bool = True
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown sampler kind {self.kind!r}")

    @classmethod
    def parse(cls, token: str, seed: int | None = None) -> "SamplerKind":
        """Parse e.g. ``asap``, ``asap:seq``, ``asap:noselect:seq``."""
        parts = token.split(":")
        kind = cls(parts[0], seed=seed)
        for flag in parts[1:]:
            if flag == "seq":
                kind = replace(kind, batch=False)
            elif flag == "noselect":
                kind = replace(kind, selective=False)
            else:
                raise ValidationError(f"unknown sampler flag {flag!r} in {token!r}")
        return kind

    @property
    def label(self) -> str:
        label = self.kind
        if self.kind in _EIG_KINDS:
            if not self.selective:
                label += ":noselect"
            if not self.batch:
                label += ":seq"
        return label


def mst(weights: np.ndarray) -> list[Pair]:
    """Minimum spanning tree of a complete graph given a symmetric positive
    weight matrix; Prim from node 0, ties broken by lexicographic edge order.
    Edges are returned in the order they are selected."""
    weights = np.asarray(weights, float)
    n = weights.shape[0]
    if weights.ndim != 2 or weights.shape[1] != n:
        raise ValidationError("weights must be a square matrix")
    if n < 2:
        raise ValidationError("need at least 2 nodes")
    if not np.all(np.isfinite(weights[~np.eye(n, dtype=bool)])):
        raise ValidationError("weights must be finite")
    in_tree = [False] * n
    in_tree[0] = True
    heap: list[tuple[float, int, int]] = []
    for j in range(1, n):
        heapq.heappush(heap, (weights[0, j], 0, j))
    edges: list[Pair] = []
    while len(edges) < n - 1:
        w, u, v = heapq.heappop(heap)
        if in_tree[v]:
            continue
        in_tree[v] = True
        edges.append((min(u, v), max(u, v)))
        for j in range(n):
            if not in_tree[j]:
                heapq.heappush(heap, (weights[v, j], v, j))
    return edges


class Sampler:
    """Base interface: ``propose`` returns the next batch of unordered pairs
    (a single pair in sequential strategies); ``observe`` feeds back each
    outcome so stateful strategies can update."""

    def propose(self, state: ExperimentState) -> list[Pair]:
        raise NotImplementedError

    def observe(self, state: ExperimentState, record: ComparisonRecord) -> None:
        pass


class _AdfPosteriorMixin:
    """Cheap internally maintained marginals for strategies that only need an
    ordering or a similarity signal."""

    def _init_adf(self, n: int, config: ModelConfig) -> None:
        self._config = config
        self._mu = np.full(n, config.prior_mean)
        self._var = np.full(n, config.prior_variance)

    def observe(self, state: ExperimentState, record: ComparisonRecord) -> None:
        i, j = record.first, record.second
        mu_i, var_i, mu_j, var_j = _kernel.adf_update(
            self._mu[i], self._var[i], self._mu[j], self._var[j],
            float(record.outcome), 2.0 * self._config.beta ** 2,
        )
        self._mu[i] = mu_i
        self._var[i] = var_i
        self._mu[j] = mu_j
        self._var[j] = var_j


class RandomSampler(Sampler):
    def __init__(self, n: int, rng: np.random.Generator) -> None:
        if n < 2:
            raise ValidationError("need at least 2 conditions")
        self.n = n
        self.rng = rng
        self._iu, self._ju = np.triu_indices(n, 1)

    def propose(self, state: ExperimentState) -> list[Pair]:
        k = int(self.rng.integers(self._iu.shape[0]))
        return [(int(self._iu[k]), int(self._ju[k]))]


class TsSampler(_AdfPosteriorMixin, Sampler):
    """Matchmaking: pick the pair with the highest match quality
    ``sqrt(2b^2/(2b^2+vi+vj)) * exp(-(mi-mj)^2 / (2(2b^2+vi+vj)))``."""

    def __init__(self, n: int, config: ModelConfig,
                 rng: np.random.Generator) -> None:
        if n < 2:
            raise ValidationError("need at least 2 conditions")
        self.n = n
        self.rng = rng
        self._init_adf(n, config)

    def propose(self, state: ExperimentState) -> list[Pair]:
        b2 = 2.0 * self._config.beta ** 2
        denom = b2 + self._var[:, None] + self._var[None, :]
        diff = self._mu[:, None] - self._mu[None, :]
        quality = np.sqrt(b2 / denom) * np.exp(-diff * diff / (2.0 * denom))
        iu, ju = np.triu_indices(self.n, 1)
        q = quality[iu, ju]
        best = np.flatnonzero(q == q.max())
        k = int(best[self.rng.integers(best.shape[0])]) if best.shape[0] > 1 \
            else int(best[0])
        return [(int(iu[k]), int(ju[k]))]


class AsapSampler(Sampler):
    """Gain-maximizing selection.  ``mode='full'`` keeps a message-passing
    engine over the whole history and evaluates hypothetical outcomes against
    it; ``mode='approx'`` maintains the posterior by online updates only.

    The selective roulette thresholds come from the previous round's
    selection probabilities (every pair is admitted on the first round); the
    per-pair uniforms are drawn up-front from the seeded stream, so results
    are reproducible and order-independent.
    """

    def __init__(self, n: int, config: ModelConfig, mode: str,
                 selective: bool = True, batch: bool = True,
                 rng: np.random.Generator | None = None,
                 settings: EpSettings | None = None) -> None:
        if n < 2:
            raise ValidationError("need at least 2 conditions")
        if mode not in ("full", "approx"):
            raise ValidationError(f"unknown mode {mode!r}")
        self.n = n
        self.config = config
        self.mode = mode
        self.selective = selective
        self.batch = batch
        self.rng = rng or np.random.default_rng()
        self.settings = settings or EpSettings()
        if mode == "full":
            self.engine = EpEngine(n, config, self.settings)
        else:
            self._mu = np.full(n, config.prior_mean)
            self._var = np.full(n, config.prior_variance)
        self._thresholds: np.ndarray | None = None
        self.eval_fractions: list[float] = []

    # -- posterior bookkeeping -------------------------------------------
    def observe(self, state: ExperimentState, record: ComparisonRecord) -> None:
        if self.mode == "full":
            self.engine.add(record)
        else:
            i, j = record.first, record.second
            mu_i, var_i, mu_j, var_j = _kernel.adf_update(
                self._mu[i], self._var[i], self._mu[j], self._var[j],
                float(record.outcome), 2.0 * self.config.beta ** 2,
            )
            self._mu[i] = mu_i
            self._var[i] = var_i
            self._mu[j] = mu_j
            self._var[j] = var_j

    def posterior_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self.mode == "full":
            return (self.engine.marg_tau / self.engine.marg_pi,
                    1.0 / self.engine.marg_pi)
        return self._mu.copy(), self._var.copy()

    # -- selection --------------------------------------------------------
    def _eig_round(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n
        npairs = n * (n - 1) // 2
        thresholds = _pair_thresholds(n, self.selective, self._thresholds)
        uniforms = self.rng.random(npairs) if self.selective else np.zeros(npairs)
        if self.mode == "full":
            self.engine.refresh()
            gains, mask = _full_eig_round(self.engine, thresholds, uniforms,
                                          self.settings)
        else:
            gains, mask = _approx_eig_round(self._mu, self._var, self.config,
                                            thresholds, uniforms)
        if not mask.any():
            # cannot happen while row maxima stay 1, but keep a safe fallback
            flat = np.full(npairs, np.inf)
            if self.mode == "full":
                gains, mask = _full_eig_round(self.engine, flat,
                                              np.zeros(npairs), self.settings)
            else:
                gains, mask = _approx_eig_round(self._mu, self._var,
                                                self.config, flat,
                                                np.zeros(npairs))
        return gains, mask

    def propose(self, state: ExperimentState) -> list[Pair]:
        gains, mask = self._eig_round()
        iu, ju = np.triu_indices(self.n, 1)
        self.eval_fractions.append(float(np.mean(mask[iu, ju])))
        # next round's roulette thresholds, from the current marginals
        mu, var = self.posterior_arrays()
        spm = selection_probabilities(ScorePosterior(mu, var), self.config)
        self._thresholds = spm.roulette_thresholds()
        if self.batch:
            return self._mst_batch(gains, mask)
        flat = np.where(mask[iu, ju], gains[iu, ju], -np.inf)
        best = np.flatnonzero(flat == flat.max())
        k = int(best[self.rng.integers(best.shape[0])]) if best.shape[0] > 1 \
            else int(best[0])
        return [(int(iu[k]), int(ju[k]))]

    def _mst_batch(self, gains: np.ndarray, mask: np.ndarray) -> list[Pair]:
        with np.errstate(divide="ignore"):
            weights = np.where(mask, 1.0 / gains, np.nan)
        finite = weights[np.isfinite(weights)]
        if finite.size == 0:
            raise ValidationError("no evaluated pair produced a finite weight")
        fill = float(finite.max()) * 10.0
        weights = np.where(np.isfinite(weights), weights, fill)
        np.fill_diagonal(weights, fill)
        return mst(weights)


def _swiss_pairing(order: list[int], played: set[Pair],
                   rng: np.random.Generator, random_round: bool
                   ) -> list[Pair]:
    """Pair adjacent entries of ``order``, greedily skipping already-played
    pairs; the leftover condition (odd n) sits the round out."""
    if random_round:
        order = [int(x) for x in rng.permutation(len(order))]
    pairs: list[Pair] = []
    remaining = list(order)
    while len(remaining) >= 2:
        a = remaining.pop(0)
        pick = None
        for idx, b in enumerate(remaining):
            if (min(a, b), max(a, b)) not in played:
                pick = idx
                break
        if pick is None:
            pick = 0
        b = remaining.pop(pick)
        pairs.append((min(a, b), max(a, b)))
    return pairs


class SwissSampler(_AdfPosteriorMixin, Sampler):
    """Tournament rounds: random matching first, then adjacent-in-scale
    matching on the current means, avoiding repeats greedily."""

    def __init__(self, n: int, config: ModelConfig,
                 rng: np.random.Generator) -> None:
        if n < 2:
            raise ValidationError("need at least 2 conditions")
        self.n = n
        self.rng = rng
        self._init_adf(n, config)
        self._played: set[Pair] = set()
        self._round = 0

    def propose(self, state: ExperimentState) -> list[Pair]:
        self._round += 1
        order = list(np.argsort(self._mu, kind="stable"))
        pairs = _swiss_pairing([int(x) for x in order], self._played,
                               self.rng, random_round=self._round == 1)
        self._played.update(pairs)
        return pairs


class QuicksortSampler(_AdfPosteriorMixin, Sampler):
    """One partition level per batch: every segment of the active recursion
    picks a random pivot and compares each member against it.  Outcomes split
    the segments; when every segment is a singleton the sort restarts on the
    order just obtained."""

    def __init__(self, n: int, config: ModelConfig,
                 rng: np.random.Generator) -> None:
        if n < 2:
            raise ValidationError("need at least 2 conditions")
        self.n = n
        self.rng = rng
        self._init_adf(n, config)
        self._segments: list[list[int]] = [list(range(n))]
        self._pending: list[tuple[int, int]] | None = None  # (segment idx, pivot)
        self._outcomes: dict[Pair, int] = {}

    def observe(self, state: ExperimentState, record: ComparisonRecord) -> None:
        super().observe(state, record)
        key = (min(record.first, record.second), max(record.first, record.second))
        if self._pending is not None:
            self._outcomes[key] = record.outcome if key == record.pair \
                else -record.outcome

    def _partition(self) -> None:
        new_segments: list[list[int]] = []
        pivots = dict(self._pending or ())
        for idx, segment in enumerate(self._segments):
            pivot = pivots.get(idx)
            if pivot is None:
                new_segments.append(segment)
                continue
            worse: list[int] = []
            better: list[int] = []
            for member in segment:
                if member == pivot:
                    continue
                key = (min(member, pivot), max(member, pivot))
                outcome = self._outcomes.get(key)
                if outcome is None:
                    outcome = 1 if self.rng.random() < 0.5 else -1
                    if key[0] != member:
                        outcome = -outcome
                member_won = outcome == 1 if key[0] == member else outcome == -1
                (better if member_won else worse).append(member)
            new_segments.extend(s for s in (worse, [pivot], better) if s)
        self._segments = new_segments
        self._pending = None
        self._outcomes = {}

    def propose(self, state: ExperimentState) -> list[Pair]:
        if self._pending is not None:
            self._partition()
        if all(len(s) <= 1 for s in self._segments):
            order = [c for s in self._segments for c in s]
            if not order:
                order = list(np.argsort(self._mu, kind="stable"))
            self._segments = [[int(c) for c in order]]
        batch: list[Pair] = []
        pending: list[tuple[int, int]] = []
        for idx, segment in enumerate(self._segments):
            if len(segment) < 2:
                continue
            pivot = segment[int(self.rng.integers(len(segment)))]
            pending.append((idx, pivot))
            batch.extend(
                (member, pivot) for member in segment if member != pivot
            )
        self._pending = pending
        return batch


def make_sampler(kind: SamplerKind, n: int,
                 config: ModelConfig | None = None,
                 rng: np.random.Generator | None = None,
                 settings: EpSettings | None = None) -> Sampler:
    config = config or ModelConfig()
    rng = rng if rng is not None else np.random.default_rng(kind.seed)
    if kind.kind == "asap":
        return AsapSampler(n, config, "full", kind.selective, kind.batch, rng,
                           settings)
    if kind.kind == "asap_approx":
        return AsapSampler(n, config, "approx", kind.selective, kind.batch,
                           rng, settings)
    if kind.kind == "random":
        return RandomSampler(n, rng)
    if kind.kind == "ts_sampling":
        return TsSampler(n, config, rng)
    if kind.kind == "swiss":
        return SwissSampler(n, config, rng)
    if kind.kind == "quicksort":
        return QuicksortSampler(n, config, rng)
    raise ValidationError(f"unknown sampler kind {kind.kind!r}")


def _one_shot_sampler(state: ExperimentState, kind: SamplerKind) -> Sampler:
    sampler = make_sampler(kind, state.n, state.config)
    for record in state.history:
        sampler.observe(state, record)
    return sampler


def next_pair(state: ExperimentState, kind: SamplerKind) -> Pair:
    """Single next pair under the given strategy (sequential mode)."""
    sampler = _one_shot_sampler(state, replace(kind, batch=False))
    return sampler.propose(state)[0]


def next_batch(state: ExperimentState, kind: SamplerKind) -> list[Pair]:
    """Next batch of pairs; for the gain-driven kinds this is the spanning
    tree of the reciprocal-gain graph (n-1 pairs covering every condition)."""
    sampler = _one_shot_sampler(state, replace(kind, batch=True))
    return sampler.propose(state)


def swiss_round(state: ExperimentState, rng: np.random.Generator) -> list[Pair]:
    """One Swiss round derived from the state: a random matching when no
    history exists, otherwise adjacent pairing on the current posterior means
    with played pairs excluded greedily."""
    if state.n < 2:
        raise ValidationError("need at least 2 conditions")
    played = {
        (min(r.first, r.second), max(r.first, r.second)) for r in state.history
    }
    if not state.history:
        return _swiss_pairing(list(range(state.n)), played, rng,
                              random_round=True)
    order = [int(x) for x in np.argsort(state.posterior.means, kind="stable")]
    return _swiss_pairing(order, played, rng, random_round=False)


def quicksort_schedule(state: ExperimentState,
                       rng: np.random.Generator) -> list[Pair]:
    """First partition level of a fresh randomized quicksort pass over all
    conditions: one pivot, each other condition paired against it."""
    if state.n < 2:
        raise ValidationError("need at least 2 conditions")
    order = [int(x) for x in np.argsort(state.posterior.means, kind="stable")]
    pivot = order[int(rng.integers(len(order)))]
    return [(member, pivot) for member in order if member != pivot]

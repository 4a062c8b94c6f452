"""Stage-wise search over the (window, measurement, aggregation) family.

Each stage appends the channel that minimizes GWD_N of the partial
representation (unfilled channels stay zero).  Candidates come from one of
three proposers: every remaining triple, ``k`` seeded random ones, or a
budgeted loop where half the budget is random and the other half is ranked
by a one-hot ridge regression fit on the scores seen so far in the stage.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateSampleError, ValidationError
from .events import Sample
from .gw.pipeline import BatchReport, PreparedSample, gwd_from_grid, prepare_sample, summarize
from .gw.solver import SolverConfig
from .representations import (
    AGGREGATIONS,
    MEASUREMENTS,
    ChannelSpec,
    FeatureGrid,
    RepresentationSpec,
    WindowSpec,
    build_channel,
    window_basis,
)

log = logging.getLogger(__name__)

DESCENT_SLACK = 1e-9
STRATEGIES = ("exhaustive", "random_k", "surrogate")
RIDGE_LAMBDA = 1.0


@dataclass(frozen=True)
class CandidateSpace:
    windows: tuple[WindowSpec, ...] = field(default_factory=lambda: tuple(window_basis()))
    measurements: tuple[str, ...] = MEASUREMENTS
    aggregations: tuple[str, ...] = AGGREGATIONS

    @property
    def total(self) -> int:
        return len(self.windows) * len(self.measurements) * len(self.aggregations)

    def all(self) -> list[ChannelSpec]:
        """Every triple in enumeration order: window, then measurement, then aggregation."""
        return [
            ChannelSpec(w, m, a)
            for w in self.windows
            for m in self.measurements
            for a in self.aggregations
        ]

    def order_key(self, c: ChannelSpec) -> tuple[int, int, int]:
        return (self.windows.index(c.window), self.measurements.index(c.measurement),
                self.aggregations.index(c.aggregation))

    def one_hot(self, cands: Sequence[ChannelSpec]) -> np.ndarray:
        nw, nm = len(self.windows), len(self.measurements)
        X = np.zeros((len(cands), nw + nm + len(self.aggregations)))
        for r, c in enumerate(cands):
            i, j, k = self.order_key(c)
            X[r, i] = X[r, nw + j] = X[r, nw + nm + k] = 1.0
        return X


@dataclass(frozen=True)
class ProposalStrategy:
    kind: str = "exhaustive"
    k: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.kind!r}; expected one of {STRATEGIES}")
        if self.kind != "exhaustive" and self.k < 1:
            raise ValidationError("k must be at least 1 for sampled strategies")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind != "exhaustive":
            d.update(k=self.k, seed=self.seed)
        return d


@dataclass
class SearchState:
    target_channels: int = 12
    chosen: list[ChannelSpec] = field(default_factory=list)
    stage_scores: list[float] = field(default_factory=list)
    evaluations: list[list[tuple[ChannelSpec, float]]] = field(default_factory=list)
    violations: list[dict] = field(default_factory=list)

    @property
    def stage(self) -> int:
        """Zero-based index of the stage being filled."""
        return len(self.chosen)

    def current_log(self) -> list[tuple[ChannelSpec, float]]:
        return self.evaluations[self.stage] if len(self.evaluations) > self.stage else []

    def spec(self) -> RepresentationSpec:
        return RepresentationSpec(tuple(self.chosen))


def enumerate_candidates(space: CandidateSpace, state: SearchState) -> list[ChannelSpec]:
    taken = set(state.chosen)
    return [c for c in space.all() if c not in taken]


def _ridge_predict(space: CandidateSpace, seen: list[tuple[ChannelSpec, float]],
                   cands: list[ChannelSpec]) -> np.ndarray:
    finite = [(c, s) for c, s in seen if math.isfinite(s)]
    if not finite:
        return np.zeros(len(cands))
    X = space.one_hot([c for c, _ in finite])
    y = np.array([s for _, s in finite])
    mu = y.mean()
    A = X.T @ X + RIDGE_LAMBDA * np.eye(X.shape[1])
    beta = np.linalg.solve(A, X.T @ (y - mu))
    return mu + space.one_hot(cands) @ beta


def propose(state: SearchState, space: CandidateSpace, strategy: ProposalStrategy) -> list[ChannelSpec]:
    """Next batch of candidates for the current stage (empty once the stage's
    budget is spent).

    The surrogate proposer is called twice per stage: first it returns
    ``ceil(k/2)`` seeded random candidates, then, once those are in the
    stage log, the ``k - ceil(k/2)`` best-predicted remaining ones.
    """
    remaining = enumerate_candidates(space, state)
    seen = {c for c, _ in state.current_log()}
    fresh = [c for c in remaining if c not in seen]
    if strategy.kind == "exhaustive":
        return fresh
    rng = np.random.default_rng([strategy.seed, state.stage])
    perm = rng.permutation(len(remaining))
    seeded = [remaining[i] for i in perm]
    if strategy.kind == "random_k":
        return [c for c in seeded[: strategy.k] if c not in seen]
    explore = math.ceil(strategy.k / 2)
    budget_left = strategy.k - len(seen)
    if budget_left <= 0:
        return []
    if not seen:
        return seeded[: min(explore, strategy.k)]
    pool = [c for c in seeded if c not in seen]
    pred = _ridge_predict(space, state.current_log(), pool)
    # stable sort keeps the seeded order among equal predictions
    order = np.argsort(pred, kind="stable")
    return [pool[i] for i in order[:budget_left]]


class CorpusEvaluator:
    """Scores partial representations on a fixed corpus.

    Event similarity matrices and single-channel images are computed once
    per sample and reused across candidates and stages.
    """

    def __init__(self, samples: Sequence[Sample], cfg: SolverConfig, N: int | None = None,
                 n_channels: int = 12):
        self.cfg = cfg
        self.N = len(samples) if N is None else N
        if not 1 <= self.N <= len(samples):
            raise ValidationError(f"N={self.N} must lie in [1, {len(samples)}]")
        self.n_channels = n_channels
        self.prepared: list[PreparedSample] = [prepare_sample(s, cfg, i) for i, s in enumerate(samples)]
        self._images: dict[tuple[int, ChannelSpec], np.ndarray] = {}

    def image(self, idx: int, channel: ChannelSpec) -> np.ndarray:
        key = (idx, channel)
        img = self._images.get(key)
        if img is None:
            img = build_channel(self.prepared[idx].sample, channel)
            self._images[key] = img
        return img

    def grid(self, idx: int, channels: Sequence[ChannelSpec]) -> FeatureGrid:
        s = self.prepared[idx].sample
        data = np.zeros((s.height, s.width, max(self.n_channels, len(channels))))
        for c, ch in enumerate(channels):
            data[:, :, c] = self.image(idx, ch)
        return FeatureGrid(data)

    def score(self, channels: Sequence[ChannelSpec]) -> BatchReport:
        outcomes = []
        have = 0
        for prep in self.prepared:
            if have == self.N:
                break
            if prep.degenerate:
                outcomes.append((prep.index, None))
                continue
            try:
                res = gwd_from_grid(prep.Ce, self.grid(prep.index, channels), self.cfg)
            except DegenerateSampleError:
                outcomes.append((prep.index, None))
                continue
            outcomes.append((prep.index, res))
            have += 1
        return summarize(outcomes, self.N)


def evaluate_candidate(state: SearchState, candidate: ChannelSpec, evaluator: CorpusEvaluator) -> BatchReport:
    """GWD_N of ``chosen + [candidate]`` with the remaining channels zero."""
    if candidate in state.chosen:
        raise ValidationError(f"candidate {candidate.label()} is already chosen")
    return evaluator.score(list(state.chosen) + [candidate])


# process-pool plumbing: the evaluator is inherited by forked workers
_WORKER: CorpusEvaluator | None = None


def _init_worker(evaluator: CorpusEvaluator) -> None:
    global _WORKER
    _WORKER = evaluator


def _score_in_worker(channels: tuple[ChannelSpec, ...]) -> BatchReport | None:
    try:
        return _WORKER.score(channels)
    except DegenerateSampleError:
        return None


@dataclass
class SearchResult:
    spec: RepresentationSpec
    state: SearchState
    reports: list[list[tuple[ChannelSpec, BatchReport | None]]]
    strategy: ProposalStrategy

    def log_dict(self) -> dict:
        stages = []
        for s, recs in enumerate(self.reports):
            stages.append({
                "stage": s + 1,
                "winner": self.state.chosen[s].to_dict(),
                "score": self.state.stage_scores[s],
                "candidates": [
                    {
                        "channel": c.to_dict(),
                        "score": r.mean if r is not None else None,
                        "n": r.n if r is not None else 0,
                        "skipped": r.skipped if r is not None else None,
                    }
                    for c, r in recs
                ],
            })
        return {
            "strategy": self.strategy.to_dict(),
            "target_channels": self.state.target_channels,
            "stage_scores": list(self.state.stage_scores),
            "descent_violations": list(self.state.violations),
            "stages": stages,
        }

    def save(self, directory) -> tuple[Path, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        spec_path = d / "spec.json"
        log_path = d / "search_log.json"
        self.spec.save(spec_path)
        log_path.write_text(json.dumps(self.log_dict(), indent=2, sort_keys=True) + "\n")
        return spec_path, log_path


def stagewise_search(samples: Sequence[Sample], space: CandidateSpace | None = None,
                     strategy: ProposalStrategy | None = None, cfg: SolverConfig | None = None,
                     n_channels: int = 12, N: int | None = None, jobs: int = 1,
                     evaluator: CorpusEvaluator | None = None) -> SearchResult:
    """Greedy channel-by-channel minimization of GWD_N."""
    space = space or CandidateSpace()
    strategy = strategy or ProposalStrategy()
    cfg = cfg or SolverConfig()
    if n_channels < 1:
        raise ValidationError("n_channels must be at least 1")
    if n_channels > space.total:
        raise ValidationError(f"cannot fill {n_channels} channels from {space.total} candidates")
    if jobs < 1:
        raise ValidationError("jobs must be at least 1")
    evaluator = evaluator or CorpusEvaluator(samples, cfg, N, n_channels)
    if all(p.degenerate for p in evaluator.prepared):
        raise DegenerateSampleError("every sample in the corpus is empty")
    state = SearchState(target_channels=n_channels)
    reports: list[list[tuple[ChannelSpec, BatchReport | None]]] = []
    pool = ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(evaluator,)) \
        if jobs > 1 else None
    if pool is None:
        _init_worker(evaluator)
    try:
        for stage in range(n_channels):
            state.evaluations.append([])
            stage_reports: list[tuple[ChannelSpec, BatchReport | None]] = []
            while True:
                batch = propose(state, space, strategy)
                if not batch:
                    break
                jobs_in = [tuple(state.chosen) + (c,) for c in batch]
                outs = list(pool.map(_score_in_worker, jobs_in, chunksize=4) if pool
                            else map(_score_in_worker, jobs_in))
                for c, rep in zip(batch, outs):
                    score = rep.mean if rep is not None else math.inf
                    state.evaluations[stage].append((c, score))
                    stage_reports.append((c, rep))
                if strategy.kind != "surrogate":
                    break
            scored = [(s, space.order_key(c), c) for c, s in state.evaluations[stage]]
            if not scored:
                raise ValidationError("no candidates remain")
            best, _, winner = min(scored, key=lambda t: (t[0], t[1]))
            if not math.isfinite(best):
                raise DegenerateSampleError(f"stage {stage + 1}: every candidate is degenerate")
            if state.stage_scores and best > state.stage_scores[-1] + DESCENT_SLACK:
                v = {"stage": stage + 1, "score": best, "previous": state.stage_scores[-1]}
                state.violations.append(v)
                log.warning("stage %d score %.6g exceeds previous %.6g (solver convergence?)",
                            stage + 1, best, state.stage_scores[-1])
            log.info("stage %d: %s -> %.6g", stage + 1, winner.label(), best)
            state.chosen.append(winner)
            state.stage_scores.append(best)
            reports.append(sorted(stage_reports, key=lambda cr: space.order_key(cr[0])))
    finally:
        if pool:
            pool.shutdown()
    return SearchResult(state.spec(), state, reports, strategy)

"""From event windows to GWD scores: subsampling, embedding, batching."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import DegenerateSampleError, ValidationError
from ..events import Sample, normalize
from ..representations import FeatureGrid
from .kernels import SimilarityMatrix, embed_features, similarity_matrix
from .solver import GwdResult, SolverConfig, solve_gw

log = logging.getLogger(__name__)

Builder = Callable[[Sample], FeatureGrid]


def subsample(sample: Sample, cap: int, seed: int, index: int = 0) -> Sample:
    """Uniform subsample without replacement to at most ``cap`` events.

    The generator is keyed by ``(seed, index)`` so each sample of a corpus
    draws its own, reproducible subset; event order is preserved.
    """
    n = len(sample)
    if n <= cap:
        return sample
    rng = np.random.default_rng([seed, index])
    keep = np.sort(rng.choice(n, size=cap, replace=False))
    return sample.with_events(keep)


@dataclass(frozen=True)
class PreparedSample:
    """A capped event window with its event similarity matrix; ``Ce`` is
    ``None`` when the window holds no events."""

    index: int
    sample: Sample
    Ce: SimilarityMatrix | None = field(repr=False)

    @property
    def degenerate(self) -> bool:
        return self.Ce is None


def prepare_sample(sample: Sample, cfg: SolverConfig, index: int = 0) -> PreparedSample:
    capped = subsample(sample, cfg.event_cap, cfg.seed, index)
    if len(capped) == 0:
        return PreparedSample(index, capped, None)
    Ce = similarity_matrix(normalize(capped).points, h=cfg.bandwidth)
    return PreparedSample(index, capped, Ce)


def gwd_from_grid(Ce: SimilarityMatrix, grid: FeatureGrid, cfg: SolverConfig) -> GwdResult:
    """Embed and sparsify ``grid``, then solve against the event similarities."""
    pts = embed_features(grid)
    if pts.size == 0:
        raise DegenerateSampleError("representation has no nonzero pixel")
    Cf = similarity_matrix(pts.points, h=cfg.bandwidth)
    return solve_gw(Ce, Cf, cfg)


def gwd_prepared(prep: PreparedSample, builder: Builder, cfg: SolverConfig) -> GwdResult:
    if prep.degenerate:
        raise DegenerateSampleError(f"sample {prep.index} has no events")
    return gwd_from_grid(prep.Ce, builder(prep.sample), cfg)


def gwd_sample_result(sample: Sample, builder: Builder, cfg: SolverConfig | None = None,
                      sample_index: int = 0) -> GwdResult:
    cfg = cfg or SolverConfig()
    return gwd_prepared(prepare_sample(sample, cfg, sample_index), builder, cfg)


def gwd_sample(sample: Sample, builder: Builder, cfg: SolverConfig | None = None,
               sample_index: int = 0) -> float:
    """GWD between one window's events and its representation."""
    return gwd_sample_result(sample, builder, cfg, sample_index).objective


@dataclass(frozen=True)
class SampleScore:
    idx: int
    gwd: float
    converged: bool
    iters: int

    def to_dict(self) -> dict:
        return {"idx": self.idx, "gwd": self.gwd, "converged": self.converged, "iters": self.iters}


@dataclass(frozen=True)
class BatchReport:
    """Mean GWD over the first ``n`` usable samples."""

    mean: float
    n: int
    skipped: int
    per_sample: tuple[SampleScore, ...]

    @property
    def std(self) -> float:
        vals = np.array([s.gwd for s in self.per_sample])
        return float(vals.std()) if vals.size else 0.0

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "n": self.n,
            "skipped": self.skipped,
            "per_sample": [s.to_dict() for s in self.per_sample],
        }


def summarize(outcomes: Sequence[tuple[int, GwdResult | None]], N: int) -> BatchReport:
    """Merge per-sample outcomes (``None`` = degenerate) in index order and
    keep the first ``N`` scored ones."""
    scored: list[SampleScore] = []
    skipped = 0
    for idx, res in sorted(outcomes, key=lambda o: o[0]):
        if len(scored) == N:
            break
        if res is None:
            skipped += 1
            continue
        scored.append(SampleScore(idx, float(res.objective), bool(res.converged), int(res.iterations)))
    if not scored:
        raise DegenerateSampleError("every sample is degenerate")
    mean = float(np.mean([s.gwd for s in scored]))
    return BatchReport(mean, len(scored), skipped, tuple(scored))


def _evaluate(args) -> tuple[int, GwdResult | None]:
    sample, builder, cfg, idx = args
    try:
        return idx, gwd_sample_result(sample, builder, cfg, idx)
    except DegenerateSampleError as exc:
        log.info("skipping sample %d: %s", idx, exc)
        return idx, None


def gwd_batch(samples: Sequence[Sample], builder: Builder, cfg: SolverConfig | None = None,
              N: int | None = None, jobs: int = 1) -> BatchReport:
    """Average GWD over the first ``N`` non-degenerate samples.

    Samples are scored in blocks of the still-missing count until ``N``
    scores exist, so degenerate windows are replaced by later ones.  With
    ``jobs > 1`` each block is spread over worker processes; results are
    merged by sample index, so the report does not depend on scheduling.
    """
    cfg = cfg or SolverConfig()
    N = len(samples) if N is None else N
    if N < 1:
        raise ValidationError("N must be at least 1")
    if N > len(samples):
        raise ValidationError(f"N={N} exceeds the {len(samples)} available samples")
    if jobs < 1:
        raise ValidationError("jobs must be at least 1")
    outcomes: list[tuple[int, GwdResult | None]] = []
    pos = 0
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        while pos < len(samples):
            have = sum(1 for _, r in outcomes if r is not None)
            need = N - have
            if need <= 0:
                break
            block = [(samples[i], builder, cfg, i) for i in range(pos, min(pos + need, len(samples)))]
            pos += len(block)
            outcomes.extend(pool.map(_evaluate, block) if pool else map(_evaluate, block))
    finally:
        if pool:
            pool.shutdown()
    return summarize(outcomes, N)

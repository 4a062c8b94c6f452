"""Sweeps over channel count, blur and sample count, with their reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import kendalltau

from .errors import ValidationError
from .events import Sample
from .gw.pipeline import BatchReport, Builder, gwd_batch
from .gw.solver import SolverConfig
from .representations import BlurredBuilder, preset_builder, resolve_builder
from .svg import HLine, LinePlot, Series

CHANNEL_FAMILIES = ("voxel", "mdes")


@dataclass(frozen=True)
class SweepPoint:
    value: float
    mean: float
    std: float
    skipped: int
    n: int

    @classmethod
    def from_report(cls, value: float, rep: BatchReport) -> "SweepPoint":
        return cls(float(value), rep.mean, rep.std, rep.skipped, rep.n)

    def to_dict(self) -> dict:
        return {"value": self.value, "mean": self.mean, "std": self.std,
                "skipped": self.skipped, "n": self.n}


@dataclass
class SweepReport:
    axis: str
    representation: str
    points: list[SweepPoint] = field(default_factory=list)

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: p.value)

    @property
    def means(self) -> list[float]:
        return [p.mean for p in self.points]

    def to_dict(self) -> dict:
        return {"axis": self.axis, "representation": self.representation,
                "points": [p.to_dict() for p in self.points]}

    def plot(self, title: str, xlabel: str) -> LinePlot:
        return LinePlot(title, xlabel, "mean GWD",
                        [Series(self.representation, [p.value for p in self.points], self.means)])


def _check_values(values: Sequence[float], what: str, minimum: float, integer: bool = False) -> list:
    if not values:
        raise ValidationError(f"at least one {what} is required")
    out = []
    for v in values:
        if integer and int(v) != v:
            raise ValidationError(f"{what} must be integers, got {v}")
        if not v >= minimum:
            raise ValidationError(f"{what} must be >= {minimum}, got {v}")
        out.append(int(v) if integer else float(v))
    if len(set(out)) != len(out):
        raise ValidationError(f"duplicate {what}")
    return out


def sweep_channels(samples: Sequence[Sample], family: str, channels: Sequence[int],
                   cfg: SolverConfig, N: int | None = None, jobs: int = 1) -> SweepReport:
    """Mean GWD of ``voxelB`` or ``mdesB`` for each channel count ``B``."""
    if family not in CHANNEL_FAMILIES:
        raise ValidationError(f"family must be one of {CHANNEL_FAMILIES}")
    counts = _check_values(channels, "channel counts", 1, integer=True)
    pts = [SweepPoint.from_report(b, gwd_batch(samples, preset_builder(f"{family}{b}"), cfg, N, jobs))
           for b in sorted(counts)]
    return SweepReport("channels", family, pts)


def sweep_blur(samples: Sequence[Sample], repr_ref: str, sigmas: Sequence[float],
               cfg: SolverConfig, N: int | None = None, jobs: int = 1) -> SweepReport:
    """Mean GWD after blurring every channel with each ``sigma``."""
    sig = _check_values(sigmas, "blur sigmas", 0.0)
    name, builder = resolve_builder(repr_ref)
    pts = []
    for s in sorted(sig):
        b: Builder = builder if s == 0 else BlurredBuilder(builder, s)
        pts.append(SweepPoint.from_report(s, gwd_batch(samples, b, cfg, N, jobs)))
    return SweepReport("blur_sigma", name, pts)


@dataclass
class SampleStudy:
    """GWD_N curves per representation and ranking agreement with the largest N."""

    reports: list[SweepReport]
    ranking: list[dict]

    def to_dict(self) -> dict:
        return {"axis": "sample_count", "reports": [r.to_dict() for r in self.reports],
                "ranking": self.ranking}

    def plot(self) -> LinePlot:
        return LinePlot("GWD_N vs number of samples", "N", "mean GWD",
                        [Series(r.representation, [p.value for p in r.points], r.means) for r in self.reports])


def ranking(names: Sequence[str], means: Sequence[float]) -> list[str]:
    """Names ordered by ascending mean GWD (ties keep the given order)."""
    order = sorted(range(len(names)), key=lambda i: (means[i], i))
    return [names[i] for i in order]


def kendall_tau(order_a: Sequence[str], order_b: Sequence[str]) -> float:
    if sorted(order_a) != sorted(order_b):
        raise ValidationError("rankings must cover the same representations")
    if len(order_a) < 2:
        return 1.0
    pos_b = {name: i for i, name in enumerate(order_b)}
    tau = kendalltau(np.arange(len(order_a)), [pos_b[n] for n in order_a]).statistic
    return float(tau)


def sweep_samples(samples: Sequence[Sample], repr_refs: Sequence[str], Ns: Sequence[int],
                  cfg: SolverConfig, jobs: int = 1) -> SampleStudy:
    """Each representation is scored once on the first ``max(Ns)`` usable
    samples; GWD_N for smaller ``N`` is the mean over the first ``N`` of them."""
    counts = sorted(_check_values(Ns, "sample counts", 1, integer=True))
    if not repr_refs:
        raise ValidationError("at least one representation is required")
    if counts[-1] > len(samples):
        raise ValidationError(f"N={counts[-1]} exceeds the corpus size {len(samples)}")
    reports = []
    for ref in repr_refs:
        name, builder = resolve_builder(ref)
        full = gwd_batch(samples, builder, cfg, counts[-1], jobs)
        vals = np.array([s.gwd for s in full.per_sample])
        pts = []
        for n in counts:
            head = full.per_sample[:n]
            skipped = head[-1].idx + 1 - len(head)  # degenerate windows passed over
            v = vals[:n]
            pts.append(SweepPoint(float(n), float(v.mean()), float(v.std()), skipped, len(v)))
        reports.append(SweepReport("sample_count", name, pts))
    names = [r.representation for r in reports]
    final = ranking(names, [r.points[-1].mean for r in reports])
    table = []
    for k, n in enumerate(counts):
        order = ranking(names, [r.points[k].mean for r in reports])
        table.append({"N": n, "order": order, "kendall_tau": kendall_tau(order, final)})
    return SampleStudy(reports, table)


def preset_baselines(samples: Sequence[Sample], names: Sequence[str], cfg: SolverConfig,
                     N: int | None = None, jobs: int = 1) -> dict[str, float]:
    return {n: gwd_batch(samples, preset_builder(n), cfg, N, jobs).mean for n in names}


def descent_plot(stage_scores: Sequence[float], baselines: dict[str, float]) -> LinePlot:
    stages = list(range(1, len(stage_scores) + 1))
    return LinePlot(
        "Stage-wise search", "channels filled", "GWD_N",
        [Series("search", [float(s) for s in stages], list(stage_scores))],
        [HLine(name, v) for name, v in baselines.items() if math.isfinite(v)],
    )

"""Synthetic event streams from moving step edges.

Each pixel samples the scene's log intensity at its center.  When a step edge
crosses a center the intensity jumps by ``edge_contrast``; the pixel keeps a
reference level and emits one event per ``contrast_threshold`` of accumulated
change, with polarity equal to the sign of the change.  Spurious events are
added as a homogeneous Poisson process per pixel with random polarity.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError
from .events import EventStream

PATTERNS = ("translating-edge", "translating-bar", "two-speed-bars")


@dataclass(frozen=True)
class SyntheticSceneConfig:
    width: int
    height: int
    duration: float
    pattern: str = "translating-edge"
    speed: float = 32.0
    contrast_threshold: float = 1.0
    noise_rate: float = 0.0
    seed: int = 0
    edge_contrast: float = 1.0
    bar_width: int | None = None

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"sensor must have positive area, got {self.width}x{self.height}")
        if self.pattern not in PATTERNS:
            raise ValidationError(f"unknown pattern {self.pattern!r}; expected one of {PATTERNS}")
        if not self.speed > 0:
            raise ValidationError("speed must be positive")
        if not self.duration > 0:
            raise ValidationError("duration must be positive")
        if not self.contrast_threshold > 0:
            raise ValidationError("contrast_threshold must be positive")
        if not self.edge_contrast > 0:
            raise ValidationError("edge_contrast must be positive")
        if self.noise_rate < 0:
            raise ValidationError("noise_rate must be non-negative")
        if self.bar_width is not None and self.bar_width <= 0:
            raise ValidationError("bar_width must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class _Edge:
    x0: float          # position at t=0
    velocity: float    # px/s, signed
    period: float | None
    step: float        # log-intensity change seen by a pixel when the edge passes
    rows: tuple[int, int]


def _edges(cfg: SyntheticSceneConfig) -> list[_Edge]:
    W, H = cfg.width, cfg.height
    A = cfg.edge_contrast
    bw = cfg.bar_width or max(2, W // 8)
    if cfg.pattern == "translating-edge":
        return [_Edge(0.0, cfg.speed, None, +A, (0, H))]
    if cfg.pattern == "translating-bar":
        period = float(W + bw)
        # leading edge at bw, trailing edge at 0: the bar starts fully visible
        return [
            _Edge(float(bw), cfg.speed, period, +A, (0, H)),
            _Edge(0.0, cfg.speed, period, -A, (0, H)),
        ]
    period = float(W + bw)
    top = (H // 8, max(H // 8 + 1, 3 * H // 8))
    bottom = (5 * H // 8, max(5 * H // 8 + 1, 7 * H // 8))
    left = float(W)
    return [
        _Edge(float(bw), cfg.speed, period, +A, top),
        _Edge(0.0, cfg.speed, period, -A, top),
        # second bar moves left at twice the speed
        _Edge(left - bw, -2.0 * cfg.speed, period, +A, bottom),
        _Edge(left, -2.0 * cfg.speed, period, -A, bottom),
    ]


def _crossing_times(edge: _Edge, center: float, duration: float) -> np.ndarray:
    v = edge.velocity
    if edge.period is None:
        t = (center - edge.x0) / v
        return np.array([t]) if 0.0 < t < duration else np.empty(0)
    P = edge.period
    # solve x0 + v t = center + k P  for t in (0, duration)
    k_lo = math.floor(min(edge.x0 - center, edge.x0 + v * duration - center) / P) - 1
    k_hi = math.ceil(max(edge.x0 - center, edge.x0 + v * duration - center) / P) + 1
    k = np.arange(k_lo, k_hi + 1, dtype=np.float64)
    t = (center + k * P - edge.x0) / v
    t = t[(t > 0.0) & (t < duration)]
    return np.sort(t)


def generate_synthetic_scene(config: SyntheticSceneConfig) -> EventStream:
    config.validate()
    W, H, C = config.width, config.height, config.contrast_threshold
    xs: list[int] = []
    ys: list[int] = []
    ts: list[float] = []
    ps: list[int] = []
    edges = _edges(config)
    for x in range(W):
        center = x + 0.5
        # crossings shared by every row an edge covers
        per_edge = [_crossing_times(e, center, config.duration) for e in edges]
        for y in range(H):
            changes = [
                (t, e.step)
                for e, times in zip(edges, per_edge)
                if e.rows[0] <= y < e.rows[1]
                for t in times.tolist()
            ]
            if not changes:
                continue
            changes.sort(key=lambda c: c[0])
            level = 0.0
            ref = 0.0
            for t, step in changes:
                level += step
                while level - ref >= C - 1e-12:
                    ref += C
                    xs.append(x); ys.append(y); ts.append(t); ps.append(1)
                while ref - level >= C - 1e-12:
                    ref -= C
                    xs.append(x); ys.append(y); ts.append(t); ps.append(-1)

    if config.noise_rate > 0:
        rng = np.random.default_rng(config.seed)
        counts = rng.poisson(config.noise_rate * config.duration, size=W * H)
        total = int(counts.sum())
        flat = np.repeat(np.arange(W * H), counts)
        xs.extend((flat % W).tolist())
        ys.extend((flat // W).tolist())
        ts.extend(rng.uniform(0.0, config.duration, size=total).tolist())
        ps.extend(rng.choice(np.array([-1, 1]), size=total).tolist())

    return EventStream.from_arrays(xs, ys, ts, ps, W, H)

"""Raw event data: streams, time-window samples and coordinate normalization.

Events are stored column-wise (``x``, ``y``, ``t``, ``p`` arrays) because every
consumer downstream is vectorized.  Arrays are frozen on construction so that
streams and samples can be shared between workers without copies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ValidationError


class Event(NamedTuple):
    x: int
    y: int
    t: float
    p: int


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _check_columns(x, y, t, p, width: int, height: int) -> tuple[np.ndarray, ...]:
    if width <= 0 or height <= 0:
        raise ValidationError(f"sensor size must be positive, got {width}x{height}")
    x = np.asarray(x, dtype=np.int64).reshape(-1)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    p = np.asarray(p, dtype=np.int8).reshape(-1)
    n = x.size
    if not (y.size == t.size == p.size == n):
        raise ValidationError("event columns have different lengths")
    if n:
        bad = (x < 0) | (x >= width) | (y < 0) | (y >= height)
        if bad.any():
            k = int(np.argmax(bad))
            raise ValidationError(
                f"event {k} at pixel ({x[k]}, {y[k]}) outside {width}x{height} sensor"
            )
        if not np.all(np.isfinite(t)) or (t < 0).any():
            raise ValidationError("timestamps must be finite and non-negative")
        if not np.all((p == 1) | (p == -1)):
            raise ValidationError("polarity must be -1 or +1")
    return x, y, t, p


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-ordered events on a ``width`` x ``height`` sensor."""

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    width: int
    height: int

    @classmethod
    def from_arrays(cls, x, y, t, p, width: int, height: int) -> "EventStream":
        """Validate, stable-sort by timestamp and freeze the columns."""
        x, y, t, p = _check_columns(x, y, t, p, int(width), int(height))
        order = np.argsort(t, kind="stable")
        return cls(
            _frozen(x[order]), _frozen(y[order]), _frozen(t[order]), _frozen(p[order]),
            int(width), int(height),
        )

    @classmethod
    def from_events(cls, events, width: int, height: int) -> "EventStream":
        events = list(events)
        if not events:
            return cls.empty(width, height)
        x, y, t, p = zip(*events)
        return cls.from_arrays(x, y, t, p, width, height)

    @classmethod
    def empty(cls, width: int, height: int) -> "EventStream":
        return cls.from_arrays([], [], [], [], width, height)

    def __len__(self) -> int:
        return int(self.t.size)

    def __iter__(self) -> Iterator[Event]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, k: int) -> Event:
        return Event(int(self.x[k]), int(self.y[k]), float(self.t[k]), int(self.p[k]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class Sample(EventStream):
    """Events of one window ``[t_start, t_end)``."""

    t_start: float = 0.0
    t_end: float = 1.0

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def with_events(self, mask_or_index) -> "Sample":
        """Subset of the events, keeping the window bounds and sensor size."""
        return Sample(
            _frozen(self.x[mask_or_index]), _frozen(self.y[mask_or_index]),
            _frozen(self.t[mask_or_index]), _frozen(self.p[mask_or_index]),
            self.width, self.height, self.t_start, self.t_end,
        )

    def normalized_time(self) -> np.ndarray:
        return (self.t - self.t_start) / self.duration

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            EventStream.__eq__(self, other)
            and self.t_start == other.t_start
            and self.t_end == other.t_end
        )

    __hash__ = None  # type: ignore[assignment]


def make_sample(x, y, t, p, width: int, height: int, t_start: float, t_end: float) -> Sample:
    """Build a sample, checking that every event falls inside the window."""
    if not t_end > t_start:
        raise ValidationError(f"empty window [{t_start}, {t_end})")
    s = EventStream.from_arrays(x, y, t, p, width, height)
    if len(s) and (s.t[0] < t_start or s.t[-1] >= t_end):
        raise ValidationError("sample contains events outside its window")
    return Sample(s.x, s.y, s.t, s.p, s.width, s.height, float(t_start), float(t_end))


def slice_window(stream: EventStream, t0: float, t1: float) -> Sample:
    """Events with ``t0 <= t < t1``."""
    if not t1 > t0:
        raise ValidationError(f"window start {t0} must be before end {t1}")
    lo = np.searchsorted(stream.t, t0, side="left")
    hi = np.searchsorted(stream.t, t1, side="left")
    sl = slice(int(lo), int(hi))
    return Sample(
        _frozen(stream.x[sl]), _frozen(stream.y[sl]), _frozen(stream.t[sl]),
        _frozen(stream.p[sl]), stream.width, stream.height, float(t0), float(t1),
    )


def slice_count(stream: EventStream, start: int, count: int) -> Sample:
    """Fixed-count slicing: ``count`` events starting at index ``start``.

    The window runs from the first selected timestamp up to the next event's
    timestamp (or just past the last one at the end of the stream).
    """
    if count <= 0:
        raise ValidationError("count must be positive")
    if not 0 <= start < len(stream):
        raise ValidationError(f"start index {start} outside stream of {len(stream)} events")
    stop = min(start + count, len(stream))
    t0 = float(stream.t[start])
    if stop < len(stream) and stream.t[stop] > stream.t[stop - 1]:
        t1 = float(stream.t[stop])
    else:
        t1 = float(np.nextafter(stream.t[stop - 1], np.inf))
    sl = slice(start, stop)
    return Sample(
        _frozen(stream.x[sl]), _frozen(stream.y[sl]), _frozen(stream.t[sl]),
        _frozen(stream.p[sl]), stream.width, stream.height, t0, t1,
    )


@dataclass(frozen=True)
class NormalizedEvents:
    """Rows ``(x/W, y/H, (t - t_start)/dT, p)``."""

    points: np.ndarray

    @property
    def count(self) -> int:
        return int(self.points.shape[0])


def normalize(sample: Sample) -> NormalizedEvents:
    if sample.duration <= 0:
        raise ValidationError("sample window has zero length")
    pts = np.empty((len(sample), 4), dtype=np.float64)
    pts[:, 0] = sample.x / sample.width
    pts[:, 1] = sample.y / sample.height
    pts[:, 2] = sample.normalized_time()
    pts[:, 3] = sample.p
    return NormalizedEvents(_frozen(pts))

"""Dense event representations.

A channel is the composition ``aggregate(measure(window(events)))``; a
representation stacks channels into an ``H x W x N_c`` grid.  The named
presets (2D histogram, voxel grid, MDES, time surface, TORE) are built
directly since several of them are not expressible in the family.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .events import Sample

MEASUREMENTS = ("t_pos", "t_neg", "t", "p", "c_pos", "c_neg", "c")
AGGREGATIONS = ("max", "sum", "mean", "variance")
WINDOW_KINDS = ("time", "count")


@dataclass(frozen=True)
class WindowSpec:
    """``time``: normalized timestamps in ``[a, b)``.  ``count``: the most
    recent ``ceil((b - a) * N_e)`` events, with ``b == 1``."""

    kind: str
    a: float
    b: float

    def __post_init__(self):
        if self.kind not in WINDOW_KINDS:
            raise ValidationError(f"unknown window kind {self.kind!r}")
        if not (0.0 <= self.a < self.b <= 1.0):
            raise ValidationError(f"window bounds must satisfy 0 <= a < b <= 1, got [{self.a}, {self.b}]")
        if self.kind == "count" and self.b != 1.0:
            raise ValidationError("count windows always end at the most recent event (b = 1)")

    @property
    def fraction(self) -> float:
        return self.b - self.a

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, d: dict) -> "WindowSpec":
        try:
            return cls(str(d["kind"]), float(d["a"]), float(d["b"]))
        except KeyError as exc:
            raise ValidationError(f"window is missing field {exc}") from None


@dataclass(frozen=True)
class ChannelSpec:
    window: WindowSpec
    measurement: str
    aggregation: str

    def __post_init__(self):
        if self.measurement not in MEASUREMENTS:
            raise ValidationError(f"unknown measurement {self.measurement!r}")
        if self.aggregation not in AGGREGATIONS:
            raise ValidationError(f"unknown aggregation {self.aggregation!r}")

    def to_dict(self) -> dict:
        return {"window": self.window.to_dict(), "measure": self.measurement, "agg": self.aggregation}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelSpec":
        try:
            return cls(WindowSpec.from_dict(d["window"]), str(d["measure"]), str(d["agg"]))
        except KeyError as exc:
            raise ValidationError(f"channel is missing field {exc}") from None

    def label(self) -> str:
        w = self.window
        win = f"T[{w.a:.3g},{w.b:.3g})" if w.kind == "time" else f"N{w.fraction:.3g}"
        return f"{win}/{self.measurement}/{self.aggregation}"


@dataclass(frozen=True)
class RepresentationSpec:
    channels: tuple[ChannelSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.channels:
            raise ValidationError("a representation needs at least one channel")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def to_dict(self) -> dict:
        return {"channels": [c.to_dict() for c in self.channels]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "RepresentationSpec":
        if "channels" not in d:
            raise ValidationError("representation spec needs a 'channels' list")
        return cls(tuple(ChannelSpec.from_dict(c) for c in d["channels"]))

    @classmethod
    def from_json(cls, text: str) -> "RepresentationSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid representation JSON: {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RepresentationSpec":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class FeatureGrid:
    data: np.ndarray  # (H, W, N_c) float64

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValidationError(f"feature grid must be H x W x C, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("feature grid contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def n_channels(self) -> int:
        return self.data.shape[2]

    def save_npy(self, path) -> None:
        np.save(path, self.data)


# ---------------------------------------------------------------------------
# family building blocks


def window_basis() -> list[WindowSpec]:
    """Three equal time thirds, then count windows over the most recent
    1, 1/2, 1/4 and 1/8 of the events."""
    third = 1.0 / 3.0
    return [
        WindowSpec("time", 0.0, third),
        WindowSpec("time", third, 2 * third),
        WindowSpec("time", 2 * third, 1.0),
        WindowSpec("count", 0.0, 1.0),
        WindowSpec("count", 0.5, 1.0),
        WindowSpec("count", 0.75, 1.0),
        WindowSpec("count", 0.875, 1.0),
    ]


def count_window_size(n_events: int, fraction: float) -> int:
    if n_events <= 0:
        return 0
    # guard against 0.1 * 30 = 3.0000000000000004
    k = math.ceil(fraction * n_events - 1e-9)
    return min(n_events, max(1, k))


def apply_window(sample: Sample, w: WindowSpec) -> Sample:
    n = len(sample)
    if n == 0:
        return sample
    if w.kind == "time":
        tn = sample.normalized_time()
        upper = tn <= w.b if w.b >= 1.0 else tn < w.b
        return sample.with_events((tn >= w.a) & upper)
    k = count_window_size(n, w.fraction)
    return sample.with_events(slice(n - k, n))


def measure(sample: Sample, m: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-event ``(x, y, value)``; ``_pos``/``_neg`` variants drop the other polarity."""
    if m not in MEASUREMENTS:
        raise ValidationError(f"unknown measurement {m!r}")
    x, y, p = sample.x, sample.y, sample.p
    if m.endswith("_pos"):
        keep = p == 1
    elif m.endswith("_neg"):
        keep = p == -1
    else:
        keep = slice(None)
    base = m.split("_")[0]
    if base == "t":
        v = sample.normalized_time()
    elif base == "p":
        v = p.astype(np.float64)
    else:
        v = np.ones(len(sample))
    return x[keep], y[keep], v[keep]


def aggregate(x: np.ndarray, y: np.ndarray, values: np.ndarray, a: str, height: int, width: int) -> np.ndarray:
    """Per-pixel max / sum / mean / population variance; empty pixels are 0."""
    if a not in AGGREGATIONS:
        raise ValidationError(f"unknown aggregation {a!r}")
    size = height * width
    flat = np.asarray(y, dtype=np.int64) * width + np.asarray(x, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if a == "sum":
        out = np.bincount(flat, weights=values, minlength=size)
    elif a == "max":
        out = np.full(size, -np.inf)
        np.maximum.at(out, flat, values)
        out[np.isneginf(out)] = 0.0
    else:
        counts = np.bincount(flat, minlength=size)
        mean = np.bincount(flat, weights=values, minlength=size) / np.maximum(counts, 1)
        if a == "mean":
            out = mean
        else:
            dev = values - mean[flat]
            out = np.bincount(flat, weights=dev * dev, minlength=size) / np.maximum(counts, 1)
    return out.reshape(height, width)


def build_channel(sample: Sample, channel: ChannelSpec) -> np.ndarray:
    x, y, v = measure(apply_window(sample, channel.window), channel.measurement)
    return aggregate(x, y, v, channel.aggregation, sample.height, sample.width)


def build_family_representation(sample: Sample, spec: RepresentationSpec) -> FeatureGrid:
    data = np.stack([build_channel(sample, c) for c in spec.channels], axis=-1)
    return FeatureGrid(data)


# ---------------------------------------------------------------------------
# presets

TIME_SURFACE_TAU = 5e-3


def _last_index_per_pixel(flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique pixels and the index of their last (most recent) event."""
    rev = flat[::-1]
    pix, first = np.unique(rev, return_index=True)
    return pix, flat.size - 1 - first


def histogram(sample: Sample) -> FeatureGrid:
    H, W = sample.height, sample.width
    pos = sample.p == 1
    ch = [
        aggregate(sample.x[pos], sample.y[pos], np.ones(int(pos.sum())), "sum", H, W),
        aggregate(sample.x[~pos], sample.y[~pos], np.ones(int((~pos).sum())), "sum", H, W),
    ]
    return FeatureGrid(np.stack(ch, axis=-1))


def voxel_grid(sample: Sample, bins: int) -> FeatureGrid:
    """Polarity summed into ``bins`` temporal bins with bilinear (tent) weights."""
    H, W = sample.height, sample.width
    out = np.zeros((bins, H * W))
    if len(sample):
        pos = sample.normalized_time() * (bins - 1)
        left = np.floor(pos).astype(np.int64)
        frac = pos - left
        flat = sample.y * W + sample.x
        p = sample.p.astype(np.float64)
        for b, w in ((left, 1.0 - frac), (left + 1, frac)):
            ok = (b >= 0) & (b < bins) & (w > 0)
            np.add.at(out, (b[ok], flat[ok]), p[ok] * w[ok])
    return FeatureGrid(out.reshape(bins, H, W).transpose(1, 2, 0))


def mdes(sample: Sample, channels: int, mode: str = "overwrite") -> FeatureGrid:
    """Channel ``c`` covers the most recent ``ceil(N_e / 2**c)`` events.

    ``overwrite`` keeps the most recent polarity per pixel (event stack);
    ``sum`` adds polarities instead.
    """
    if mode not in ("overwrite", "sum"):
        raise ValidationError(f"unknown MDES mode {mode!r}")
    H, W = sample.height, sample.width
    n = len(sample)
    out = np.zeros((channels, H * W))
    flat = sample.y * W + sample.x
    for c in range(channels):
        k = count_window_size(n, 0.5**c)
        if k == 0:
            continue
        f, p = flat[n - k:], sample.p[n - k:].astype(np.float64)
        if mode == "sum":
            out[c] = np.bincount(f, weights=p, minlength=H * W)
        else:
            pix, last = _last_index_per_pixel(f)
            out[c, pix] = p[last]
    return FeatureGrid(out.reshape(channels, H, W).transpose(1, 2, 0))


def time_surface(sample: Sample, channels: int = 12, tau: float = TIME_SURFACE_TAU) -> FeatureGrid:
    """exp(-(t_ref - t_last) / tau) at ``channels/2`` reference instants
    ``t_start + k * dT / (channels/2 - 1)``; positive polarity first."""
    if channels % 2 or channels < 2:
        raise ValidationError("time surface needs an even number of channels")
    H, W = sample.height, sample.width
    n_ref = channels // 2
    refs = (
        [sample.t_end] if n_ref == 1
        else [sample.t_start + k * sample.duration / (n_ref - 1) for k in range(n_ref)]
    )
    out = np.zeros((channels, H * W))
    flat = sample.y * W + sample.x
    for pi, pol in enumerate((1, -1)):
        sel = sample.p == pol
        f, t = flat[sel], sample.t[sel]
        for k, tr in enumerate(refs):
            upto = int(np.searchsorted(t, tr, side="right"))
            if upto == 0:
                continue
            pix, last = _last_index_per_pixel(f[:upto])
            out[pi * n_ref + k, pix] = np.exp(-(tr - t[last]) / tau)
    return FeatureGrid(out.reshape(channels, H, W).transpose(1, 2, 0))


def tore(sample: Sample, channels: int = 12) -> FeatureGrid:
    """Per-pixel, per-polarity queues of the ``channels/2`` most recent event
    ages ``(t_end - t) / dT``; short queues are padded with 1.0 at pixels that
    saw any event, all other pixels stay 0."""
    if channels % 2 or channels < 2:
        raise ValidationError("TORE needs an even number of channels")
    H, W = sample.height, sample.width
    depth = channels // 2
    out = np.zeros((channels, H * W))
    flat = sample.y * W + sample.x
    if len(sample):
        active = np.unique(flat)
        out[:, active] = 1.0
    age = (sample.t_end - sample.t) / sample.duration
    for pi, pol in enumerate((1, -1)):
        sel = np.flatnonzero(sample.p == pol)
        if sel.size == 0:
            continue
        f = flat[sel]
        # group by pixel, newest first inside each group
        order = np.lexsort((-np.arange(sel.size), f))
        f_sorted = f[order]
        starts = np.r_[0, np.flatnonzero(np.diff(f_sorted)) + 1]
        rank = np.arange(f_sorted.size) - np.repeat(starts, np.diff(np.r_[starts, f_sorted.size]))
        keep = rank < depth
        out[pi * depth + rank[keep], f_sorted[keep]] = age[sel[order[keep]]]
    return FeatureGrid(out.reshape(channels, H, W).transpose(1, 2, 0))


PRESET_NAMES = ("hist2", "voxel12", "mdes12", "timesurface12", "tore12")
_PRESET_RE = re.compile(r"^(hist2|voxel(\d+)|mdes(\d+)|timesurface(\d+)|tore(\d+))$")


@dataclass(frozen=True)
class PresetBuilder:
    """Builder for a preset name; ``voxelB`` / ``mdesB`` accept any channel count."""

    name: str
    mdes_mode: str = "overwrite"

    def __post_init__(self):
        if _PRESET_RE.match(self.name) is None:
            raise ValidationError(f"unknown representation {self.name!r}")
        if self.name != "hist2" and int(re.sub(r"[a-z]+", "", self.name)) < 1:
            raise ValidationError(f"{self.name}: channel count must be positive")

    def __call__(self, sample: Sample) -> FeatureGrid:
        if self.name == "hist2":
            return histogram(sample)
        family, num = re.match(r"([a-z]+)(\d+)", self.name).groups()
        n = int(num)
        if family == "voxel":
            return voxel_grid(sample, n)
        if family == "mdes":
            return mdes(sample, n, self.mdes_mode)
        if family == "timesurface":
            return time_surface(sample, n)
        return tore(sample, n)


def preset_builder(name: str, mdes_mode: str = "overwrite") -> PresetBuilder:
    return PresetBuilder(name, mdes_mode)


def build_preset(sample: Sample, name: str) -> FeatureGrid:
    return preset_builder(name)(sample)


def gaussian_blur(grid: FeatureGrid, sigma: float) -> FeatureGrid:
    """Per-channel Gaussian blur, radius ceil(3 sigma), reflected borders."""
    if sigma < 0:
        raise ValidationError("blur sigma must be non-negative")
    if sigma == 0:
        return grid
    radius = int(math.ceil(3.0 * sigma))
    out = ndimage.gaussian_filter(
        grid.data, sigma=(sigma, sigma, 0), mode="reflect", radius=(radius, radius, 0)
    )
    return FeatureGrid(out)


def resolve_builder(repr_ref: str) -> tuple[str, Callable[[Sample], FeatureGrid]]:
    """Turn ``--repr`` (preset name or path to a spec JSON) into a builder."""
    if _PRESET_RE.match(repr_ref):
        return repr_ref, preset_builder(repr_ref)
    path = Path(repr_ref)
    if not path.is_file():
        raise ValidationError(f"{repr_ref!r} is neither a preset name nor a spec file")
    spec = RepresentationSpec.load(path)
    return path.name, FamilyBuilder(spec)


@dataclass(frozen=True)
class FamilyBuilder:
    """Picklable builder for a family spec (process pools need it)."""

    spec: RepresentationSpec

    def __call__(self, sample: Sample) -> FeatureGrid:
        return build_family_representation(sample, self.spec)


@dataclass(frozen=True)
class BlurredBuilder:
    inner: Callable[[Sample], FeatureGrid]
    sigma: float

    def __call__(self, sample: Sample) -> FeatureGrid:
        return gaussian_blur(self.inner(sample), self.sigma)


def stack_channels(images: Sequence[np.ndarray], n_channels: int | None = None) -> FeatureGrid:
    """Stack channel images, zero-padding up to ``n_channels``."""
    H, W = images[0].shape
    n = n_channels or len(images)
    data = np.zeros((H, W, n))
    for c, img in enumerate(images):
        data[:, :, c] = img
    return FeatureGrid(data)

"""Sample corpora: one synthetic stream cut into windows, stored as a directory.

Layout::

    <dir>/corpus.json   scene config, slicing mode, window list
    <dir>/events.evb    the full event stream
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .events import EventStream, Sample, slice_count, slice_window
from .io import load_events, save_events
from .synthetic import SyntheticSceneConfig, generate_synthetic_scene

CORPUS_INDEX = "corpus.json"
CORPUS_EVENTS = "events.evb"
EVENT_FORMATS = ("evb", "csv")
SLICINGS = ("time", "count")

DEMO_SCENE = SyntheticSceneConfig(
    width=64, height=48, duration=1.0, pattern="two-speed-bars",
    speed=32.0, contrast_threshold=1.0, noise_rate=0.2, seed=0,
)
DEMO_SAMPLES = 20


@dataclass(frozen=True)
class Corpus:
    scene: SyntheticSceneConfig
    slicing: str
    windows: tuple[tuple[float, float], ...]   # time slicing: (t0, t1); count slicing: (start, count)
    stream: EventStream

    def __len__(self) -> int:
        return len(self.windows)

    def samples(self) -> list[Sample]:
        if self.slicing == "time":
            return [slice_window(self.stream, t0, t1) for t0, t1 in self.windows]
        return [slice_count(self.stream, int(s), int(c)) for s, c in self.windows]

    def index_dict(self, events: str = CORPUS_EVENTS) -> dict:
        return {
            "format": 1,
            "scene": self.scene.to_dict(),
            "slicing": self.slicing,
            "events": events,
            "n_events": len(self.stream),
            "windows": [list(w) for w in self.windows],
        }

    def save(self, directory, format: str = "evb") -> Path:
        if format not in EVENT_FORMATS:
            raise ValidationError(f"format must be one of {EVENT_FORMATS}")
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        events = f"events.{format}"
        save_events(self.stream, d / events, format)
        (d / CORPUS_INDEX).write_text(json.dumps(self.index_dict(events), indent=2, sort_keys=True) + "\n")
        return d


def make_corpus(scene: SyntheticSceneConfig, n_samples: int, slicing: str = "time") -> Corpus:
    """Generate ``scene`` and cut it into ``n_samples`` consecutive windows of
    equal duration (``time``) or equal event count (``count``)."""
    if n_samples < 1:
        raise ValidationError("a corpus needs at least one sample")
    if slicing not in SLICINGS:
        raise ValidationError(f"slicing must be one of {SLICINGS}")
    stream = generate_synthetic_scene(scene)
    if slicing == "time":
        edges = np.linspace(0.0, scene.duration, n_samples + 1)
        windows = tuple((float(a), float(b)) for a, b in zip(edges[:-1], edges[1:]))
    else:
        per = len(stream) // n_samples
        if per < 1:
            raise ValidationError(f"{len(stream)} events cannot fill {n_samples} count windows")
        windows = tuple((float(i * per), float(per)) for i in range(n_samples))
    return Corpus(scene, slicing, windows, stream)


def demo_corpus(n_samples: int = DEMO_SAMPLES, **overrides) -> Corpus:
    """The bundled two-speed-bars recipe; longer corpora keep the window length."""
    duration = DEMO_SCENE.duration * n_samples / DEMO_SAMPLES
    scene = SyntheticSceneConfig(**{**DEMO_SCENE.to_dict(), "duration": duration, **overrides})
    return make_corpus(scene, n_samples)


def load_corpus(directory) -> Corpus:
    d = Path(directory)
    index_path = d / CORPUS_INDEX
    if not index_path.is_file():
        raise ValidationError(f"no corpus index at {index_path}")
    try:
        idx = json.loads(index_path.read_text())
        scene = SyntheticSceneConfig(**idx["scene"])
        slicing = idx["slicing"]
        windows = tuple((float(a), float(b)) for a, b in idx["windows"])
        events_name = idx.get("events", CORPUS_EVENTS)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed corpus index {index_path}: {exc}") from exc
    if slicing not in SLICINGS or not windows:
        raise ValidationError(f"malformed corpus index {index_path}")
    stream = load_events(d / events_name)
    return Corpus(scene, slicing, windows, stream)

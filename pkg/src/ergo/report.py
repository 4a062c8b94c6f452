"""Report files and run manifests.

Reports are written as canonical JSON (sorted keys, fixed indentation) and
carry no timestamps, so identical runs give byte-identical files.  Timing and
provenance live in a ``manifest.json`` next to them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(canonical_json(obj), encoding="utf-8")
    return p


def config_hash(inputs: dict) -> str:
    """SHA-256 over the canonical JSON of every input that shapes the output."""
    return hashlib.sha256(json.dumps(inputs, sort_keys=True).encode()).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    inputs: dict
    seeds: dict
    outputs: list[str] = field(default_factory=list)
    tool_version: str = __version__
    started: str = field(default_factory=_now)
    finished: str | None = None

    @property
    def config_hash(self) -> str:
        return config_hash(self.inputs)

    def finish(self) -> None:
        self.finished = _now()

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "inputs": self.inputs,
            "seeds": self.seeds,
            "outputs": sorted(self.outputs),
            "tool_version": self.tool_version,
            "started": self.started,
            "finished": self.finished,
        }

    def save(self, directory) -> Path:
        return write_json(Path(directory) / "manifest.json", self.to_dict())

"""Event file formats.

CSV::

    # width=<W> height=<H>
    x,y,t,p            (optional column header)
    0,0,0.001000000000,1

EVB (little-endian)::

    b"EVB1" | u32 width | u32 height | u64 count | count * {u16 x, u16 y, f64 t, i8 p, 3 pad}
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .events import EventStream

EVB_MAGIC = b"EVB1"
EVB_HEADER = struct.Struct("<4sIIQ")
EVB_RECORD = np.dtype(
    {
        "names": ["x", "y", "t", "p"],
        "formats": ["<u2", "<u2", "<f8", "i1"],
        "offsets": [0, 2, 4, 12],
        "itemsize": 16,
    }
)
FORMATS = ("csv", "evb")

_HEADER_RE = re.compile(r"width\s*=\s*(\d+)\s*[, ]\s*height\s*=\s*(\d+)")


def _format_of(path: Path, fmt: str | None) -> str:
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt not in FORMATS:
        raise ValidationError(f"unknown event format {fmt!r}; expected one of {FORMATS}")
    return fmt


def load_events(path, format: str | None = None) -> EventStream:
    path = Path(path)
    fmt = _format_of(path, format)
    if fmt == "csv":
        return _load_csv(path)
    return _load_evb(path)


def save_events(stream: EventStream, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = _format_of(path, format)
    if fmt == "csv":
        _save_csv(stream, path)
    else:
        _save_evb(stream, path)


def _load_csv(path: Path) -> EventStream:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: line 1: missing '# width=<W> height=<H>' header")
    m = _HEADER_RE.search(lines[0])
    if m is None:
        raise ParseError(f"{path}: line 1: malformed header {lines[0]!r}")
    width, height = int(m.group(1)), int(m.group(2))
    xs, ys, ts, ps = [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.replace(" ", "") == "x,y,t,p":
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(f"{path}: line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            xs.append(int(parts[0]))
            ys.append(int(parts[1]))
            ts.append(float(parts[2]))
            ps.append(int(parts[3]))
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
    return EventStream.from_arrays(xs, ys, ts, ps, width, height)


def _save_csv(stream: EventStream, path: Path) -> None:
    rows = [f"# width={stream.width} height={stream.height}", "x,y,t,p"]
    rows.extend(
        f"{x},{y},{t:.12f},{p}"
        for x, y, t, p in zip(stream.x.tolist(), stream.y.tolist(), stream.t.tolist(), stream.p.tolist())
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")


def _load_evb(path: Path) -> EventStream:
    raw = path.read_bytes()
    if len(raw) < EVB_HEADER.size:
        raise ParseError(f"{path}: offset 0: truncated header ({len(raw)} bytes)")
    magic, width, height, count = EVB_HEADER.unpack_from(raw, 0)
    if magic != EVB_MAGIC:
        raise ParseError(f"{path}: offset 0: bad magic {magic!r}")
    expected = EVB_HEADER.size + count * EVB_RECORD.itemsize
    if len(raw) != expected:
        raise ParseError(
            f"{path}: offset {min(len(raw), expected)}: expected {expected} bytes for "
            f"{count} records, found {len(raw)}"
        )
    rec = np.frombuffer(raw, dtype=EVB_RECORD, count=count, offset=EVB_HEADER.size)
    return EventStream.from_arrays(rec["x"], rec["y"], rec["t"], rec["p"], width, height)


def _save_evb(stream: EventStream, path: Path) -> None:
    if stream.width > 0xFFFF or stream.height > 0xFFFF:
        raise ValidationError("evb stores pixel coordinates as u16")
    rec = np.zeros(len(stream), dtype=EVB_RECORD)
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["t"] = stream.t
    rec["p"] = stream.p
    with open(path, "wb") as fh:
        fh.write(EVB_HEADER.pack(EVB_MAGIC, stream.width, stream.height, len(stream)))
        fh.write(rec.tobytes())

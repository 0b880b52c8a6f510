"""Image files, iteration traces and trial summaries.

Images are 8-bit grayscale: binary PGM (``P5``, maxval 255) or PNG. Reading
maps ``[0, 255]`` to ``[0, 1]`` by division; writing rounds half up and clamps.

Traces and summaries are CSV with ``#``-prefixed header lines. Floats are
written with ``repr`` so that reading them back is exact; non-finite values
appear as ``nan`` and ``inf``.
"""

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from PIL import Image

from .errors import FormatError
from .solver import IterationRecord

__all__ = [
    "image_read",
    "image_write",
    "quantize",
    "TraceFile",
    "trace_write",
    "trace_read",
    "SUMMARY_COLUMNS",
    "summary_write",
    "summary_read",
]

TRACE_COLUMNS = ("iter", "phi", "psi", "tol", "snr", "time_ms")
SUMMARY_COLUMNS = ("trial", "seed", "rel_x", "rel_y", "rank", "nnz", "obj", "iters", "time_s")


def quantize(x):
    """Bytes ``floor(255 v + 0.5)`` clamped to ``[0, 255]``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("image contains non-finite values")
    return np.clip(np.floor(x * 255.0 + 0.5), 0, 255).astype(np.uint8)


def _read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    # magic, width, height, maxval; comments run to end of line
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError(f"{path}: truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval} (only 255)")
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: invalid size {width}x{height}")
    pos += 1  # single whitespace byte before the raster
    raster = data[pos:pos + width * height]
    if len(raster) != width * height:
        raise FormatError(f"{path}: raster has {len(raster)} bytes, expected {width * height}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def image_read(path):
    """Load an 8-bit grayscale PGM or PNG as floats in ``[0, 1]``."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        raw = _read_pgm(path)
    elif ext == ".png":
        try:
            with Image.open(path) as im:
                if im.mode != "L":
                    raise FormatError(f"{path}: expected 8-bit grayscale PNG, got mode {im.mode}")
                raw = np.asarray(im, dtype=np.uint8)
        except OSError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    else:
        raise FormatError(f"{path}: unsupported image extension {ext!r}")
    return raw.astype(float) / 255.0


def image_write(path, x):
    """Write a ``[0, 1]`` image as 8-bit PGM or PNG (chosen by extension)."""
    path = os.fspath(path)
    q = quantize(x)
    if q.ndim != 2:
        raise ValueError("expected a two-dimensional image")
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        h, w = q.shape
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (w, h))
            fh.write(q.tobytes())
    elif ext == ".png":
        Image.fromarray(q).save(path)
    else:
        raise FormatError(f"{path}: unsupported image extension {ext!r}")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


@dataclass
class TraceFile:
    """Header key/value pairs plus one record per iteration."""

    header: Dict[str, str] = field(default_factory=dict)
    records: List[IterationRecord] = field(default_factory=list)


def trace_write(path, trace):
    path = os.fspath(path)
    try:
        with open(path, "w", newline="") as fh:
            for key, value in trace.header.items():
                fh.write(f"# {key}: {value}\n")
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for r in trace.records:
                fh.write(",".join([str(int(r.k)), _fmt(r.phi), _fmt(r.psi), _fmt(r.tol),
                                   _fmt(r.snr), _fmt(r.time_ms)]) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write trace {path}: {exc}") from exc


def _split_header(lines, path):
    header = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:].strip()
        key, sep, value = body.partition(":")
        if not sep:
            raise FormatError(f"{path}: malformed header line {lines[i]!r}")
        header[key.strip()] = value.strip()
        i += 1
    return header, lines[i:]


def trace_read(path):
    path = os.fspath(path)
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    header, rest = _split_header(lines, path)
    if not rest or tuple(rest[0].split(",")) != TRACE_COLUMNS:
        raise FormatError(f"{path}: missing or unexpected column line")
    records = []
    for row in csv.reader(rest[1:]):
        if len(row) != len(TRACE_COLUMNS):
            raise FormatError(f"{path}: row has {len(row)} fields")
        k, phi, psi, tol, snr_, t = row
        records.append(IterationRecord(int(k), float(phi), float(psi), float(tol),
                                       float(t), float(snr_)))
    return TraceFile(header, records)


def summary_write(path, rows, header=None):
    """One row per trial (dicts keyed by :data:`SUMMARY_COLUMNS`) and a final ``avg`` row."""
    path = os.fspath(path)
    with open(path, "w", newline="") as fh:
        for key, value in (header or {}).items():
            fh.write(f"# {key}: {value}\n")
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in SUMMARY_COLUMNS) + "\n")
        if rows:
            avg = ["avg", ""] + [_fmt(float(np.mean([row[c] for row in rows])))
                                 for c in SUMMARY_COLUMNS[2:]]
            fh.write(",".join(avg) + "\n")


def summary_read(path):
    """Returns ``(header, rows, avg)``; ``avg`` is ``None`` for an empty summary."""
    path = os.fspath(path)
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    header, rest = _split_header(lines, path)
    if not rest or tuple(rest[0].split(",")) != SUMMARY_COLUMNS:
        raise FormatError(f"{path}: missing or unexpected column line")
    rows, avg = [], None
    for fields_ in csv.reader(rest[1:]):
        if fields_[0] == "avg":
            avg = {c: float(v) for c, v in zip(SUMMARY_COLUMNS[2:], fields_[2:])}
            continue
        row = {}
        for c, v in zip(SUMMARY_COLUMNS, fields_):
            row[c] = int(v) if c in ("trial", "seed", "rank", "nnz", "iters") else float(v)
        rows.append(row)
    return header, rows, avg

"""Record streams and field snapshots.

Records travel as newline-delimited JSON objects whose keys are exactly
the diagnostic field names, in order.  Snapshot payloads are raw
little-endian float64 in C (axis-major) order, stored next to a JSON
sidecar carrying grid metadata, the simulation time, the variable name,
and a SHA-256 checksum of the payload bytes.  Both round-trips are
bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .diagnostics import FIELD_NAMES, DiagnosticsRecord
from .errors import ChecksumMismatch, SchemaMismatch
from .grid import build_grid, scalar_field

_SNAPSHOT_FORMAT = "scns-snapshot-1"


def _require_finite(name, value):
    if value is None:
        return None
    value = float(value)
    if not math.isfinite(value):
        raise FloatingPointError(
            f"refusing to serialize non-finite value {value!r} for {name}")
    return value


def write_records(stream, records):
    """Write records as JSON lines with the fixed field order."""
    for rec in records:
        payload = {name: _require_finite(name, value)
                   for name, value in zip(FIELD_NAMES, rec.as_tuple())}
        stream.write(json.dumps(payload, allow_nan=False))
        stream.write("\n")


def read_records(stream):
    """Inverse of write_records; field mismatches raise SchemaMismatch."""
    out = []
    for line_no, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        if tuple(obj.keys()) != FIELD_NAMES:
            raise SchemaMismatch(
                f"record on line {line_no} has fields {tuple(obj.keys())}, "
                f"expected {FIELD_NAMES}")
        out.append(DiagnosticsRecord(**obj))
    return out


@dataclass(frozen=True)
class Snapshot:
    field: object     # ScalarField on the reconstructed grid
    time: float
    variable: str


def _split_base(path):
    path = str(path)
    if path.endswith(".bin") or path.endswith(".json"):
        path = path.rsplit(".", 1)[0]
    return path


def write_snapshot(path, field, time, variable):
    """Write `<path>.bin` (payload) and `<path>.json` (sidecar)."""
    base = _split_base(path)
    values = np.ascontiguousarray(field.values, dtype="<f8")
    if not np.all(np.isfinite(values)):
        raise FloatingPointError(
            f"refusing to serialize non-finite snapshot for {variable!r}")
    payload = values.tobytes()
    grid = field.grid
    sidecar = {
        "format": _SNAPSHOT_FORMAT,
        "dim": grid.dim,
        "extents": [float(e) for e in grid.extents],
        "resolution": [int(r) for r in grid.resolution],
        "bc": {"n": grid.bc_n, "c": grid.bc_c, "u": grid.bc_u},
        "time": _require_finite("time", time),
        "variable": str(variable),
        "dtype": "<f8",
        "order": "C",
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    with open(base + ".bin", "wb") as sink:
        sink.write(payload)
    with open(base + ".json", "w", encoding="utf-8") as sink:
        json.dump(sidecar, sink, allow_nan=False, indent=1)
        sink.write("\n")
    return base


_SIDECAR_KEYS = ("format", "dim", "extents", "resolution", "bc", "time",
                 "variable", "dtype", "order", "sha256")


def read_snapshot(path):
    """Read a snapshot pair back; checksum first, then schema."""
    base = _split_base(path)
    with open(base + ".json", "r", encoding="utf-8") as source:
        sidecar = json.load(source)
    missing = [k for k in _SIDECAR_KEYS if k not in sidecar]
    if missing or sidecar.get("format") != _SNAPSHOT_FORMAT:
        raise SchemaMismatch(
            f"sidecar {base + '.json'} is not a {_SNAPSHOT_FORMAT} "
            f"descriptor (missing {missing})")
    with open(base + ".bin", "rb") as source:
        payload = source.read()
    digest = hashlib.sha256(payload).hexdigest()
    if digest != sidecar["sha256"]:
        raise ChecksumMismatch(
            f"{base + '.bin'}: payload digest {digest[:12]}... does not "
            f"match sidecar {sidecar['sha256'][:12]}...")
    if sidecar["dtype"] != "<f8" or sidecar["order"] != "C":
        raise SchemaMismatch(
            f"unsupported payload layout "
            f"({sidecar['dtype']}, {sidecar['order']})")
    resolution = tuple(int(r) for r in sidecar["resolution"])
    expected = int(np.prod(resolution)) * 8
    if len(payload) != expected:
        raise SchemaMismatch(
            f"payload holds {len(payload)} bytes, sidecar promises "
            f"{expected}")
    bc = sidecar["bc"]
    grid = build_grid(int(sidecar["dim"]),
                      tuple(float(e) for e in sidecar["extents"]),
                      resolution,
                      {"n": bc["n"], "c": bc["c"], "u": bc["u"]})
    values = np.frombuffer(payload, dtype="<f8").reshape(resolution).copy()
    return Snapshot(field=scalar_field(grid, values),
                    time=float(sidecar["time"]),
                    variable=sidecar["variable"])


def write_record_file(path, records):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as sink:
        write_records(sink, records)


def read_record_file(path):
    with open(path, "r", encoding="utf-8") as source:
        return read_records(source)

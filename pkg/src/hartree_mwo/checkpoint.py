"""Flat binary trajectory checkpoints with a JSON sidecar.

Layout (all little-endian):
    8 bytes   magic b"HMWOTRJ1"
    uint32    header length H
    H bytes   UTF-8 JSON header (grid, config, time count, body sha256)
    float64   times[K]
    complex128 datum[N^n]
    complex128 snapshots[K, N^n]
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .evolution import Trajectory
from .spectral import Field, GridSpec

MAGIC = b"HMWOTRJ1"


def _body(traj: Trajectory) -> bytes:
    parts = [
        np.ascontiguousarray(traj.times, dtype="<f8").tobytes(),
        np.ascontiguousarray(traj.datum.values, dtype="<c16").tobytes(),
        np.ascontiguousarray(traj.values, dtype="<c16").tobytes(),
    ]
    return b"".join(parts)


def write_checkpoint(traj: Trajectory, path, config=None, extra: dict | None = None) -> Path:
    path = Path(path)
    body = _body(traj)
    header = {
        "format": "HMWOTRJ1",
        "grid": traj.grid.to_dict(),
        "n_times": len(traj),
        "dtype": "<c16",
        "body_sha256": hashlib.sha256(body).hexdigest(),
    }
    if config is not None:
        header["config"] = config.to_dict()
    hb = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(body)
    sidecar = dict(header)
    sidecar.update(extra or {})
    sidecar["t_first"] = float(traj.times[0])
    sidecar["t_last"] = float(traj.times[-1])
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return path


def read_checkpoint(path) -> tuple:
    """Return (Trajectory, header dict); verifies magic and body hash."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ConfigurationError("not a trajectory checkpoint (bad magic)")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen].decode())
    body = raw[12 + hlen:]
    if hashlib.sha256(body).hexdigest() != header["body_sha256"]:
        raise ConfigurationError("checkpoint body hash mismatch")
    grid = GridSpec(**header["grid"])
    K = header["n_times"]
    size = grid.size
    times = np.frombuffer(body, dtype="<f8", count=K)
    off = 8 * K
    datum = np.frombuffer(body, dtype="<c16", count=size, offset=off).reshape(grid.shape)
    off += 16 * size
    snaps = np.frombuffer(body, dtype="<c16", count=K * size, offset=off).reshape((K,) + grid.shape)
    traj = Trajectory(grid, times.copy(), snaps.copy(), Field(grid, datum))
    return traj, header

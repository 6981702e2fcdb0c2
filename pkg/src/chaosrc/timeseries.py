"""The TimeSeries container and its CSV / binary (``CCTS``) file formats.

A series stores a ``Q x T`` matrix: one row per state dimension, one column
per sample, equally spaced by ``dt`` seconds starting at ``origin_time``.

CCTS layout (little-endian)::

    b"CCTS" | version u32 | Q u32 | T u64 | dt f64 | Q*T f64, row-major

The binary format has no slot for ``origin_time``; files load with 0.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatchError, FormatError

CCTS_MAGIC = b"CCTS"
CCTS_VERSION = 1
_CCTS_HEADER = struct.Struct("<4sIIQd")


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A ``Q x T`` sequence of states sampled every ``dt`` seconds."""

    data: np.ndarray
    dt: float
    origin_time: float = 0.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ConfigError(f"TimeSeries data must be 2-D (Q x T), got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ConfigError(f"TimeSeries needs Q >= 1 and T >= 1, got {data.shape}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(data)):
            raise ConfigError("TimeSeries contains non-finite values")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "origin_time", float(self.origin_time))

    @property
    def q(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.origin_time + self.dt * np.arange(self.length)

    def slice(self, start: int, stop: int | None = None) -> "TimeSeries":
        """Columns ``start:stop`` as a new series with a shifted origin."""
        start = range(self.length)[start] if start < 0 else start
        return TimeSeries(self.data[:, start:stop], self.dt, self.origin_time + start * self.dt)

    def __len__(self):
        return self.length

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.dt == other.dt
            and self.origin_time == other.origin_time
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


def check_compatible(a: TimeSeries, b: TimeSeries, *, same_length=True):
    if a.q != b.q:
        raise DimensionMismatchError(f"state dimensions differ: {a.q} vs {b.q}")
    if a.dt != b.dt:
        raise DimensionMismatchError(f"time steps differ: {a.dt} vs {b.dt}")
    if same_length and a.length != b.length:
        raise DimensionMismatchError(f"lengths differ: {a.length} vs {b.length}")


# --- CSV -------------------------------------------------------------------

def write_csv(series: TimeSeries, path) -> None:
    """Write ``t,x1..xQ`` rows, one per sample, at full double precision."""
    header = ",".join(["t"] + [f"x{i + 1}" for i in range(series.q)])
    table = np.column_stack([series.times, series.data.T])
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in table:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _recover_dt(t: np.ndarray) -> float:
    """Find the ``dt`` whose ``t0 + dt*n`` grid reproduces ``t`` exactly, if any."""
    n = np.arange(len(t))
    estimates = [(t[-1] - t[0]) / (len(t) - 1), t[1] - t[0]]
    for est in estimates:
        cand = est
        for _ in range(8):
            if np.array_equal(t[0] + cand * n, t):
                return float(cand)
            cand = np.nextafter(cand, np.inf)
        cand = est
        for _ in range(8):
            cand = np.nextafter(cand, -np.inf)
            if np.array_equal(t[0] + cand * n, t):
                return float(cand)
    return float(estimates[0])


def read_csv(path, dt: float | None = None) -> TimeSeries:
    """Read a ``t,x1..xQ`` CSV. ``dt`` is inferred from the time column unless given."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "t":
            raise FormatError(f"{path}: CSV header must start with 't'")
        rows = [line for line in fh if line.strip()]
    if not rows:
        raise FormatError(f"{path}: CSV holds no samples")
    table = np.loadtxt(io.StringIO("".join(rows)), delimiter=",", ndmin=2)
    if table.shape[1] != len(header):
        raise FormatError(f"{path}: {table.shape[1]} columns but header names {len(header)}")
    t = table[:, 0]
    if dt is None:
        if len(t) < 2:
            raise FormatError(f"{path}: cannot infer dt from a single sample")
        dt = _recover_dt(t)
    return TimeSeries(table[:, 1:].T.copy(), dt, t[0])


# --- CCTS binary ------------------------------------------------------------

def to_ccts_bytes(series: TimeSeries) -> bytes:
    header = _CCTS_HEADER.pack(CCTS_MAGIC, CCTS_VERSION, series.q, series.length, series.dt)
    return header + np.ascontiguousarray(series.data, dtype="<f8").tobytes()


def from_ccts_bytes(blob: bytes) -> TimeSeries:
    if len(blob) < _CCTS_HEADER.size:
        raise FormatError("truncated CCTS header")
    magic, version, q, t, dt = _CCTS_HEADER.unpack_from(blob)
    if magic != CCTS_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CCTS_MAGIC!r}")
    if version != CCTS_VERSION:
        raise FormatError(f"unsupported CCTS version {version}")
    payload = blob[_CCTS_HEADER.size:]
    if len(payload) != 8 * q * t:
        raise FormatError(f"CCTS payload has {len(payload)} bytes, expected {8 * q * t}")
    data = np.frombuffer(payload, dtype="<f8").reshape(q, t).astype(float)
    return TimeSeries(data, dt)


def write_ccts(series: TimeSeries, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_ccts_bytes(series))


def read_ccts(path) -> TimeSeries:
    with open(path, "rb") as fh:
        return from_ccts_bytes(fh.read())


def save(series: TimeSeries, path) -> None:
    """Write by extension: ``.csv`` for text, anything else as CCTS."""
    if os.fspath(path).lower().endswith(".csv"):
        write_csv(series, path)
    else:
        write_ccts(series, path)


def load(path) -> TimeSeries:
    if os.fspath(path).lower().endswith(".csv"):
        return read_csv(path)
    return read_ccts(path)

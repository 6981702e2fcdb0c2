"""Prediction-quality measures: normalized error, valid time, difference fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynsys import LyapunovEstimate
from .errors import ConfigError, DimensionMismatchError
from .timeseries import TimeSeries, check_compatible

DEFAULT_THETA = 0.3


@dataclass(frozen=True)
class ValidTimeReport:
    threshold: float
    valid_steps: int
    valid_seconds: float
    valid_lyapunov_times: float | None
    error_curve: np.ndarray

    def to_dict(self, with_curve: bool = False) -> dict:
        doc = {
            "threshold": self.threshold,
            "valid_steps": self.valid_steps,
            "valid_seconds": self.valid_seconds,
            "valid_lyapunov_times": self.valid_lyapunov_times,
        }
        if with_curve:
            doc["error_curve"] = [float(v) for v in self.error_curve]
        return doc


def _as_data(x) -> np.ndarray:
    return x.data if isinstance(x, TimeSeries) else np.atleast_2d(np.asarray(x, dtype=float))


def normalized_error(truth, pred) -> np.ndarray:
    """``||pred(t) - truth(t)|| / sqrt(<||truth||^2>)`` over the compared span.

    ``pred`` may be shorter than ``truth``; only its span is compared and the
    normalization is averaged over that same span.
    """
    if isinstance(truth, TimeSeries) and isinstance(pred, TimeSeries):
        check_compatible(truth, pred, same_length=False)
    t, p = _as_data(truth), _as_data(pred)
    if t.shape[0] != p.shape[0]:
        raise DimensionMismatchError(f"state dimensions differ: {t.shape[0]} vs {p.shape[0]}")
    if p.shape[1] > t.shape[1]:
        raise DimensionMismatchError(f"prediction ({p.shape[1]}) longer than truth ({t.shape[1]})")
    t = t[:, :p.shape[1]]
    scale = np.sqrt(np.mean(np.sum(t * t, axis=0)))
    err = np.linalg.norm(p - t, axis=0)
    if scale == 0:
        return np.where(err == 0, 0.0, np.inf)
    return err / scale


def first_crossing(curve: np.ndarray, theta: float) -> int:
    """Index of the first entry ``>= theta``; ``len(curve)`` if none."""
    hits = np.flatnonzero(np.asarray(curve) >= theta)
    return int(hits[0]) if hits.size else len(curve)


def valid_time(truth, pred, theta: float = DEFAULT_THETA, lyap: LyapunovEstimate | None = None,
               dt: float | None = None) -> ValidTimeReport:
    """Steps until the normalized error first reaches ``theta``.

    A prediction truncated by a blow-up counts as crossing right after its last
    produced sample when the truth extends further.
    """
    if not theta > 0:
        raise ConfigError(f"theta must be positive, got {theta}")
    curve = normalized_error(truth, pred)
    steps = first_crossing(curve, theta)
    if dt is None:
        dt = pred.dt if isinstance(pred, TimeSeries) else (truth.dt if isinstance(truth, TimeSeries) else 1.0)
    seconds = steps * dt
    lyap_times = seconds * lyap.lambda_max if lyap is not None else None
    return ValidTimeReport(float(theta), steps, seconds, lyap_times, curve)


def difference_field(truth: TimeSeries, pred: TimeSeries) -> TimeSeries:
    """Elementwise ``truth - pred`` (same shape), e.g. for heatmap export."""
    check_compatible(truth, pred)
    return TimeSeries(truth.data - pred.data, truth.dt, truth.origin_time)


def write_error_curve(report: ValidTimeReport, dt: float, path) -> None:
    """CSV with columns ``step,t,error``."""
    with open(path, "w") as fh:
        fh.write("step,t,error\n")
        for n, e in enumerate(report.error_curve):
            fh.write(f"{n},{repr(float((n + 1) * dt))},{repr(float(e))}\n")

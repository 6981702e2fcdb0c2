"""Linear readouts: ridge training and closed-loop (autonomous) prediction.

The readout maps a feature vector ``s`` to an output ``y = W_out @ s`` and is
fit by ridge regression, ``W_out = Y S^T (S S^T + lambda I)^-1``, solved
through a Cholesky factorization of the regularized Gram matrix.

Features come either from a delay-window :class:`~chaosrc.features.FeatureMap`
(NG-RC / HENG-RC) or from the node states of a leaky echo-state reservoir,
whose update (row-vector convention, as stored in ``Reservoir.a``) is::

    s(t+1) = (1 - leak) * s(t) + leak * tanh(s(t) @ A + W_in @ u(t) + b)
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.linalg.blas import dsymm, dsyrk
from scipy.sparse.linalg import eigs

from .dynsys import BLOWUP_GUARD
from .errors import (ConfigError, DimensionMismatchError, SeriesTooShortError,
                     SingularSystemError)
from .features import FeatureMap, assemble, iter_feature_chunks, n_samples
from .timeseries import TimeSeries

log = logging.getLogger(__name__)

TARGET_MODES = ("next_state", "delta")

# Above this many bytes of feature matrix, training accumulates the Gram
# matrix chunk by chunk instead of materializing all features.
MATERIALIZE_LIMIT = 256 * 2 ** 20


# --- ridge regression --------------------------------------------------------

class GramAccumulator:
    """Running ``S S^T`` (upper triangle) and ``Y S^T`` over column chunks."""

    def __init__(self, n_features: int, n_outputs: int):
        self.gram = np.zeros((n_features, n_features), order="F")
        self.cross = np.zeros((n_outputs, n_features))
        self.yy = 0.0
        self.n_samples = 0

    def add(self, features: np.ndarray, targets: np.ndarray) -> None:
        if features.shape[1] != targets.shape[1]:
            raise DimensionMismatchError(
                f"{features.shape[1]} feature columns vs {targets.shape[1]} target columns")
        f = np.asarray(features, dtype=float)
        self.gram = dsyrk(1.0, f, beta=1.0, c=self.gram, overwrite_c=True)
        self.cross += targets @ f.T
        self.yy += float(np.sum(targets * targets))
        self.n_samples += f.shape[1]

    def full_gram(self) -> np.ndarray:
        return np.triu(self.gram) + np.triu(self.gram, 1).T


def _solve_gram(gram_upper: np.ndarray, cross: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    """Solve ``W (G + lam I) = cross`` using the upper triangle of ``G``.

    Returns ``(W, relative normal-equation residual)``.
    """
    n = gram_upper.shape[0]
    if cross.shape[1] != n:
        raise DimensionMismatchError(f"cross term has {cross.shape[1]} columns, Gram is {n}x{n}")
    reg = np.array(gram_upper, order="F", copy=True)
    reg[np.diag_indices(n)] += lam
    try:
        factor = scipy.linalg.cho_factor(reg, lower=False, overwrite_a=True, check_finite=False)
        w = scipy.linalg.cho_solve(factor, cross.T, check_finite=False).T
    except np.linalg.LinAlgError:
        if lam == 0:
            raise SingularSystemError(
                "Gram matrix is not positive definite; use lambda > 0") from None
        # Positive lambda but round-off broke definiteness: symmetric indefinite solve.
        log.warning("Cholesky failed at lambda=%g; falling back to LDL^T solve", lam)
        full = np.triu(gram_upper) + np.triu(gram_upper, 1).T
        full[np.diag_indices(n)] += lam
        w = scipy.linalg.solve(full, cross.T, assume_a="sym").T
        del full
    del reg
    if not np.all(np.isfinite(w)):
        raise SingularSystemError("ridge solution is not finite")
    w = np.ascontiguousarray(w)
    resid = dsymm(1.0, gram_upper, w, side=1, lower=0) + lam * w - cross
    denom = np.linalg.norm(cross)
    rel = float(np.linalg.norm(resid) / denom) if denom > 0 else float(np.linalg.norm(resid))
    return w, rel


def ridge_solve(features, targets, lam: float, *, return_residual: bool = False):
    """Ridge weights ``W = Y S^T (S S^T + lam I)^-1``.

    Args:
        features: ``F x T`` matrix ``S``, one sample per column.
        targets: ``Q_out x T`` matrix ``Y``.
        lam: ridge parameter, ``>= 0``.
        return_residual: also return ``||W(SS^T + lam I) - YS^T|| / ||YS^T||``.
    """
    s = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.atleast_2d(np.asarray(targets, dtype=float))
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    if s.shape[1] != y.shape[1] or s.shape[1] < 1:
        raise DimensionMismatchError(f"features {s.shape} and targets {y.shape} do not align")
    acc = GramAccumulator(s.shape[0], y.shape[0])
    acc.add(s, y)
    w, rel = _solve_gram(acc.gram, acc.cross, lam)
    return (w, rel) if return_residual else w


# --- normalization -------------------------------------------------------------

@dataclass(frozen=True)
class Normalizer:
    """Per-dimension z-score fitted on training data."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> "Normalizer":
        mean = data.mean(axis=1)
        scale = data.std(axis=1)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def forward(self, data: np.ndarray) -> np.ndarray:
        return (data - self.mean[:, None]) / self.scale[:, None]

    def inverse(self, data: np.ndarray) -> np.ndarray:
        return data * self.scale[:, None] + self.mean[:, None]

    def to_dict(self):
        return {"mean": [float(v) for v in self.mean], "scale": [float(v) for v in self.scale]}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.array(doc["mean"], dtype=float), np.array(doc["scale"], dtype=float))


# --- echo-state reservoir ----------------------------------------------------

@dataclass(frozen=True)
class EsnConfig:
    n_nodes: int = 28
    input_dim: int = 3
    leak_rate: float = 1.0
    spectral_radius: float = 0.9
    input_scale: float = 0.1
    bias_scale: float = 1.0
    connectivity_degree: float = 3.0
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 1 or self.input_dim < 1:
            raise ConfigError("n_nodes and input_dim must be >= 1")
        if not 0.0 <= self.leak_rate <= 1.0:
            raise ConfigError(f"leak_rate must lie in [0, 1], got {self.leak_rate}")
        if self.activation != "tanh":
            raise ConfigError(f"unsupported activation {self.activation!r}")
        if self.spectral_radius < 0 or self.connectivity_degree < 0:
            raise ConfigError("spectral_radius and connectivity_degree must be >= 0")

    @property
    def total_dim(self) -> int:
        return self.n_nodes

    def to_dict(self) -> dict:
        return asdict(self)


def _spectral_radius(a: sparse.csr_matrix) -> float:
    n = a.shape[0]
    if a.nnz == 0:
        return 0.0
    if n <= 400:
        return float(np.max(np.abs(np.linalg.eigvals(a.toarray()))))
    vals = eigs(a, k=1, which="LM", tol=1e-10, return_eigenvectors=False,
                v0=np.ones(n), maxiter=50 * n)
    return float(np.abs(vals[0]))


class Reservoir:
    """Fixed random matrices ``A``, ``W_in``, ``b`` drawn from an :class:`EsnConfig`."""

    def __init__(self, config: EsnConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        n = config.n_nodes
        p = min(1.0, config.connectivity_degree / n)
        mask = rng.random((n, n)) < p
        values = rng.uniform(-1.0, 1.0, (n, n))
        a = sparse.csr_matrix(np.where(mask, values, 0.0))
        rho = _spectral_radius(a)
        if config.spectral_radius > 0:
            if rho == 0.0:
                raise ConfigError("random reservoir matrix is nilpotent; change seed or degree")
            a = a * (config.spectral_radius / rho)
        else:
            a = sparse.csr_matrix((n, n))
        self.a = a
        self._a_t = a.T.tocsr()
        self.w_in = rng.uniform(-config.input_scale, config.input_scale, (n, config.input_dim))
        self.b = rng.uniform(-config.bias_scale, config.bias_scale, n)

    @classmethod
    def from_matrices(cls, config: EsnConfig, a, w_in, b) -> "Reservoir":
        """Reservoir with explicit ``A`` (row-vector convention), ``W_in`` and ``b``."""
        n = config.n_nodes
        a = sparse.csr_matrix(np.asarray(a, dtype=float))
        w_in = np.asarray(w_in, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != (n, n) or w_in.shape != (n, config.input_dim) or b.shape != (n,):
            raise DimensionMismatchError("matrix shapes do not match the reservoir config")
        res = cls.__new__(cls)
        res.config = config
        res.a, res._a_t = a, a.T.tocsr()
        res.w_in, res.b = w_in, b
        return res

    def step(self, s: np.ndarray, u: np.ndarray) -> np.ndarray:
        g = self.config.leak_rate
        # Row-vector convention: s @ A == A^T s.
        return (1.0 - g) * s + g * np.tanh(self._a_t @ s + self.w_in @ u + self.b)

    def drive(self, inputs: np.ndarray, s0: np.ndarray | None = None) -> np.ndarray:
        """States after consuming each input column; column ``t`` has seen ``u(0..t)``."""
        s = np.zeros(self.config.n_nodes) if s0 is None else np.asarray(s0, dtype=float)
        out = np.empty((self.config.n_nodes, inputs.shape[1]))
        for t in range(inputs.shape[1]):
            s = self.step(s, inputs[:, t])
            out[:, t] = s
        return out


@dataclass
class EsnState:
    s: np.ndarray


def esn_step(state: EsnState, u, config: EsnConfig, reservoir: Reservoir | None = None) -> EsnState:
    res = reservoir if reservoir is not None else _reservoir(config)
    return EsnState(res.step(np.asarray(state.s, dtype=float), np.asarray(u, dtype=float)))


_RESERVOIR_CACHE: dict = {}


def _reservoir(config: EsnConfig) -> Reservoir:
    res = _RESERVOIR_CACHE.get(config)
    if res is None:
        if len(_RESERVOIR_CACHE) > 16:
            _RESERVOIR_CACHE.clear()
        res = _RESERVOIR_CACHE[config] = Reservoir(config)
    return res


# --- models ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReadoutModel:
    """Trained readout bound to the feature construction it was fit on."""

    w_out: np.ndarray
    lam: float
    feature_map: FeatureMap | EsnConfig
    target_mode: str = "next_state"
    normalizer: Normalizer | None = None
    washout: int = 0

    def __post_init__(self):
        if self.target_mode not in TARGET_MODES:
            raise ConfigError(f"target_mode must be one of {TARGET_MODES}, got {self.target_mode!r}")
        if self.w_out.shape[1] != self.feature_map.total_dim:
            raise DimensionMismatchError(
                f"W_out has {self.w_out.shape[1]} columns, features have {self.feature_map.total_dim}")
        if not np.all(np.isfinite(self.w_out)):
            raise ConfigError("W_out contains non-finite values")

    @property
    def is_esn(self) -> bool:
        return isinstance(self.feature_map, EsnConfig)

    @property
    def history_depth(self) -> int:
        return 0 if self.is_esn else self.feature_map.depth

    @cached_property
    def reservoir(self) -> Reservoir:
        return _reservoir(self.feature_map)


@dataclass(frozen=True)
class TrainSummary:
    n_samples: int
    fit_rmse: float
    normal_eq_residual: float
    wall_clock_train: float
    wall_clock_featurize: float


@dataclass(frozen=True, eq=False)
class PredictedSeries(TimeSeries):
    """Closed-loop output; ``blew_up`` marks a run truncated by the magnitude guard."""

    blew_up: bool = False


def _fit_rmse(w, acc: GramAccumulator, next_scale: float) -> float:
    # ||WS - Y||^2 expanded in accumulated moments.
    wg = dsymm(1.0, acc.gram, np.ascontiguousarray(w), side=1, lower=0)
    rss = float(np.sum(w * wg) - 2.0 * np.sum(w * acc.cross) + acc.yy)
    return float(np.sqrt(max(rss, 0.0) / max(acc.n_samples, 1))) / next_scale


def _prepare(series: TimeSeries, normalize: bool):
    norm = Normalizer.fit(series.data) if normalize else None
    data = norm.forward(series.data) if norm else series.data
    return norm, data


def train(series: TimeSeries, fmap: FeatureMap, lam: float = 1e-6, target_mode: str = "next_state",
          *, normalize: bool = False, chunk: int = 2048) -> tuple[ReadoutModel, TrainSummary]:
    """Fit a delay-feature readout on ``series`` (teacher forcing).

    ``fit_rmse`` is the RMS one-step error divided by the RMS spread of the
    next states about their mean, so it is comparable across target modes.
    """
    if target_mode not in TARGET_MODES:
        raise ConfigError(f"target_mode must be one of {TARGET_MODES}, got {target_mode!r}")
    n = n_samples(series.length, fmap)
    if n < 1:
        raise SeriesTooShortError(
            f"series of length {series.length} yields no samples at history depth {fmap.depth}")
    if n < fmap.total_dim / 10:
        warnings.warn(f"{n} samples for {fmap.total_dim} features; fit is badly underdetermined",
                      stacklevel=2)
    norm, data = _prepare(series, normalize)
    work = TimeSeries(data, series.dt)
    if fmap.total_dim * n * 8 <= MATERIALIZE_LIMIT:
        chunk = n
    acc = GramAccumulator(fmap.total_dim, series.q)
    t_feat = t_acc = 0.0
    t0 = time.perf_counter()
    for feats, nxt in iter_feature_chunks(work, fmap, chunk=chunk):
        t1 = time.perf_counter()
        t_feat += t1 - t0
        if target_mode == "delta":
            lin_now = nxt - _current(work, fmap, feats.shape[1], acc.n_samples)
            acc.add(feats, lin_now)
        else:
            acc.add(feats, nxt)
        t0 = time.perf_counter()
        t_acc += t0 - t1
    t1 = time.perf_counter()
    w, rel = _solve_gram(acc.gram, acc.cross, lam)
    t_solve = time.perf_counter() - t1
    nxt_all = work.data[:, fmap.depth + 1:]
    scale = float(np.sqrt(np.mean(np.sum((nxt_all - nxt_all.mean(axis=1, keepdims=True)) ** 2, axis=0))))
    rmse = _fit_rmse(w, acc, scale if scale > 0 else 1.0)
    model = ReadoutModel(w, float(lam), fmap, target_mode, norm)
    return model, TrainSummary(n, rmse, rel, t_acc + t_solve, t_feat)


def _current(work: TimeSeries, fmap: FeatureMap, width: int, offset: int) -> np.ndarray:
    start = fmap.depth + offset
    return work.data[:, start:start + width]


def predict_closed_loop(model: ReadoutModel, warmup: TimeSeries, n_steps: int) -> PredictedSeries:
    """Run the model autonomously for ``n_steps`` past the end of ``warmup``.

    Each output is fed back as the next input. Delay models need at least
    ``history_depth + 1`` warmup columns; echo-state models are synchronized
    by driving the reservoir over the whole warmup. A prediction whose
    magnitude reaches 1e6 (or is not finite) stops the run; the returned
    series is truncated and has ``blew_up`` set.
    """
    if n_steps < 1:
        raise ConfigError("n_steps must be >= 1")
    if warmup.length < model.history_depth + 1:
        raise SeriesTooShortError(
            f"warmup has {warmup.length} states, model needs {model.history_depth + 1}")
    norm = model.normalizer
    data = norm.forward(warmup.data) if norm else warmup.data
    out = np.empty((warmup.q, n_steps))
    w = model.w_out
    delta = model.target_mode == "delta"
    produced = n_steps
    blew_up = False

    if model.is_esn:
        res = model.reservoir
        s = res.drive(data)[:, -1]
        u = data[:, -1]

        def advance(s, u):
            y = w @ s
            if delta:
                y = y + u
            return res.step(s, y), y
    else:
        fmap = model.feature_map
        depth = fmap.depth
        # Ring of the last depth+1 states, column d = u(t-d).
        window = np.array(data[:, warmup.length - depth - 1:][:, ::-1])
        s, u = window, window[:, 0]

        def advance(win, u):
            y = w @ assemble(win, fmap)
            if delta:
                y = y + win[:, 0]
            win = np.concatenate([y[:, None], win[:, :-1]], axis=1)
            return win, y

    for n in range(n_steps):
        s, u = advance(s, u)
        y = norm.inverse(u[:, None])[:, 0] if norm else u
        if not np.all(np.abs(y) < BLOWUP_GUARD):
            produced, blew_up = n, True
            break
        out[:, n] = y
    origin = warmup.origin_time + warmup.length * warmup.dt
    if produced == 0:
        # TimeSeries needs T >= 1; keep the last warmup state as a placeholder.
        return PredictedSeries(warmup.data[:, -1:], warmup.dt, origin, blew_up=True)
    return PredictedSeries(out[:, :produced], warmup.dt, origin, blew_up=blew_up)


def esn_train(series: TimeSeries, config: EsnConfig, lam: float = 1e-6, washout: int = 100,
              target_mode: str = "next_state", *, normalize: bool = True,
              ) -> tuple[ReadoutModel, TrainSummary]:
    """Drive the reservoir with ``series``, drop ``washout`` states, ridge-fit the readout."""
    if config.input_dim != series.q:
        raise DimensionMismatchError(f"reservoir expects {config.input_dim} inputs, series has {series.q}")
    if washout < 0 or washout >= series.length - 1:
        raise SeriesTooShortError(f"washout {washout} leaves no samples from {series.length} states")
    norm, data = _prepare(series, normalize)
    res = _reservoir(config)
    t0 = time.perf_counter()
    states = res.drive(data[:, :-1])[:, washout:]
    t1 = time.perf_counter()
    targets = data[:, washout + 1:]
    if target_mode == "delta":
        targets = targets - data[:, washout:-1]
    acc = GramAccumulator(config.n_nodes, series.q)
    acc.add(states, targets)
    w, rel = _solve_gram(acc.gram, acc.cross, lam)
    t2 = time.perf_counter()
    nxt = data[:, washout + 1:]
    scale = float(np.sqrt(np.mean(np.sum((nxt - nxt.mean(axis=1, keepdims=True)) ** 2, axis=0))))
    rmse = _fit_rmse(w, acc, scale if scale > 0 else 1.0)
    model = ReadoutModel(w, float(lam), config, target_mode, norm, washout)
    return model, TrainSummary(states.shape[1], rmse, rel, t2 - t1, t1 - t0)


def esn_predict(model: ReadoutModel, warmup: TimeSeries, n_steps: int) -> PredictedSeries:
    if not model.is_esn:
        raise ConfigError("esn_predict needs a model trained by esn_train")
    return predict_closed_loop(model, warmup, n_steps)


def train_model(series: TimeSeries, feature_map, lam: float, target_mode: str = "next_state",
                *, normalize: bool = False, washout: int = 100):
    """Dispatch to :func:`train` or :func:`esn_train` by feature-map type."""
    if isinstance(feature_map, EsnConfig):
        return esn_train(series, feature_map, lam, washout, target_mode, normalize=normalize)
    return train(series, feature_map, lam, target_mode, normalize=normalize)

"""Feature vectors built from delayed observations.

Two families are built from a delay window ``[u(t), u(t-1), ..., u(t-depth)]``:

``ng_rc``
    constant (optional) + linear delays + every unordered quadratic product of
    the linear block.
``heng_rc``
    constant (optional) + linear delays + neighbor-coupled products: for each
    delay block ``j`` and dimension ``i``, ``H_i`` times its left, own and
    right neighbors at the same time and one step earlier (six terms).

A third family, ``esn_state``, only describes reservoir node states so that
echo-state readouts can share the bookkeeping.

Feature matrices are column-major: one feature vector per column.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .errors import ConfigError, SeriesTooShortError
from .timeseries import TimeSeries

FAMILIES = ("heng_rc", "ng_rc", "esn_state")
WRAPS = ("periodic", "clamped")
HENG_VARIANTS = ("full", "first_dim_only")

# Order of the six neighbor products: (spatial offset, extra delay).
HENG_TERMS = ((-1, 0), (0, 0), (1, 0), (-1, 1), (0, 1), (1, 1))


@dataclass(frozen=True)
class FeatureConfig:
    """Declarative description of a feature map.

    ``delay_offset`` shifts which delays the neighbor products read: block
    ``j`` (1-based) multiplies states at delay ``j - 1 + delay_offset`` with
    states at that delay and the next one. The default 0 pairs ``u(t)`` with
    ``u(t)`` and ``u(t-1)`` in the first block; 1 starts one step further back.
    """

    family: str = "heng_rc"
    q: int = 3
    k: int = 1
    include_constant: bool = False
    constant_value: float = 1.0
    neighbor_wrap: str = "periodic"
    heng_variant: str = "full"
    delay_offset: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.neighbor_wrap not in WRAPS:
            raise ConfigError(f"neighbor_wrap must be one of {WRAPS}, got {self.neighbor_wrap!r}")
        if self.heng_variant not in HENG_VARIANTS:
            raise ConfigError(f"heng_variant must be one of {HENG_VARIANTS}, got {self.heng_variant!r}")
        if self.q < 1 or self.k < 1:
            raise ConfigError(f"need q >= 1 and k >= 1, got q={self.q}, k={self.k}")
        if self.delay_offset not in (0, 1):
            raise ConfigError(f"delay_offset must be 0 or 1, got {self.delay_offset}")
        if self.family == "heng_rc" and self.neighbor_wrap == "periodic" and self.q < 3:
            raise ConfigError("heng_rc with periodic wrap needs q >= 3")

    @property
    def depth(self) -> int:
        """Deepest delay read by the map (the window holds ``depth + 1`` states)."""
        if self.family == "heng_rc":
            return self.k + self.delay_offset
        if self.family == "ng_rc":
            return self.k
        return 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FeatureMap:
    config: FeatureConfig
    dim_constant: int
    dim_linear: int
    dim_nonlinear: int
    term_index: tuple = field(repr=False)

    @property
    def total_dim(self) -> int:
        return self.dim_constant + self.dim_linear + self.dim_nonlinear

    @property
    def depth(self) -> int:
        return self.config.depth

    def to_text(self) -> str:
        """Human-readable JSON document: configuration plus block sizes."""
        doc = {
            "kind": "feature_map",
            "config": self.config.to_dict(),
            "dim_constant": self.dim_constant,
            "dim_linear": self.dim_linear,
            "dim_nonlinear": self.dim_nonlinear,
            "total_dim": self.total_dim,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_text(cls, text: str) -> "FeatureMap":
        doc = json.loads(text) if isinstance(text, str) else text
        fmap = plan_features(FeatureConfig(**doc["config"]))
        if fmap.total_dim != doc.get("total_dim", fmap.total_dim):
            raise ConfigError("feature map document disagrees with its own configuration")
        return fmap

    def write_term_index(self, path) -> None:
        """Dump the symbolic slot table as CSV (slot, block, dims, delays)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "block", "dims", "delays"])
            for n, term in enumerate(self.term_index):
                kind = term[0]
                if kind == "const":
                    w.writerow([n, kind, "", ""])
                elif kind == "lin":
                    w.writerow([n, kind, term[1], term[2]])
                else:
                    (da, la), (db, lb) = term[1], term[2]
                    w.writerow([n, kind, f"{da} {db}", f"{la} {lb}"])


def _neighbors(cfg: FeatureConfig) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(cfg.q)
    if cfg.neighbor_wrap == "periodic":
        return (i - 1) % cfg.q, (i + 1) % cfg.q
    return np.maximum(i - 1, 0), np.minimum(i + 1, cfg.q - 1)


def _heng_dims(cfg: FeatureConfig) -> np.ndarray:
    return np.arange(1) if cfg.heng_variant == "first_dim_only" else np.arange(cfg.q)


def plan_features(config: FeatureConfig) -> FeatureMap:
    """Exact block sizes and the symbolic meaning of every slot.

    Slot terms are ``("const",)``, ``("lin", dim, delay)`` or
    ``("nl", (dim_a, delay_a), (dim_b, delay_b))``; dimensions are 0-based.
    """
    cfg = config
    terms: list[tuple] = []
    if cfg.include_constant:
        terms.append(("const",))
    if cfg.family == "esn_state":
        terms.extend(("lin", i, 0) for i in range(cfg.q))
        return FeatureMap(cfg, int(cfg.include_constant), cfg.q, 0, tuple(terms))

    lin = [("lin", i, d) for d in range(cfg.k + 1) for i in range(cfg.q)]
    terms.extend(lin)
    if cfg.family == "ng_rc":
        a, b = np.triu_indices(len(lin))
        nl = [("nl", lin[x][1:], lin[y][1:]) for x, y in zip(a, b)]
    else:
        left, right = _neighbors(cfg)
        nb = {-1: left, 0: np.arange(cfg.q), 1: right}
        nl = []
        for j in range(1, cfg.k + 1):
            d = j - 1 + cfg.delay_offset
            for i in _heng_dims(cfg):
                for off, extra in HENG_TERMS:
                    nl.append(("nl", (int(i), d), (int(nb[off][i]), d + extra)))
    terms.extend(nl)
    return FeatureMap(cfg, int(cfg.include_constant), len(lin), len(nl), tuple(terms))


# --- windows -----------------------------------------------------------------

def delay_window(data: np.ndarray, t: int, depth: int) -> np.ndarray:
    """``Q x (depth+1)`` window whose column ``d`` is ``u(t - d)``."""
    if t - depth < 0:
        raise SeriesTooShortError(f"index {t} has only {t} states of history, need {depth}")
    return data[:, t - depth:t + 1][:, ::-1]


def _check_window(window: np.ndarray, config: FeatureConfig) -> np.ndarray:
    window = np.asarray(window, dtype=float)
    if window.ndim == 1:
        window = window[:, None]
    if window.shape[0] != config.q:
        raise ConfigError(f"window has dimension {window.shape[0]}, map expects {config.q}")
    if window.shape[1] < config.depth + 1:
        raise SeriesTooShortError(
            f"window holds {window.shape[1]} states, map needs {config.depth + 1}")
    return window


def build_linear(window, config: FeatureConfig) -> np.ndarray:
    """``u(t) ++ u(t-1) ++ ... ++ u(t-k)``."""
    window = np.asarray(window, dtype=float)
    if window.ndim == 1:
        window = window[:, None]
    if window.shape[1] < config.k + 1:
        raise SeriesTooShortError(f"window holds {window.shape[1]} states, need {config.k + 1}")
    return window[:, :config.k + 1].T.reshape(-1)


def build_ngrc_nonlinear(linear) -> np.ndarray:
    """All products ``linear[a] * linear[b]`` with ``a <= b``, lexicographic."""
    linear = np.asarray(linear, dtype=float)
    a, b = np.triu_indices(linear.shape[0])
    return linear[a] * linear[b]


def build_heng_nonlinear(window, config: FeatureConfig) -> np.ndarray:
    window = _check_window(window, config)
    return _heng_block(window[:, :, None], config)[:, 0]


def _heng_block(stack: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """Neighbor products for a ``Q x (depth+1) x n`` stack of windows."""
    left, right = _neighbors(cfg)
    dims = _heng_dims(cfg)
    blocks = []
    for j in range(1, cfg.k + 1):
        d = j - 1 + cfg.delay_offset
        now, prev = stack[:, d], stack[:, d + 1]
        h = now[dims]
        prods = np.stack([
            h * now[left[dims]], h * h, h * now[right[dims]],
            h * prev[left[dims]], h * prev[dims], h * prev[right[dims]],
        ], axis=1)
        blocks.append(prods.reshape(-1, stack.shape[2]))
    return np.concatenate(blocks, axis=0)


def assemble(window, fmap: FeatureMap) -> np.ndarray:
    """Full feature vector ``constant ++ linear ++ nonlinear`` for one window."""
    cfg = fmap.config
    window = _check_window(window, cfg)
    return _assemble_stack(window[:, :, None], fmap)[:, 0]


def _assemble_stack(stack: np.ndarray, fmap: FeatureMap) -> np.ndarray:
    cfg = fmap.config
    n = stack.shape[2]
    parts = []
    if cfg.include_constant:
        parts.append(np.full((1, n), cfg.constant_value))
    if cfg.family == "esn_state":
        parts.append(stack[:, 0])
        return np.concatenate(parts, axis=0)
    lin = stack[:, :cfg.k + 1].transpose(1, 0, 2).reshape(-1, n)
    parts.append(lin)
    if cfg.family == "ng_rc":
        a, b = np.triu_indices(lin.shape[0])
        parts.append(lin[a] * lin[b])
    else:
        parts.append(_heng_block(stack, cfg))
    return np.concatenate(parts, axis=0)


def evaluate_term(term: tuple, window, constant_value: float = 1.0) -> float:
    """Value of one symbolic slot over a window (independent reference path)."""
    window = np.asarray(window, dtype=float)
    if term[0] == "const":
        return constant_value
    if term[0] == "lin":
        return float(window[term[1], term[2]])
    (da, la), (db, lb) = term[1], term[2]
    return float(window[da, la] * window[db, lb])


# --- whole series ------------------------------------------------------------

def n_samples(series_length: int, fmap: FeatureMap) -> int:
    """Feature columns a series of the given length yields (each with a target)."""
    return max(0, series_length - 1 - fmap.depth)


def _stack(data: np.ndarray, depth: int, start: int, stop: int) -> np.ndarray:
    """Windows for time indices ``start..stop-1`` as a ``Q x (depth+1) x n`` array."""
    return np.stack([data[:, start - d:stop - d] for d in range(depth + 1)], axis=1)


def iter_feature_chunks(series: TimeSeries, fmap: FeatureMap, chunk: int = 2048,
                        ) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(features, next_states)`` column blocks covering every valid index.

    Column ``c`` of a block holds the features at time ``t`` and the state
    ``u(t+1)`` it should predict.
    """
    depth = fmap.depth
    data = series.data
    if data.shape[0] != fmap.config.q:
        raise ConfigError(f"series has dimension {data.shape[0]}, map expects {fmap.config.q}")
    if n_samples(series.length, fmap) < 1:
        raise SeriesTooShortError(
            f"series of length {series.length} yields no samples at depth {depth}")
    last = series.length - 1
    for start in range(depth, last, chunk):
        stop = min(start + chunk, last)
        yield _assemble_stack(_stack(data, depth, start, stop), fmap), data[:, start + 1:stop + 1]


def featurize_series(series: TimeSeries, fmap: FeatureMap) -> tuple[np.ndarray, np.ndarray]:
    """Materialized ``(F x n, Q x n)`` feature and next-state matrices."""
    feats, targets = zip(*iter_feature_chunks(series, fmap))
    return np.concatenate(feats, axis=1), np.concatenate(targets, axis=1)


def nonlinear_count_ng(q: int, k: int) -> int:
    d = q * (k + 1)
    return d * (d + 1) // 2


def nonlinear_count_heng(q: int, k: int) -> int:
    return 6 * q * k

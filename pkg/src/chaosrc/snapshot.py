"""Binary model snapshots (``CCMD``).

Layout, little-endian::

    b"CCMD"            magic
    u32                format version (1)
    u32                byte length n of the text block
    n bytes            UTF-8 JSON: feature map or reservoir config, plus the
                       input normalizer and ESN washout
    u8                 target mode (0 = next_state, 1 = delta)
    f64                ridge parameter lambda
    u32, u32           W_out rows, cols
    rows*cols f64      W_out, row-major

Echo-state reservoirs are not stored: ``A``, ``W_in`` and ``b`` are redrawn
from the seeded config, which reproduces them bit for bit. Their product is
taken in the row-vector convention ``s @ A``.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError
from .features import FeatureMap
from .readout import EsnConfig, Normalizer, ReadoutModel, TARGET_MODES

CCMD_MAGIC = b"CCMD"
CCMD_VERSION = 1


def _text_block(model: ReadoutModel) -> str:
    if model.is_esn:
        doc = {"kind": "esn_config", "config": model.feature_map.to_dict(),
               "total_dim": model.feature_map.total_dim,
               "convention": "row_vector: s(t+1) = (1-g) s + g tanh(s @ A + W_in u + b)"}
    else:
        doc = json.loads(model.feature_map.to_text())
    doc["normalizer"] = model.normalizer.to_dict() if model.normalizer else None
    doc["washout"] = model.washout
    return json.dumps(doc, indent=2, sort_keys=True)


def to_bytes(model: ReadoutModel) -> bytes:
    text = _text_block(model).encode("utf-8")
    rows, cols = model.w_out.shape
    parts = [
        struct.pack("<4sII", CCMD_MAGIC, CCMD_VERSION, len(text)),
        text,
        struct.pack("<BdII", TARGET_MODES.index(model.target_mode), model.lam, rows, cols),
        np.ascontiguousarray(model.w_out, dtype="<f8").tobytes(),
    ]
    return b"".join(parts)


def from_bytes(blob: bytes) -> ReadoutModel:
    try:
        magic, version, n = struct.unpack_from("<4sII", blob, 0)
    except struct.error:
        raise FormatError("truncated CCMD header") from None
    if magic != CCMD_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CCMD_MAGIC!r}")
    if version != CCMD_VERSION:
        raise FormatError(f"unsupported CCMD version {version}")
    pos = 12
    doc = json.loads(blob[pos:pos + n].decode("utf-8"))
    pos += n
    try:
        mode, lam, rows, cols = struct.unpack_from("<BdII", blob, pos)
    except struct.error:
        raise FormatError("truncated CCMD readout header") from None
    pos += struct.calcsize("<BdII")
    payload = blob[pos:]
    if len(payload) != 8 * rows * cols:
        raise FormatError(f"W_out payload has {len(payload)} bytes, expected {8 * rows * cols}")
    w = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(float)
    if doc.get("kind") == "esn_config":
        fmap = EsnConfig(**doc["config"])
    elif doc.get("kind") == "feature_map":
        fmap = FeatureMap.from_text(doc)
    else:
        raise FormatError(f"unknown feature block kind {doc.get('kind')!r}")
    norm = Normalizer.from_dict(doc["normalizer"]) if doc.get("normalizer") else None
    return ReadoutModel(w, lam, fmap, TARGET_MODES[mode], norm, int(doc.get("washout", 0)))


def save_model(model: ReadoutModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(model))


def load_model(path) -> ReadoutModel:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def describe(model: ReadoutModel) -> str:
    """Plain-text summary used by ``chaosrc model inspect``."""
    lines = []
    if model.is_esn:
        cfg = model.feature_map
        lines.append(f"family        : esn (N={cfg.n_nodes}, leak={cfg.leak_rate}, "
                     f"radius={cfg.spectral_radius}, seed={cfg.seed})")
    else:
        cfg = model.feature_map.config
        fm = model.feature_map
        lines.append(f"family        : {cfg.family} (q={cfg.q}, k={cfg.k}, variant={cfg.heng_variant}, "
                     f"wrap={cfg.neighbor_wrap}, offset={cfg.delay_offset})")
        lines.append(f"blocks        : constant={fm.dim_constant} linear={fm.dim_linear} "
                     f"nonlinear={fm.dim_nonlinear}")
    lines.append(f"features      : {model.feature_map.total_dim}")
    lines.append(f"outputs       : {model.w_out.shape[0]}")
    lines.append(f"target_mode   : {model.target_mode}")
    lines.append(f"lambda        : {model.lam!r}")
    lines.append(f"normalized    : {model.normalizer is not None}")
    lines.append(f"|W_out|_max   : {float(np.max(np.abs(model.w_out))):.6g}")
    return "\n".join(lines)

"""Versioned binary checkpoint container.

Layout: an 8-byte little-endian manifest length, a UTF-8 JSON manifest, then
a raw payload of little-endian IEEE-754 32-bit tensor data.  The manifest
carries the format version, encoder/train configuration, run summary, and an
ordered list of tensor records (name, shape, byte offset into the payload).
Round trips are bit-exact; parameters are held as float32 by construction.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .encoder import EncoderConfig, EncoderParams
from .errors import CorruptCheckpointError, UnsupportedVersionError

FORMAT_VERSION = 1

_MANIFEST_KEYS = {
    "format_version",
    "encoder_config",
    "train_config",
    "iterations",
    "final_loss",
    "norm_stats",
    "tensors",
}
_TENSOR_KEYS = {"name", "shape", "offset"}


@dataclass
class Checkpoint:
    encoder_cfg: EncoderConfig
    params: EncoderParams
    train_config: dict
    iterations: int
    final_loss: float
    norm_mean: np.ndarray  # per-feature z-score statistics of the training data
    norm_std: np.ndarray


def save(ckpt: Checkpoint, path) -> None:
    tensors = []
    payload = bytearray()
    for name in ckpt.params.names():
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f4")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload += arr.tobytes()
    manifest = {
        "format_version": FORMAT_VERSION,
        "encoder_config": ckpt.encoder_cfg.to_dict(),
        "train_config": ckpt.train_config,
        "iterations": int(ckpt.iterations),
        "final_loss": float(ckpt.final_loss),
        "norm_stats": {
            "mean": [float(v) for v in np.asarray(ckpt.norm_mean).ravel()],
            "std": [float(v) for v in np.asarray(ckpt.norm_std).ravel()],
        },
        "tensors": tensors,
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise CorruptCheckpointError("file too short for a manifest header")
    (mlen,) = struct.unpack("<Q", raw[:8])
    if len(raw) < 8 + mlen:
        raise CorruptCheckpointError("truncated manifest")
    try:
        manifest = json.loads(raw[8 : 8 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"manifest is not valid UTF-8 JSON: {exc}") from exc

    unknown = set(manifest) - _MANIFEST_KEYS
    if unknown:
        raise CorruptCheckpointError(f"unknown manifest field(s): {sorted(unknown)}")
    missing = _MANIFEST_KEYS - set(manifest)
    if missing:
        raise CorruptCheckpointError(f"missing manifest field(s): {sorted(missing)}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"checkpoint format version {manifest['format_version']} "
            f"(this build reads version {FORMAT_VERSION})"
        )

    payload = raw[8 + mlen :]
    params = EncoderParams()
    prev_end = 0
    for rec in manifest["tensors"]:
        unknown = set(rec) - _TENSOR_KEYS
        if unknown:
            raise CorruptCheckpointError(f"unknown tensor record field(s): {sorted(unknown)}")
        shape = tuple(int(s) for s in rec["shape"])
        count = int(np.prod(shape)) if shape else 1
        offset = int(rec["offset"])
        if offset != prev_end:
            raise CorruptCheckpointError(
                f"tensor {rec['name']!r} offset {offset} is not contiguous (expected {prev_end})"
            )
        end = offset + 4 * count
        if end > len(payload):
            raise CorruptCheckpointError(f"truncated payload at tensor {rec['name']!r}")
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        params[rec["name"]] = arr.reshape(shape).copy()
        prev_end = end
    if prev_end != len(payload):
        raise CorruptCheckpointError(
            f"payload has {len(payload) - prev_end} trailing bytes past the last tensor"
        )

    return Checkpoint(
        encoder_cfg=EncoderConfig.from_dict(manifest["encoder_config"]),
        params=params,
        train_config=manifest["train_config"],
        iterations=int(manifest["iterations"]),
        final_loss=float(manifest["final_loss"]),
        norm_mean=np.array(manifest["norm_stats"]["mean"], dtype=np.float64),
        norm_std=np.array(manifest["norm_stats"]["std"], dtype=np.float64),
    )

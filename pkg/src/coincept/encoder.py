"""Inception-style dilated-convolution encoder.

The input is projected per timestep into a hidden space, then passed through
a stack of inception blocks.  Each block runs several basic units (two
stacked dilated convolutions of one base kernel size) plus a max-pool branch,
and fuses the concatenated branch outputs with a pointwise aggregator
convolution.  From block two onward every unit also receives a pointwise
skip connection from the matching unit of the previous block.  Dilations grow
as (2k-1)^(i-1) per block so the unit path's receptive field is (2k-1)^i
while the depth stays flat.

Time resolution is preserved end to end: input (B, T, N) -> output (B, T, H).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import grad
from .errors import InvalidArgumentError, NumericError
from .grad import Tape, Var


@dataclass(frozen=True)
class EncoderConfig:
    n_features: int
    hidden_dim: int = 64
    output_dim: int = 320
    n_blocks: int = 3
    base_kernels: tuple[int, ...] = (2, 5, 8)
    leaky_slope: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "base_kernels", tuple(int(k) for k in self.base_kernels))
        if self.n_features < 1 or self.hidden_dim < 1 or self.output_dim < 1:
            raise InvalidArgumentError("n_features, hidden_dim, output_dim must be >= 1")
        if self.n_blocks < 1:
            raise InvalidArgumentError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if not self.base_kernels or any(k < 2 for k in self.base_kernels):
            raise InvalidArgumentError(f"every base kernel must be >= 2, got {self.base_kernels}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise InvalidArgumentError(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "hidden_dim": self.hidden_dim,
            "output_dim": self.output_dim,
            "n_blocks": self.n_blocks,
            "base_kernels": list(self.base_kernels),
            "leaky_slope": self.leaky_slope,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EncoderConfig":
        return cls(
            n_features=int(d["n_features"]),
            hidden_dim=int(d["hidden_dim"]),
            output_dim=int(d["output_dim"]),
            n_blocks=int(d["n_blocks"]),
            base_kernels=tuple(int(k) for k in d["base_kernels"]),
            leaky_slope=float(d["leaky_slope"]),
        )


def dilation_of(base_kernel: int, block: int) -> int:
    """Dilation of a unit with base kernel k at 1-indexed block i: (2k-1)^(i-1)."""
    if base_kernel < 2 or block < 1:
        raise InvalidArgumentError(f"need kernel >= 2 and block >= 1, got {base_kernel}, {block}")
    return (2 * base_kernel - 1) ** (block - 1)


def receptive_field_of(base_kernel: int, block: int) -> int:
    """Receptive field of the unit path after block i: (2k-1)^i."""
    if base_kernel < 2 or block < 1:
        raise InvalidArgumentError(f"need kernel >= 2 and block >= 1, got {base_kernel}, {block}")
    return (2 * base_kernel - 1) ** block


def _param_shapes(cfg: EncoderConfig):
    """Deterministic (name, shape, fan_in) enumeration; fan_in 0 marks a bias."""
    hid = cfg.hidden_dim
    yield "proj.w", (cfg.n_features, hid), cfg.n_features
    yield "proj.b", (hid,), 0
    for i in range(1, cfg.n_blocks + 1):
        for u, k in enumerate(cfg.base_kernels):
            yield f"block{i}.unit{u}.conv1.w", (hid, hid, k), hid * k
            yield f"block{i}.unit{u}.conv1.b", (hid,), 0
            yield f"block{i}.unit{u}.conv2.w", (hid, hid, k), hid * k
            yield f"block{i}.unit{u}.conv2.b", (hid,), 0
            if i >= 2:
                yield f"block{i}.unit{u}.skip.w", (hid, hid, 1), hid
                yield f"block{i}.unit{u}.skip.b", (hid,), 0
        yield f"block{i}.pool.w", (hid, hid, 1), hid
        yield f"block{i}.pool.b", (hid,), 0
        out_ch = cfg.output_dim if i == cfg.n_blocks else hid
        cat = hid * (len(cfg.base_kernels) + 1)
        yield f"block{i}.agg.w", (out_ch, cat, 1), cat
        yield f"block{i}.agg.b", (out_ch,), 0


@dataclass
class EncoderParams:
    """Named parameter arrays in a fixed, serialization-stable order."""

    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.arrays[name] = value

    def names(self) -> list[str]:
        return list(self.arrays)

    def size(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def astype(self, dtype) -> "EncoderParams":
        return EncoderParams({k: v.astype(dtype) for k, v in self.arrays.items()})

    def copy(self) -> "EncoderParams":
        return EncoderParams({k: v.copy() for k, v in self.arrays.items()})


def param_count(cfg: EncoderConfig) -> int:
    """Exact number of scalars in the encoder; independent of sequence length."""
    return sum(int(np.prod(shape)) for _, shape, _ in _param_shapes(cfg))


def init_params(cfg: EncoderConfig, seed: int, dtype=np.float32) -> EncoderParams:
    """Weights uniform on +/-sqrt(1/fan_in) from a Philox stream; biases zero.

    Zero biases keep an all-zero input mapped to an all-zero representation,
    which the anomaly head's masked pass relies on.
    """
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    params = EncoderParams()
    for name, shape, fan_in in _param_shapes(cfg):
        if fan_in == 0:
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            bound = float(np.sqrt(1.0 / fan_in))
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params


@dataclass
class Representation:
    """Per-timestep embeddings with the input's time resolution."""

    values: np.ndarray  # (B, T, H)
    mask: Optional[np.ndarray] = None


def encode_graph(
    pvars: Mapping[str, Var],
    cfg: EncoderConfig,
    x: Var,
    mask: Optional[np.ndarray] = None,
) -> Var:
    """Differentiable forward pass; ``x`` is (B, T, N) on a live tape.

    ``mask`` is an optional boolean (B, T) array; True positions have their
    projected embedding zeroed before any convolution, so no output depends
    on the raw values at masked timesteps.

    Raises :class:`NumericError` carrying the offending block index if a
    block output goes non-finite.
    """
    if x.ndim != 3 or x.shape[2] != cfg.n_features:
        raise InvalidArgumentError(
            f"encoder input must be (B, T, {cfg.n_features}), got {x.shape}"
        )
    if not np.isfinite(x.data).all():
        raise NumericError("encoder input contains non-finite values", block=0)
    b, t, _ = x.shape
    slope = cfg.leaky_slope

    h = grad.linear(x, pvars["proj.w"], pvars["proj.b"])  # (B, T, K)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (b, t):
            raise InvalidArgumentError(f"mask shape {mask.shape} != batch/time {(b, t)}")
        keep = np.repeat((~mask)[:, :, None], cfg.hidden_dim, axis=2)
        h = grad.mul(h, x.tape.const(keep.astype(x.tape.dtype)))
    h = grad.transpose(h, (0, 2, 1))  # (B, K, T)

    prev_units: list[Var] | None = None
    for i in range(1, cfg.n_blocks + 1):
        units: list[Var] = []
        for u, k in enumerate(cfg.base_kernels):
            d = dilation_of(k, i)
            y = grad.conv1d(h, pvars[f"block{i}.unit{u}.conv1.w"], pvars[f"block{i}.unit{u}.conv1.b"], d)
            y = grad.leaky_relu(y, slope)
            y = grad.conv1d(y, pvars[f"block{i}.unit{u}.conv2.w"], pvars[f"block{i}.unit{u}.conv2.b"], d)
            if i >= 2:
                s = grad.conv1d(prev_units[u], pvars[f"block{i}.unit{u}.skip.w"], pvars[f"block{i}.unit{u}.skip.b"], 1)
                y = grad.add(y, grad.leaky_relu(s, slope))
            units.append(y)
        pooled = grad.maxpool1d(h, 3, 1, "same")
        pooled = grad.conv1d(pooled, pvars[f"block{i}.pool.w"], pvars[f"block{i}.pool.b"], 1)
        pooled = grad.leaky_relu(pooled, slope)
        h = grad.conv1d(
            grad.concat(units + [pooled], axis=1),
            pvars[f"block{i}.agg.w"],
            pvars[f"block{i}.agg.b"],
            1,
        )
        if not np.isfinite(h.data).all():
            raise NumericError(f"non-finite activations in block {i}", block=i)
        prev_units = units
    return grad.transpose(h, (0, 2, 1))  # (B, T, H)


def encode(
    params: EncoderParams,
    cfg: EncoderConfig,
    x: np.ndarray,
    mask: Optional[np.ndarray] = None,
    precision: str = "float32",
) -> Representation:
    """Inference-only forward pass over a plain (B, T, N) array."""
    tape = Tape(precision)
    pvars = {name: tape.const(arr) for name, arr in params.arrays.items()}
    out = encode_graph(pvars, cfg, tape.const(np.asarray(x)), mask=mask)
    return Representation(values=out.data, mask=mask)

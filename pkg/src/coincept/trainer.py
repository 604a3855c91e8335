"""Self-supervised training loop.

Per iteration: draw a batch of random windows, perturb them through the
wavelet filter, sample one shared crop pair, encode the four views, compute
the hierarchical triplet loss on the aligned overlap, and take one Adam step.
Everything downstream of the root seed is deterministic, so (seed, config,
dataset) fully determine the checkpoint at fixed precision.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from . import rng as rng_mod
from .checkpoint import Checkpoint
from .encoder import EncoderConfig, encode_graph, init_params
from .errors import InvalidArgumentError, NumericError
from .grad import Tape, backward, narrow
from .losses import LossConfig, hierarchical_triplet
from .sampler import make_views, sample_crop_pair
from .wavelet import PerturbConfig, d4_filters, perturb

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 8
    iters: int = 600
    seed: int = 0
    window_len: int = 256
    min_overlap: int = 8
    alpha_thresh: float = 0.2
    epsilon: float = 0.7
    zeta: float = 1.0
    precision: str = "float32"

    def __post_init__(self):
        if self.lr < 0:
            raise InvalidArgumentError(f"lr must be >= 0, got {self.lr}")
        if self.iters < 1:
            raise InvalidArgumentError(f"iters must be >= 1, got {self.iters}")
        if self.batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be >= 1, got {self.batch_size}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss_trace: list[float]


def _fit_norm_stats(dataset: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    stacked = np.concatenate([np.asarray(s, dtype=np.float64) for s in dataset], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def _adam_step(params, grads, m_state, v_state, lr: float, t: int):
    # Bias-corrected adaptive moments:
    #   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
    #   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for name in params.names():
        g = grads[name]
        m_state[name] = ADAM_BETA1 * m_state[name] + (1 - ADAM_BETA1) * g
        v_state[name] = ADAM_BETA2 * v_state[name] + (1 - ADAM_BETA2) * g * g
        step = lr * (m_state[name] / c1) / (np.sqrt(v_state[name] / c2) + ADAM_EPS)
        params[name] = (params[name] - step.astype(params[name].dtype, copy=False))


def train(
    dataset: Sequence[np.ndarray],
    enc_cfg: EncoderConfig,
    cfg: TrainConfig,
) -> TrainResult:
    """Train an encoder on a list of (M, N) series; returns checkpoint + loss trace."""
    series = [np.asarray(s, dtype=np.float64) for s in dataset]
    series = [s[:, None] if s.ndim == 1 else s for s in series]
    if not series:
        raise InvalidArgumentError("empty training dataset")
    usable = []
    for i, s in enumerate(series):
        if s.ndim != 2 or s.shape[1] != enc_cfg.n_features:
            raise InvalidArgumentError(
                f"series {i} has shape {s.shape}, expected (M, {enc_cfg.n_features})"
            )
        if s.shape[0] < cfg.min_overlap:
            warnings.warn(f"skipping series {i}: length {s.shape[0]} < min_overlap {cfg.min_overlap}")
            continue
        usable.append(s)
    if not usable:
        raise InvalidArgumentError("no series is at least min_overlap long")

    mean, std = _fit_norm_stats(usable)
    normalized = [(s - mean) / std for s in usable]

    bank = d4_filters()
    pcfg = PerturbConfig(alpha=cfg.alpha_thresh)
    dtype = np.float32 if cfg.precision == "float32" else np.float64
    params = init_params(enc_cfg, rng_mod.stream_seed(cfg.seed, "init"), dtype=dtype)
    m_state = {n: np.zeros_like(params[n], dtype=np.float64) for n in params.names()}
    v_state = {n: np.zeros_like(params[n], dtype=np.float64) for n in params.names()}
    sample_rng = rng_mod.stream(cfg.seed, "sampler")
    loss_cfg = LossConfig(epsilon=cfg.epsilon, zeta=cfg.zeta)

    trace: list[float] = []
    last_loss = float("nan")
    for it in range(1, cfg.iters + 1):
        picks = sample_rng.integers(0, len(normalized), size=cfg.batch_size)
        w_len = min(cfg.window_len, min(normalized[int(i)].shape[0] for i in picks))
        windows = []
        for i in picks:
            s = normalized[int(i)]
            start = int(sample_rng.integers(0, s.shape[0] - w_len + 1))
            windows.append(s[start : start + w_len])
        batch = np.stack(windows)  # (B, W, N)
        batch_t = np.stack([perturb(w, pcfg, bank) for w in windows])

        cp = sample_crop_pair(w_len, cfg.min_overlap, sample_rng)
        views = make_views(batch, batch_t, cp)

        tape = Tape(cfg.precision)
        pvars = {n: tape.var(params[n]) for n in params.names()}
        z_p = encode_graph(pvars, enc_cfg, tape.const(views.x_p))
        z_q = encode_graph(pvars, enc_cfg, tape.const(views.x_q))
        zt_p = encode_graph(pvars, enc_cfg, tape.const(views.xt_p))
        zt_q = encode_graph(pvars, enc_cfg, tape.const(views.xt_q))

        lo, hi = views.overlap_in_p
        z_p = narrow(z_p, 1, lo, hi - lo)
        zt_p = narrow(zt_p, 1, lo, hi - lo)
        lo, hi = views.overlap_in_q
        z_q = narrow(z_q, 1, lo, hi - lo)
        zt_q = narrow(zt_q, 1, lo, hi - lo)

        term_log: list = []
        loss = hierarchical_triplet(z_p, z_q, zt_p, zt_q, loss_cfg, terms_out=term_log)
        last_loss = loss.item()
        if not np.isfinite(last_loss):
            raise NumericError(
                f"non-finite loss at iteration {it}: {last_loss} (terms per depth: {term_log})",
                iteration=it,
                terms=term_log,
            )
        backward(loss)
        grads = {n: pvars[n].grad.astype(np.float64) for n in params.names()}
        _adam_step(params, grads, m_state, v_state, cfg.lr, it)
        trace.append(last_loss)

    ckpt = Checkpoint(
        encoder_cfg=enc_cfg,
        params=params.astype(np.float32),
        train_config=cfg.to_dict(),
        iterations=cfg.iters,
        final_loss=last_loss,
        norm_mean=mean,
        norm_std=std,
    )
    return TrainResult(checkpoint=ckpt, loss_trace=trace)

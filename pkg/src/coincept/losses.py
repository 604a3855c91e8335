"""Contrastive objectives over per-timestep representations.

``temporal_loss`` contrasts a positive pair against other timestamps of the
same instance, ``instance_loss`` against other instances at the same
timestamp; their sum is the contextual loss.  ``triplet_combine`` blends the
three positive-couplet losses with a hinge that keeps cross-context perturbed
couplets a margin farther than the clean couplet, and
``hierarchical_triplet`` re-applies the whole objective while halving the
time axis with max pooling.

Every function accepts either plain float64 arrays (returns a float) or
tape :class:`~coincept.grad.Var` nodes (returns a Var), so the same code
serves training and the test oracles.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import grad
from .errors import InvalidArgumentError
from .grad import Tape, Var

# Mask value for excluded logits; exp(-1e30 - max) underflows to exactly 0,
# so masked entries get zero weight and zero gradient without producing NaN.
_MASKED = -1e30


@dataclass(frozen=True)
class LossConfig:
    epsilon: float = 0.7  # balance between positive-couplet mean and the hinge
    zeta: float = 1.0  # triplet margin

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidArgumentError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.zeta < 0.0:
            raise InvalidArgumentError(f"zeta must be >= 0, got {self.zeta}")


@dataclass
class LossTerms:
    """The five dual losses entering one triplet combination.

    ``_t`` marks the perturbed (wavelet-filtered) side: ``l_ppt`` is the loss
    between a crop and its own perturbed view, ``l_pqt``/``l_ptq`` pair a raw
    crop with the other crop's perturbed view.
    """

    l_pq: float | Var
    l_ppt: float | Var
    l_qqt: float | Var
    l_pqt: float | Var
    l_ptq: float | Var


def _as_pair(z_p, z_q):
    """Normalize inputs to same-tape Vars; remember whether to unwrap."""
    if isinstance(z_p, Var) != isinstance(z_q, Var):
        raise InvalidArgumentError("mixed Var/array loss inputs")
    if isinstance(z_p, Var):
        return z_p, z_q, False
    tape = Tape("float64")
    return tape.const(np.asarray(z_p)), tape.const(np.asarray(z_q)), True


def _check_btH(z_p: Var, z_q: Var):
    if z_p.ndim != 3 or z_p.shape != z_q.shape:
        raise InvalidArgumentError(
            f"loss inputs must share a (B, T, H) shape, got {z_p.shape} vs {z_q.shape}"
        )


def _diag_mask(tape: Tape, batch: int, n: int) -> Var:
    m = np.where(np.eye(n, dtype=bool), _MASKED, 0.0)
    return tape.const(np.broadcast_to(m, (batch, n, n)).copy())


def _softmax_nll(anchor: Var, other: Var) -> Var:
    """Shared body: -log softmax over [anchor@other^T, masked anchor@anchor^T].

    ``anchor``/``other`` are (G, n, H); the contrast index runs over n.
    Returns the mean over all G*n anchor positions.
    """
    sim_ao = grad.matmul(anchor, grad.transpose(other, (0, 2, 1)))  # (G, n, n)
    sim_aa = grad.matmul(anchor, grad.transpose(anchor, (0, 2, 1)))
    sim_aa = grad.add(sim_aa, _diag_mask(anchor.tape, anchor.shape[0], anchor.shape[1]))
    lse = grad.logsumexp(grad.concat([sim_ao, sim_aa], axis=2), axis=2)  # (G, n)
    positive = grad.vsum(grad.mul(anchor, other), axis=2)  # (G, n)
    return grad.mean(grad.sub(lse, positive))


def temporal_loss(z_p, z_q):
    """Timestamp-contrastive loss; exactly 0 when T == 1."""
    z_p, z_q, unwrap = _as_pair(z_p, z_q)
    _check_btH(z_p, z_q)
    out = _softmax_nll(z_p, z_q)
    return out.item() if unwrap else out


def instance_loss(z_p, z_q):
    """Batch-contrastive loss; exactly 0 when B == 1."""
    z_p, z_q, unwrap = _as_pair(z_p, z_q)
    _check_btH(z_p, z_q)
    out = _softmax_nll(grad.transpose(z_p, (1, 0, 2)), grad.transpose(z_q, (1, 0, 2)))
    return out.item() if unwrap else out


def contextual_loss(z_p, z_q):
    """Temporal plus instance loss for one couplet."""
    z_p, z_q, unwrap = _as_pair(z_p, z_q)
    _check_btH(z_p, z_q)
    out = grad.add(_softmax_nll(z_p, z_q), _softmax_nll(grad.transpose(z_p, (1, 0, 2)), grad.transpose(z_q, (1, 0, 2))))
    return out.item() if unwrap else out


def triplet_combine(terms: LossTerms, cfg: LossConfig):
    """eps * (l_pq + l_ppt + l_qqt)/3 + (1-eps) * max(0, 2 l_pq - l_pqt - l_ptq + 2 zeta)."""
    eps, zeta = cfg.epsilon, cfg.zeta
    if isinstance(terms.l_pq, Var):
        positives = (terms.l_pq + terms.l_ppt + terms.l_qqt) / 3.0
        hinge = grad.relu(
            grad.shift(terms.l_pq * 2.0 - terms.l_pqt - terms.l_ptq, 2.0 * zeta)
        )
        return positives * eps + hinge * (1.0 - eps)
    positives = (terms.l_pq + terms.l_ppt + terms.l_qqt) / 3.0
    hinge = max(0.0, 2.0 * terms.l_pq - terms.l_pqt - terms.l_ptq + 2.0 * zeta)
    return eps * positives + (1.0 - eps) * hinge


def _halve_time(z: Var) -> Var:
    # (B, T, H) -> (B, ceil(T/2), H) via max pooling; lone element passes through.
    z = grad.transpose(z, (0, 2, 1))
    z = grad.maxpool1d(z, 2, 2, "halving")
    return grad.transpose(z, (0, 2, 1))


def hierarchical_triplet(
    z_p,
    z_q,
    zt_p,
    zt_q,
    cfg: LossConfig,
    terms_out: list | None = None,
    return_depth: bool = False,
):
    """Triplet objective averaged over ceil-halved time resolutions.

    All four inputs are aligned (B, T, H) overlap representations.  While
    T > 1: compute the five contextual losses, combine, accumulate, then halve
    every input's time axis.  The accumulator is divided by the number of
    iterations.  A T == 1 input never enters the loop and yields 0 with a
    warning.  ``terms_out``, when given, receives one float LossTerms per
    depth for diagnostics.
    """
    is_var = isinstance(z_p, Var)
    if any(isinstance(v, Var) != is_var for v in (z_q, zt_p, zt_q)):
        raise InvalidArgumentError("mixed Var/array loss inputs")
    unwrap = not is_var
    if unwrap:
        tape = Tape("float64")
        z_p, z_q, zt_p, zt_q = (tape.const(np.asarray(v)) for v in (z_p, z_q, zt_p, zt_q))
    elif any(v.tape is not z_p.tape for v in (z_q, zt_p, zt_q)):
        raise InvalidArgumentError("all four loss inputs must live on one tape")
    _check_btH(z_p, z_q)
    for other in (zt_p, zt_q):
        _check_btH(z_p, other)

    if z_p.shape[1] == 1:
        warnings.warn("hierarchical_triplet on T=1 input: returning 0 at depth 0")
        zero = z_p.tape.const(np.zeros(()))
        if return_depth:
            return (0.0, 0) if unwrap else (zero, 0)
        return 0.0 if unwrap else zero

    total = None
    depth = 0
    while z_p.shape[1] > 1:
        terms = LossTerms(
            l_pq=contextual_loss(z_p, z_q),
            l_ppt=contextual_loss(z_p, zt_p),
            l_qqt=contextual_loss(z_q, zt_q),
            l_pqt=contextual_loss(z_p, zt_q),
            l_ptq=contextual_loss(zt_p, z_q),
        )
        if terms_out is not None:
            terms_out.append(
                LossTerms(*(v.item() for v in (terms.l_pq, terms.l_ppt, terms.l_qqt, terms.l_pqt, terms.l_ptq)))
            )
        combined = triplet_combine(terms, cfg)
        total = combined if total is None else grad.add(total, combined)
        z_p, z_q, zt_p, zt_q = (_halve_time(v) for v in (z_p, z_q, zt_p, zt_q))
        depth += 1
    out = total / float(depth)
    if return_depth:
        return (out.item(), depth) if unwrap else (out, depth)
    return out.item() if unwrap else out

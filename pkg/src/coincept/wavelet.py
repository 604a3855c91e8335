"""Daubechies-D4 decimated wavelet filter bank.

Multilevel periodized decomposition, soft-threshold shrinkage of detail
coefficients, and exact inverse reconstruction.  Everything here is a pure
function over immutable float64 arrays and safe to call concurrently.

Conventions: analysis evaluates the circular convolution at even indices,
``a[n] = sum_m g[m] * x[(2n - m) mod N]`` (likewise ``d`` with the high-pass
``h``), giving ceil(N/2) coefficients per band.  Odd-length inputs are
extended by one sample circularly (append x[0]) before filtering and the
recorded per-level lengths let reconstruction trim back, so the round trip
is exact at every length >= 2.  Synthesis is the transpose operation:
upsample by two and filter with the time-reversed pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class FilterBank:
    """Analysis filters (g low-pass, h high-pass) and their reconstruction pair."""

    g: np.ndarray
    h: np.ndarray
    g_rec: np.ndarray
    h_rec: np.ndarray

    @property
    def length(self) -> int:
        return len(self.g)


def d4_filters() -> FilterBank:
    """The Daubechies D4 bank from its closed form.

    Low-pass taps are ((1 +/- sqrt 3)/(4 sqrt 2), (3 +/- sqrt 3)/(4 sqrt 2));
    the high-pass follows the quadrature-mirror relation
    h[k] = (-1)^k * g[K-1-k]; reconstruction filters are the time-reversed
    pair.
    """
    s3 = math.sqrt(3.0)
    norm = 4.0 * math.sqrt(2.0)
    g = np.array([(1 + s3) / norm, (3 + s3) / norm, (3 - s3) / norm, (1 - s3) / norm])
    k = len(g)
    h = np.array([(-1.0) ** i * g[k - 1 - i] for i in range(k)])
    return FilterBank(g=g, h=h, g_rec=g[::-1].copy(), h_rec=h[::-1].copy())


def max_level(m: int, k: int) -> int:
    """Deepest useful decomposition level, floor(log2(M/K)), clamped to >= 1."""
    if m < k:
        raise InvalidArgumentError(f"series length {m} shorter than filter length {k}")
    return max(1, int(math.floor(math.log2(m / k))))


@dataclass
class WaveletPyramid:
    """One channel's multilevel coefficients.

    ``level_lengths[j]`` records the length of the signal entering level j+1,
    so ``level_lengths[0]`` is the original length.
    """

    approx: np.ndarray
    details: list[np.ndarray]
    level_lengths: list[int]

    @property
    def original_length(self) -> int:
        return self.level_lengths[0]

    @property
    def levels(self) -> int:
        return len(self.details)


@dataclass(frozen=True)
class PerturbConfig:
    """Threshold fraction and decomposition depth for view perturbation."""

    alpha: float = 0.2
    levels: int | str = "auto"

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidArgumentError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.levels != "auto" and (not isinstance(self.levels, int) or self.levels < 1):
            raise InvalidArgumentError(f"levels must be 'auto' or a positive int, got {self.levels!r}")


def _analysis_even(x: np.ndarray, filt: np.ndarray) -> np.ndarray:
    # Circular convolution sampled at even indices; len(x) must be even.
    n = len(x)
    half = n // 2
    out = np.zeros(half)
    for m, c in enumerate(filt):
        idx = (2 * np.arange(half) - m) % n
        out += c * x[idx]
    return out


def dwt_step(signal: np.ndarray, bank: FilterBank) -> tuple[np.ndarray, np.ndarray]:
    """One periodized analysis step: (approx, detail), each ceil(n/2) long.

    Energy is conserved for even n (the even-length periodized transform is
    orthogonal); an odd n is extended one sample circularly first.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or len(x) < 2:
        raise InvalidArgumentError(f"dwt_step needs a 1-D signal of length >= 2, got shape {x.shape}")
    if len(x) % 2:
        x = np.concatenate([x, x[:1]])
    return _analysis_even(x, bank.g), _analysis_even(x, bank.h)


def idwt_step(
    approx: np.ndarray, detail: np.ndarray, bank: FilterBank, target_length: int
) -> np.ndarray:
    """Inverse of :func:`dwt_step`: upsample by two, filter, sum, trim.

    Scattering ``g[m]*a[n] + h[m]*d[n]`` back to position ``(2n - m) mod N``
    is exactly the transpose of the analysis matrix, which is orthogonal for
    even N, hence the exact round trip.
    """
    a = np.asarray(approx, dtype=np.float64)
    d = np.asarray(detail, dtype=np.float64)
    if a.shape != d.shape or a.ndim != 1:
        raise InvalidArgumentError(f"approx/detail shape mismatch: {a.shape} vs {d.shape}")
    n_even = 2 * len(a)
    if target_length not in (n_even, n_even - 1):
        raise InvalidArgumentError(
            f"target length {target_length} inconsistent with {len(a)} coefficients"
        )
    out = np.zeros(n_even)
    for m in range(bank.length):
        idx = (2 * np.arange(len(a)) - m) % n_even
        np.add.at(out, idx, bank.g[m] * a + bank.h[m] * d)
    return out[:target_length]


def decompose(channel: np.ndarray, levels: int, bank: FilterBank | None = None) -> WaveletPyramid:
    """Recursively split a channel into ``levels`` detail bands plus an approximation."""
    bank = bank or d4_filters()
    x = np.asarray(channel, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError(f"decompose expects one channel, got shape {x.shape}")
    if levels < 1:
        raise InvalidArgumentError(f"levels must be >= 1, got {levels}")
    cap = max_level(len(x), bank.length)
    if levels > cap:
        raise InvalidArgumentError(f"levels {levels} exceeds max useful level {cap}")
    details: list[np.ndarray] = []
    lengths: list[int] = []
    for _ in range(levels):
        lengths.append(len(x))
        x, d = dwt_step(x, bank)
        details.append(d)
    return WaveletPyramid(approx=x, details=details, level_lengths=lengths)


def reconstruct(pyramid: WaveletPyramid, bank: FilterBank | None = None) -> np.ndarray:
    """Invert :func:`decompose`, trimming each level to its recorded length."""
    bank = bank or d4_filters()
    if len(pyramid.details) != len(pyramid.level_lengths):
        raise InvalidArgumentError("pyramid has mismatched detail/length records")
    x = np.asarray(pyramid.approx, dtype=np.float64)
    for d, length in zip(reversed(pyramid.details), reversed(pyramid.level_lengths)):
        if len(d) != (length + 1) // 2 or len(x) != len(d):
            raise InvalidArgumentError(
                f"inconsistent level lengths: {len(x)}/{len(d)} coefficients for target {length}"
            )
        x = idwt_step(x, d, bank, length)
    return x


def soft_threshold(detail: np.ndarray, gamma: float) -> np.ndarray:
    """Sign-preserving shrinkage sign(d) * max(|d| - gamma, 0)."""
    if gamma < 0:
        raise InvalidArgumentError(f"gamma must be >= 0, got {gamma}")
    d = np.asarray(detail, dtype=np.float64)
    return np.sign(d) * np.maximum(np.abs(d) - gamma, 0.0)


def perturb(x: np.ndarray, cfg: PerturbConfig, bank: FilterBank | None = None) -> np.ndarray:
    """Low-pass-leaning perturbed view of a series.

    Per channel c the cutting threshold is gamma_c = alpha * max_t |x[t, c]|;
    every detail band of the full-depth decomposition is soft-thresholded
    with it before reconstruction.  A constant-zero channel has gamma 0 and
    is returned unchanged.  Output shape equals input shape.
    """
    bank = bank or d4_filters()
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidArgumentError(f"perturb expects (M,) or (M, N), got shape {arr.shape}")
    m = arr.shape[0]
    if m < bank.length:
        raise InvalidArgumentError(
            f"series length {m} shorter than filter length {bank.length}"
        )
    levels = cfg.levels if isinstance(cfg.levels, int) else max_level(m, bank.length)
    out = np.empty_like(arr)
    for c in range(arr.shape[1]):
        chan = arr[:, c]
        gamma = cfg.alpha * float(np.max(np.abs(chan)))
        if gamma == 0.0 and not np.any(chan):
            out[:, c] = chan
            continue
        pyr = decompose(chan, levels, bank)
        pyr.details = [soft_threshold(d, gamma) for d in pyr.details]
        out[:, c] = reconstruct(pyr, bank)
    return out[:, 0] if squeeze else out

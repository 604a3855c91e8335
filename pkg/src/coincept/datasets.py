"""Data ingestion and synthetic generators.

Readers are total over their inputs: they either parse or raise
:class:`ParseError` with a line number, never truncate silently.  Generators
are pure functions of (config, seed).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError, ParseError
from . import rng as rng_mod

ANOMALY_LABEL_COLUMN = "is_anomaly"


@dataclass
class LabeledDataset:
    """Per-series classification data with contiguous 0-based labels."""

    train: list[tuple[np.ndarray, int]]
    test: list[tuple[np.ndarray, int]]
    n_classes: int


@dataclass
class StreamDataset:
    """A timestamped multivariate stream with optional anomaly labels."""

    timestamps: np.ndarray  # (M,)
    values: np.ndarray  # (M, N)
    labels: Optional[np.ndarray] = None  # (M,) of {0, 1}
    train_frac: float = 0.6
    valid_frac: float = 0.2
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.timestamps) != len(self.values):
            raise InvalidArgumentError("timestamp/value length mismatch")
        if np.any(np.diff(self.timestamps) <= 0):
            raise InvalidArgumentError("timestamps must be strictly increasing")
        if self.labels is not None and len(self.labels) != len(self.values):
            raise InvalidArgumentError("label length must equal series length")

    @property
    def train_end(self) -> int:
        return int(len(self.values) * self.train_frac)

    @property
    def valid_end(self) -> int:
        return int(len(self.values) * (self.train_frac + self.valid_frac))


def _parse_ucr_file(path) -> tuple[np.ndarray, list[float]]:
    rows: list[list[float]] = []
    labels: list[float] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip("\n").strip("\r")
            if not line.strip():
                continue
            cells = line.split("\t")
            if len(cells) < 2:
                raise ParseError("expected a label plus at least one value", line=lineno)
            try:
                parsed = [float(c) for c in cells]
            except ValueError as exc:
                raise ParseError(f"non-numeric cell: {exc}", line=lineno) from exc
            if width is None:
                width = len(parsed)
            elif len(parsed) != width:
                raise ParseError(
                    f"ragged row: {len(parsed)} columns, expected {width}", line=lineno
                )
            label = parsed[0]
            if not float(label).is_integer():
                raise ParseError(f"non-integer label {label}", line=lineno)
            labels.append(label)
            rows.append(parsed[1:])
    if not rows:
        raise ParseError(f"no data rows in {path}")
    values = np.asarray(rows, dtype=np.float64)
    values = np.nan_to_num(values, nan=0.0)  # missing values become 0
    return values, labels


def read_ucr_tsv(train_path, test_path=None) -> LabeledDataset:
    """Read tab-separated label+values files, one per split.

    Labels from both splits are remapped together to contiguous 0-based ids.
    NaN cells (missing values / variable-length padding) are replaced by 0.
    """
    train_values, train_labels = _parse_ucr_file(train_path)
    if test_path is not None:
        test_values, test_labels = _parse_ucr_file(test_path)
    else:
        test_values, test_labels = np.zeros((0, train_values.shape[1])), []
    classes = sorted(set(train_labels) | set(test_labels))
    remap = {c: i for i, c in enumerate(classes)}
    train = [(row[:, None], remap[lab]) for row, lab in zip(train_values, train_labels)]
    test = [(row[:, None], remap[lab]) for row, lab in zip(test_values, test_labels)]
    return LabeledDataset(train=train, test=test, n_classes=len(classes))


def read_csv_wide(path, timestamp_column: str = "timestamp") -> StreamDataset:
    """Read a header-first wide CSV into a stream.

    A column named ``is_anomaly`` is treated as 0/1 truth labels rather than
    a feature.  Timestamps must be strictly increasing.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"empty file {path}") from None
        header = [h.strip() for h in header]
        if timestamp_column not in header:
            raise ParseError(f"missing timestamp column {timestamp_column!r} in {header}")
        ts_idx = header.index(timestamp_column)
        label_idx = header.index(ANOMALY_LABEL_COLUMN) if ANOMALY_LABEL_COLUMN in header else None
        feature_idx = [
            i for i in range(len(header)) if i not in (ts_idx, label_idx)
        ]
        timestamps, labels, rows = [], [], []
        for lineno, cells in enumerate(reader, start=2):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) != len(header):
                raise ParseError(
                    f"ragged row: {len(cells)} columns, expected {len(header)}", line=lineno
                )
            try:
                timestamps.append(float(cells[ts_idx]))
                if label_idx is not None:
                    labels.append(int(float(cells[label_idx])))
                rows.append([float(cells[i]) for i in feature_idx])
            except ValueError as exc:
                raise ParseError(f"non-numeric cell: {exc}", line=lineno) from exc
    if not rows:
        raise ParseError(f"no data rows in {path}")
    ts = np.asarray(timestamps)
    if np.any(np.diff(ts) <= 0):
        raise ParseError("timestamps are not strictly increasing")
    return StreamDataset(
        timestamps=ts,
        values=np.asarray(rows, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64) if label_idx is not None else None,
        feature_names=[header[i] for i in feature_idx],
    )


@dataclass(frozen=True)
class ToyConfig:
    """Sine carrier with region-specific contamination.

    First third: carrier plus a high-frequency tone at ``noise_periods[0]``
    samples/cycle.  Middle third: carrier plus a level shift ramping linearly
    from 0 up to ``ramp_amp``.  Last third: carrier plus a tone at
    ``noise_periods[1]``.
    """

    length: int = 900
    base_period: float = 300.0
    noise_periods: tuple[float, float] = (6.0, 4.0)
    noise_amps: tuple[float, float] = (0.3, 0.3)
    ramp_amp: float = 2.0
    seed: int = 0


def synth_toy(cfg: ToyConfig) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Generate the 1-channel toy series and its three region index ranges."""
    rng = rng_mod.stream(cfg.seed, "toy")
    t = np.arange(cfg.length, dtype=np.float64)
    x = np.sin(2 * math.pi * t / cfg.base_period + rng.uniform(0, 2 * math.pi))
    third = cfg.length // 3
    regions = [(0, third), (third, 2 * third), (2 * third, cfg.length)]
    for (lo, hi), period, amp in zip(
        (regions[0], regions[2]), cfg.noise_periods, cfg.noise_amps
    ):
        phase = rng.uniform(0, 2 * math.pi)
        x[lo:hi] += amp * np.sin(2 * math.pi * t[lo:hi] / period + phase)
    lo, hi = regions[1]
    x[lo:hi] += np.linspace(0.0, cfg.ramp_amp, hi - lo)
    return x[:, None], regions


@dataclass(frozen=True)
class ClassesConfig:
    """Three waveform classes (sine / square / sawtooth) with phase jitter."""

    n_per_class: int = 20
    length: int = 128
    period: float = 32.0
    sigma: float = 0.3
    seed: int = 0


def synth_classes(cfg: ClassesConfig) -> LabeledDataset:
    """Balanced 3-class dataset; one call builds one split."""
    rng = rng_mod.stream(cfg.seed, "classes")
    t = np.arange(cfg.length, dtype=np.float64)
    waveforms = (
        lambda ph: np.sin(2 * math.pi * t / cfg.period + ph),
        lambda ph: np.sign(np.sin(2 * math.pi * t / cfg.period + ph)),
        lambda ph: 2 * ((t / cfg.period + ph / (2 * math.pi)) % 1.0) - 1.0,
    )
    samples: list[tuple[np.ndarray, int]] = []
    for label, wave in enumerate(waveforms):
        for _ in range(cfg.n_per_class):
            phase = rng.uniform(0, 2 * math.pi)
            x = wave(phase) + cfg.sigma * rng.standard_normal(cfg.length)
            samples.append((x[:, None], label))
    return LabeledDataset(train=samples, test=[], n_classes=3)

"""Seeded random-number streams.

All randomness in the package flows from one root seed through named
sub-streams so individual components stay reproducible in isolation.  A
sub-stream seed is the low 64 bits of ``SHA-256(f"{name}:{root_seed}")``;
the generator itself is numpy's Philox4x64-10, a counter-based RNG, so a
stream's output is a pure function of (root seed, stream name).
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_seed(root_seed: int, name: str) -> int:
    """Derive a 64-bit sub-stream seed from a root seed and a stream name."""
    digest = hashlib.sha256(f"{name}:{int(root_seed)}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def stream(root_seed: int, name: str) -> np.random.Generator:
    """Counter-based generator for the named sub-stream of ``root_seed``."""
    return np.random.Generator(np.random.Philox(key=stream_seed(root_seed, name)))

"""Shared learner plumbing: standardization and a tiny deterministic RNG."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatchError


@dataclass(frozen=True)
class Standardizer:
    """Per-column center/scale from training data (population std)."""

    mean: np.ndarray
    scale: np.ndarray

    @staticmethod
    def fit(X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)  # ddof=0
        scale = np.where(scale > 0, scale, 1.0)
        return Standardizer(mean=mean, scale=scale)

    def apply(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.mean.shape[0]:
            raise DimensionMismatchError(f"expected {self.mean.shape[0]} features, got {X.shape[1]}")
        return (X - self.mean) / self.scale


def check_matrix(X, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} has no rows")
    if X.shape[1] == 0:
        raise ValueError(f"{name} has no columns")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def splitmix64(state: int) -> tuple[int, int]:
    """One step of the splitmix64 stream: (new_state, 64-bit output).

    Used where learners need cheap reproducible randomness that is
    bit-identical across platforms and execution backends.
    """
    state = (state + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    z = z ^ (z >> 31)
    return state, z


def mix_seed(*parts: int) -> int:
    """Deterministically fold several integers into one 63-bit seed.

    Kept non-negative and below 2**63 so the value round-trips through
    signed 64-bit integer interfaces.
    """
    state = 0x5DEECE66D
    for part in parts:
        state = (state ^ (int(part) & 0xFFFFFFFFFFFFFFFF)) & 0xFFFFFFFFFFFFFFFF
        state, _ = splitmix64(state)
    _, out = splitmix64(state)
    return out & 0x7FFFFFFFFFFFFFFF

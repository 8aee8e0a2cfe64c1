"""Stochastic K-level quantizer and the real <-> integer-level mapping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DecodeError

# Inputs this close to a grid point are treated as exactly on it.
_GRID_SNAP = 1e-9


@dataclass(frozen=True)
class QuantizerSpec:
    """Uniform grid of K points on [r1, r2].

    Attributes:
        K: Number of levels, at least 2.
        r1: Lower end of the range; maps to level 0.
        r2: Upper end of the range; maps to level K-1.
    """

    K: int
    r1: float = -1.0
    r2: float = 1.0

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ConfigError(f"quantizer needs integer K >= 2, got {self.K}")
        if not (np.isfinite(self.r1) and np.isfinite(self.r2)) or self.r1 >= self.r2:
            raise ConfigError(f"quantizer range must satisfy r1 < r2, got [{self.r1}, {self.r2}]")

    @property
    def delta(self) -> float:
        return (self.r2 - self.r1) / (self.K - 1)

    def level_value(self, l) -> np.ndarray | float:
        """T(l) = r1 + l * delta, with T(K-1) pinned to r2."""
        l = np.asarray(l)
        out = np.where(l == self.K - 1, self.r2, self.r1 + l * self.delta)
        return float(out) if out.ndim == 0 else out


def quantize(x, spec: QuantizerSpec, rng: np.random.Generator, strict: bool = False) -> np.ndarray:
    """Stochastically round ``x`` onto the grid and return integer levels.

    A value between T(l) and T(l+1) becomes l+1 with probability
    (x - T(l)) / delta and l otherwise, so the dequantized value is unbiased.
    Values sitting on a grid point are returned deterministically.

    Args:
        x: Scalar or array of reals.
        spec: Grid to quantize onto.
        rng: Source of the rounding coins; one uniform draw per element.
        strict: Raise instead of clipping values outside [r1, r2].

    Returns:
        int64 array of levels in [0, K-1] with the shape of ``x``.

    Raises:
        ValueError: if any entry is NaN or infinite, or out of range in strict mode.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("quantize received non-finite input")
    if strict and (np.any(x < spec.r1) or np.any(x > spec.r2)):
        raise ValueError(f"input outside [{spec.r1}, {spec.r2}] in strict mode")
    x = np.clip(x, spec.r1, spec.r2)
    t = (x - spec.r1) / spec.delta
    nearest = np.rint(t)
    t = np.where(np.abs(t - nearest) <= _GRID_SNAP, nearest, t)
    low = np.clip(np.floor(t), 0, spec.K - 2)
    frac = t - low
    coins = rng.random(size=x.shape)
    return (low + (coins < frac)).astype(np.int64)


def dequantize_level(l, spec: QuantizerSpec):
    """Map integer level(s) back to grid values.

    Raises:
        ValueError: if a level is outside [0, K-1].
    """
    arr = np.asarray(l)
    if np.any(arr < 0) or np.any(arr > spec.K - 1):
        raise ValueError(f"level outside [0, {spec.K - 1}]")
    return spec.level_value(arr)


def dequantize_aggregate(v, survivor_count: int, spec: QuantizerSpec):
    """Turn a sum of |U| integer levels into the matching sum of reals.

    The result is |U| * r1 + v * delta. A sum outside [0, |U|(K-1)] cannot
    come from honest levels and points to a decode bug, so it raises.
    """
    arr = np.asarray(v, dtype=np.int64)
    hi = survivor_count * (spec.K - 1)
    if survivor_count < 0 or np.any(arr < 0) or np.any(arr > hi):
        raise DecodeError(f"aggregate outside [0, {hi}] for |U|={survivor_count}")
    out = survivor_count * spec.r1 + arr * spec.delta
    return float(out) if np.ndim(out) == 0 else out

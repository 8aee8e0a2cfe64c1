"""Coordinate-wise median over decoded coalition segments, and attack models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ProtocolError

ATTACK_KINDS = ("none", "gaussian", "sign_flip", "label_flip")


@dataclass(frozen=True)
class AttackSpec:
    """Which users misbehave and how.

    Attributes:
        kind: One of ``none``, ``gaussian``, ``sign_flip``, ``label_flip``.
        byzantine: Ids of the misbehaving users.
        sigma: Std of the Gaussian replacement.
        multiplier: Scale applied by sign-flip users.
        label_multiplier: Scale applied to updates trained on flipped labels.
    """

    kind: str = "none"
    byzantine: tuple[int, ...] = ()
    sigma: float = 5.0
    multiplier: float = -5.0
    label_multiplier: float = 30.0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r}; expected one of {ATTACK_KINDS}")
        for v in (self.sigma, self.multiplier, self.label_multiplier):
            if not np.isfinite(v):
                raise ConfigError("attack parameters must be finite")
        object.__setattr__(self, "byzantine", tuple(sorted(set(int(b) for b in self.byzantine))))

    def validate(self, N: int) -> None:
        if len(self.byzantine) > N or any(not 0 <= b < N for b in self.byzantine):
            raise ConfigError(f"byzantine ids {self.byzantine} do not fit N={N}")

    @property
    def active(self) -> bool:
        return self.kind != "none" and bool(self.byzantine)


def max_byzantine(group_count: int) -> int:
    """Largest tolerated number of Byzantine users, ceil(G/4) - 1."""
    if group_count < 1:
        raise ConfigError(f"group count must be >= 1, got {group_count}")
    return -(-int(group_count) // 4) - 1


def coordinate_median(segments: Sequence) -> np.ndarray:
    """Element-wise median; an even count averages the two middle values."""
    if len(segments) == 0:
        raise ValueError("coordinate_median needs at least one segment")
    stack = np.vstack([np.asarray(s, dtype=np.float64) for s in segments])
    return np.median(stack, axis=0)


def inject_attack(update, spec: AttackSpec, rng: np.random.Generator) -> np.ndarray:
    """Corrupt one Byzantine user's update.

    ``label_flip`` only applies the multiplier: the flipped labels themselves
    must already have been used to compute ``update``.
    """
    x = np.asarray(update, dtype=np.float64)
    if spec.kind == "none":
        return x.copy()
    if spec.kind == "gaussian":
        return rng.normal(0.0, spec.sigma, size=x.shape)
    if spec.kind == "sign_flip":
        return x * spec.multiplier
    if spec.kind == "label_flip":
        return x * spec.label_multiplier
    raise ConfigError(f"unknown attack kind {spec.kind!r}")


def robust_aggregate(outcome) -> np.ndarray:
    """Median-of-coalition-averages estimate of the mean update, length m.

    At each level the coalitions with survivors are averaged (sum divided by
    survivor count) and the coordinate-wise median is taken across them.
    """
    plan = outcome.plan
    parts = []
    for l in range(plan.Z):
        avgs = [d.average for d in outcome.level_segments(l) if d.survivors]
        if not avgs:
            raise ProtocolError(f"no coalition survived at level {l}")
        parts.append(coordinate_median(avgs))
    return np.concatenate(parts)[:plan.m]


def contaminated_segments(plan, byzantine: Iterable[int]) -> set[tuple[int, int]]:
    """(level, coalition) pairs that include at least one Byzantine user."""
    bad = set(byzantine)
    out = set()
    for row in plan.slots:
        for slot in row:
            if bad.intersection(slot.users):
                out.add((slot.level, slot.index))
    return out

"""Closed-form bounds, operation counts and Monte-Carlo checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .crypto import ceil_log2
from .errors import ConfigError
from .quantization import QuantizerSpec, quantize


@dataclass(frozen=True)
class ErrorBoundInput:
    """Parameters of the quantization error bound.

    Give either ``n`` (users per group, one column per group) or ``L`` and
    ``nbar`` (subgroup counts and subgroup size).

    Attributes:
        N: Total users.
        G: Number of groups (quantizers).
        m: Model length.
        K: Quantizer levels per group, non-decreasing.
        n: Users per group.
        L: Subgroups per group.
        nbar: Users per subgroup.
        r1: Lower range bound.
        r2: Upper range bound.
    """

    N: int
    G: int
    m: int
    K: tuple[int, ...]
    n: int | None = None
    L: tuple[int, ...] | None = None
    nbar: int | None = None
    r1: float = -1.0
    r2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "K", tuple(int(k) for k in self.K))
        if self.L is not None:
            object.__setattr__(self, "L", tuple(int(v) for v in self.L))
        if len(self.K) != self.G:
            raise ConfigError(f"need {self.G} quantizer levels, got {len(self.K)}")
        if any(k < 2 for k in self.K):
            raise ConfigError("every quantizer needs K >= 2")
        if any(b < a for a, b in zip(self.K, self.K[1:])):
            raise ConfigError("quantizer levels must be non-decreasing")
        if self.r1 >= self.r2:
            raise ConfigError("need r1 < r2")
        if self.L is None:
            if self.n is None or self.n * self.G != self.N:
                raise ConfigError(f"need N = n*G, got N={self.N}, n={self.n}, G={self.G}")
        else:
            if len(self.L) != self.G or any(v < 1 for v in self.L):
                raise ConfigError("L must have one positive entry per group")
            if self.nbar is None or self.nbar * sum(self.L) != self.N:
                raise ConfigError(f"need N = nbar * sum(L), got N={self.N}, nbar={self.nbar}, L={self.L}")

    @property
    def scale(self) -> float:
        return (self.r2 - self.r1) ** 2 / (4 * self.N ** 2)


@dataclass(frozen=True)
class SigmaResult:
    """Bound value and the number of user-segments quantized with each K."""

    value: float
    segments_per_quantizer: tuple[int, ...]


def sigma_heterosag(inp: ErrorBoundInput) -> SigmaResult:
    """Error bound for G equal groups with one column each."""
    if inp.L is not None and any(v != 1 for v in inp.L):
        raise ConfigError("input has subgroups; use sigma_heterosag_plus")
    n = inp.n if inp.n is not None else inp.nbar
    G = inp.G
    counts = tuple((2 * (G - g) - 1) * n for g in range(G))
    total = sum((2 * (G - g) - 1) / (K - 1) ** 2 for g, K in enumerate(inp.K))
    return SigmaResult(inp.scale * inp.m / G * n * total, counts)


def sigma_heterosag_plus(inp: ErrorBoundInput) -> SigmaResult:
    """Error bound when group g is split into L[g] subgroups of nbar users."""
    if inp.L is None:
        raise ConfigError("sigma_heterosag_plus needs L and nbar")
    Z = sum(inp.L)
    total, counts, Zprev = 0.0, [], 0
    for g, (Lg, K) in enumerate(zip(inp.L, inp.K)):
        c = sum(2 * (Z - Zprev - j) - 1 for j in range(Lg))
        counts.append(c * inp.nbar)
        total += c / (K - 1) ** 2
        Zprev += Lg
    return SigmaResult(inp.scale * inp.m / Z * inp.nbar * total, tuple(counts))


def sigma_secag(N: int, m: int, K: int, r1: float = -1.0, r2: float = 1.0) -> float:
    """Bound when every user quantizes its whole update with one K."""
    return (r2 - r1) ** 2 / (4 * N ** 2) * m * N / (K - 1) ** 2


def sigma_from_plan(plan) -> float:
    """Bound obtained by walking a RoundPlan user by user, level by level.

    Uses the padded segment length, so it equals the closed forms when Z | m.
    """
    q0 = plan.quantizers[0]
    total = 0.0
    for u in range(plan.N):
        for l in range(plan.Z):
            total += 1.0 / (plan.slot(u, l).spec.K - 1) ** 2
    return (q0.r2 - q0.r1) ** 2 / (4 * plan.N ** 2) * plan.seg_len * total


def _level_specs(plan) -> np.ndarray:
    """K of the quantizer each (user, element) uses, shape (N, padded m)."""
    out = np.empty((plan.N, plan.seg_len * plan.Z), dtype=np.int64)
    for u in range(plan.N):
        for l in range(plan.Z):
            out[u, l * plan.seg_len:(l + 1) * plan.seg_len] = plan.slot(u, l).spec.K
    return out


def expected_quantization_error(plan, xs: np.ndarray) -> float:
    """Exact E||p_bar - p||^2 for fixed inputs ``xs`` (shape N x m)."""
    xs = np.asarray(xs, dtype=np.float64)
    total = 0.0
    for u in range(plan.N):
        for l in range(plan.Z):
            spec = plan.slot(u, l).spec
            seg = xs[u, l * plan.seg_len:(l + 1) * plan.seg_len]
            t = (np.clip(seg, spec.r1, spec.r2) - spec.r1) / spec.delta
            frac = t - np.clip(np.floor(t), 0, spec.K - 2)
            total += float(np.sum(frac * (1 - frac))) * spec.delta ** 2
    return total / plan.N ** 2


def monte_carlo_quantization_error(plan, xs: np.ndarray, trials: int,
                                   rng: np.random.Generator, chunk: int = 2000) -> tuple[float, float]:
    """Empirical E||p_bar - p||^2 with its standard error.

    ``xs`` has shape (N, m); each trial re-quantizes every user's vector
    with the quantizers the plan assigns.
    """
    xs = np.asarray(xs, dtype=np.float64)
    N = plan.N
    padded = np.zeros((N, plan.seg_len * plan.Z))
    padded[:, :plan.m] = xs
    padded = padded[:, :plan.m]
    specs = {}
    for u in range(N):
        for l in range(plan.Z):
            lo, hi = l * plan.seg_len, min((l + 1) * plan.seg_len, plan.m)
            if lo < hi:
                specs.setdefault(plan.slot(u, l).spec, []).append((u, lo, hi))
    samples = []
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        err = np.zeros((k, plan.m))
        for spec, spans in specs.items():
            for u, lo, hi in spans:
                x = padded[u, lo:hi]
                q = quantize(np.broadcast_to(x, (k, hi - lo)), spec, rng)
                err[:, lo:hi] += spec.r1 + q * spec.delta - x
        samples.append(np.sum((err / N) ** 2, axis=1))
        done += k
    s = np.concatenate(samples)
    return float(s.mean()), float(s.std(ddof=1) / np.sqrt(len(s)))


# --------------------------------------------------------------------------
# Privacy leakage
# --------------------------------------------------------------------------


def privacy_leakage_prob(nbar: int, p: float) -> float:
    """P(exactly one of nbar users survives) = nbar (1-p) p^(nbar-1)."""
    if nbar < 1:
        raise ConfigError("subgroup size must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ConfigError("dropout probability must lie in [0, 1]")
    return nbar * (1 - p) * p ** (nbar - 1)


def empirical_leakage_frequency(nbar: int, p: float, draws: int, rng: np.random.Generator) -> float:
    """Fraction of simulated subgroups with exactly one survivor."""
    alive = rng.random((draws, nbar)) >= p
    return float(np.mean(alive.sum(axis=1) == 1))


# --------------------------------------------------------------------------
# Bandwidth and operation counts
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BandwidthExpansion:
    ratio: float
    encoded_bits: int
    clear_bits: int


def bandwidth_expansion(coalition_size: int, K: int) -> BandwidthExpansion:
    """ceil(log2(|S|(K-1)+1)) / ceil(log2 K)."""
    if coalition_size < 1 or K < 2:
        raise ConfigError("need |S| >= 1 and K >= 2")
    enc = ceil_log2(coalition_size * (K - 1) + 1)
    clear = ceil_log2(K)
    return BandwidthExpansion(enc / clear, enc, clear)


@dataclass
class PlanBandwidth:
    """Expansion seen by one user across all levels of a plan."""

    per_level: list[BandwidthExpansion]
    weighted: float
    star_level: float | None


def plan_bandwidth(plan, user: int) -> PlanBandwidth:
    """Per-level ratios for ``user`` and the element-weighted average.

    The weighted average is total encoded bits over total clear bits.
    """
    per, star = [], None
    for l in range(plan.Z):
        slot = plan.slot(user, l)
        be = bandwidth_expansion(len(slot.users), slot.spec.K)
        per.append(be)
        if len(slot.columns) == 1:
            star = be.ratio
    weighted = sum(b.encoded_bits for b in per) / sum(b.clear_bits for b in per)
    return PlanBandwidth(per, weighted, star)


@dataclass
class MaskCounts:
    """PRG expansions and modular additions a user performs per round.

    Attributes:
        pairwise_per_element: Pairwise masks on each element, by level.
        expansions: PRG calls (private + pairwise) summed over levels.
        element_ops: Mask additions over all elements.
    """

    pairwise_per_element: list[int]
    expansions: int
    element_ops: int


def count_mask_operations(plan, user: int) -> MaskCounts:
    per_level, expansions, ops = [], 0, 0
    for l in range(plan.Z):
        slot = plan.slot(user, l)
        k = len(slot.users) - 1
        per_level.append(k)
        expansions += k + 1
        ops += (k + 1) * plan.seg_len
    return MaskCounts(per_level, expansions, ops)


def count_secag_operations(N: int, m: int) -> MaskCounts:
    return MaskCounts([N - 1], N, N * m)


def scheme_comparison(plan, p: float = 0.1) -> list[dict]:
    """SecAg vs this plan: error bound, bandwidth, mask work, leakage."""
    from .plan import inference_robustness_bruteforce, inference_robustness_closed_form

    N, m = plan.N, plan.m
    K0 = plan.quantizers[0]
    rows = []
    secag_bw = bandwidth_expansion(N, K0.K)
    rows.append({
        "scheme": "SecAg",
        "quantizers": f"K={K0.K} for all",
        "error_bound": sigma_secag(N, m, K0.K, K0.r1, K0.r2),
        "bandwidth_expansion": secag_bw.ratio,
        "pairwise_masks_per_element": N - 1,
        "mask_element_ops_per_user": N * m,
        "inference_robustness": 1.0,
        "leakage_probability": 0.0,
    })
    Z = plan.Z
    sizes = [len(c) for c in plan.topology.column_members]
    nbar = min(sizes)
    try:
        delta = float(inference_robustness_bruteforce(plan.coalitions.matrix)[0]) if Z > 1 else 1.0
    except ValueError:
        delta = float(inference_robustness_closed_form(Z))
    ops = [count_mask_operations(plan, u) for u in range(N)]
    bws = [plan_bandwidth(plan, u).weighted for u in range(N)]
    rows.append({
        "scheme": "HeteroSAg",
        "quantizers": "K=" + ",".join(str(q.K) for q in plan.quantizers),
        "error_bound": sigma_from_plan(plan),
        "bandwidth_expansion": float(np.mean(bws)),
        "pairwise_masks_per_element": max(max(o.pairwise_per_element) for o in ops),
        "mask_element_ops_per_user": max(o.element_ops for o in ops),
        "inference_robustness": delta,
        "leakage_probability": privacy_leakage_prob(nbar, p),
    })
    return rows


# --------------------------------------------------------------------------
# Communication time
# --------------------------------------------------------------------------


@dataclass
class CommunicationReport:
    """Per-group upload cost and the resulting round time.

    Attributes:
        bits_per_group: Bits one user of each group sends over all rounds.
        time_per_group: bits / rate, in seconds.
        total_time: Maximum over groups.
    """

    bits_per_group: list[float]
    time_per_group: list[float]
    total_time: float = field(init=False)

    def __post_init__(self):
        self.total_time = max(self.time_per_group)


def communication_report(plan, rates_bps: Sequence[float], rounds: int = 1,
                         download_bits_per_element: int = 0) -> CommunicationReport:
    """Slowest-group communication time for ``rounds`` rounds.

    Each group's cost is that of its first user (all users in a group send
    the same amount). ``download_bits_per_element`` adds the broadcast
    global model to every user's cost; zero counts uploads only.
    """
    if len(rates_bps) != plan.topology.G:
        raise ConfigError(f"need one rate per group ({plan.topology.G})")
    bits, times = [], []
    for g in range(plan.topology.G):
        col = plan.topology.column_groups.index(g)
        u = plan.topology.column_members[col][0]
        b = rounds * (plan.bits_per_user(u) + download_bits_per_element * plan.m)
        bits.append(float(b))
        times.append(b / rates_bps[g])
    return CommunicationReport(bits, times)

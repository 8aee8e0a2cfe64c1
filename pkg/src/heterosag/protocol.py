"""One secure-aggregation round executed segment by segment.

Users are arranged in columns (groups or subgroups). The coalition plan says,
for each segment level, which columns quantize, mask and decode that segment
together. Each coalition runs an independent masked-sum instance in its own
ring Z_R with R = |S|(K-1)+1.

User ids are 0-based; the Shamir evaluation point of user ``i`` is ``i+1``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .crypto import (SHARE_PRIME, PrivateKey, PublicKey, RingModulus, SecretShare,
                     ShareBundle, ceil_log2, derive_pairwise_seed, generate_keypair,
                     prg_expand, shamir_reconstruct, shamir_share)
from .errors import ConfigError, ProtocolError, ReconstructionError, ShapeError
from .plan import STAR, CoalitionPlan, SSMatrix, build_ss_matrix, build_ss_matrix_hetero, coalition_plan
from .quantization import QuantizerSpec, dequantize_aggregate, quantize

# Stream tags keep private-mask and pairwise-mask expansions apart.
_PRIVATE_TAG = 1
_PAIRWISE_TAG = 2


# --------------------------------------------------------------------------
# Topology and per-round plan
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Topology:
    """How users are arranged into columns.

    Attributes:
        column_members: User ids in each column.
        column_labels: ``g`` for plain groups, ``(g, d)`` for subgroups.
        column_groups: Quantizer group of each column.
        subgroups: Number of columns in each group (the L vector).
    """

    column_members: tuple[tuple[int, ...], ...]
    column_labels: tuple
    column_groups: tuple[int, ...]
    subgroups: tuple[int, ...]

    def __post_init__(self):
        ids = [u for col in self.column_members for u in col]
        if not ids:
            raise ConfigError("topology has no users")
        if sorted(ids) != list(range(len(ids))):
            raise ConfigError("user ids must be 0..N-1, each in exactly one column")
        if any(len(c) == 0 for c in self.column_members):
            raise ConfigError("every column needs at least one user")

    @classmethod
    def from_uniform(cls, G: int, n: int) -> "Topology":
        """G groups of n users each."""
        if G < 1 or n < 1:
            raise ConfigError(f"need G >= 1 and n >= 1, got G={G}, n={n}")
        return cls.from_group_sizes([n] * G)

    @classmethod
    def from_group_sizes(cls, sizes: Sequence[int]) -> "Topology":
        """One column per group; groups may differ in size."""
        sizes = [int(s) for s in sizes]
        if not sizes or any(s < 1 for s in sizes):
            raise ConfigError(f"group sizes must be positive, got {sizes}")
        members, start = [], 0
        for s in sizes:
            members.append(tuple(range(start, start + s)))
            start += s
        G = len(sizes)
        return cls(tuple(members), tuple(range(G)), tuple(range(G)), (1,) * G)

    @classmethod
    def from_subgroups(cls, L: Sequence[int], nbar: int) -> "Topology":
        """Group g split into L[g] subgroups of ``nbar`` users each."""
        L = [int(v) for v in L]
        if not L or any(v < 1 for v in L):
            raise ConfigError(f"subgroup counts must be positive, got {L}")
        if nbar < 1:
            raise ConfigError(f"subgroup size must be >= 1, got {nbar}")
        members, labels, groups, start = [], [], [], 0
        for g, Lg in enumerate(L):
            for d in range(Lg):
                members.append(tuple(range(start, start + nbar)))
                labels.append((g, d))
                groups.append(g)
                start += nbar
        return cls(tuple(members), tuple(labels), tuple(groups), tuple(L))

    @property
    def N(self) -> int:
        return sum(len(c) for c in self.column_members)

    @property
    def G(self) -> int:
        return len(self.subgroups)

    @property
    def Z(self) -> int:
        return len(self.column_members)

    def column_of(self, user: int) -> int:
        for c, members in enumerate(self.column_members):
            if user in members:
                return c
        raise ConfigError(f"unknown user {user}")

    def group_of(self, user: int) -> int:
        return self.column_groups[self.column_of(user)]

    def matrix(self) -> SSMatrix:
        if self.Z == 1:
            return SSMatrix(((STAR,),), self.column_labels, self.column_groups)
        if all(v == 1 for v in self.subgroups):
            return build_ss_matrix(self.Z)
        return build_ss_matrix_hetero(self.subgroups)


@dataclass(frozen=True)
class CoalitionSlot:
    """One coalition at one level, resolved down to users and a ring."""

    level: int
    index: int
    columns: tuple[int, ...]
    users: tuple[int, ...]
    quantizer: int
    spec: QuantizerSpec
    R: int

    @property
    def bits(self) -> int:
        return ceil_log2(self.R)


@dataclass(frozen=True)
class RoundPlan:
    """Everything the users and the server agree on before a round.

    Build with :meth:`build`. ``seg_len`` is ceil(m / Z); the last segment is
    zero padded up to ``seg_len * Z`` and the pad is dropped on reassembly.
    """

    topology: Topology
    coalitions: CoalitionPlan
    quantizers: tuple[QuantizerSpec, ...]
    m: int
    seg_len: int
    slots: tuple[tuple[CoalitionSlot, ...], ...] = field(repr=False)
    user_slot: tuple[tuple[int, ...], ...] = field(repr=False)

    @classmethod
    def build(cls, topology: Topology, quantizers: Sequence[QuantizerSpec], m: int) -> "RoundPlan":
        quantizers = tuple(quantizers)
        if len(quantizers) != topology.G:
            raise ConfigError(f"need one quantizer per group ({topology.G}), got {len(quantizers)}")
        if any(b.K < a.K for a, b in zip(quantizers, quantizers[1:])):
            raise ConfigError("quantizer levels must not decrease from lower to higher groups")
        if m < 1:
            raise ConfigError(f"model length must be >= 1, got {m}")
        plan = coalition_plan(topology.matrix())
        Z = plan.Z
        seg_len = -(-m // Z)
        slots, user_slot = [], [[-1] * Z for _ in range(topology.N)]
        for l, coals in enumerate(plan.levels):
            row = []
            for k, c in enumerate(coals):
                users = tuple(sorted(u for col in c.members for u in topology.column_members[col]))
                spec = quantizers[c.quantizer]
                R = RingModulus.for_coalition(len(users), spec.K).R
                row.append(CoalitionSlot(l, k, c.members, users, c.quantizer, spec, R))
                for u in users:
                    user_slot[u][l] = k
            slots.append(tuple(row))
        return cls(topology, plan, quantizers, int(m), seg_len, tuple(slots),
                   tuple(tuple(r) for r in user_slot))

    @property
    def Z(self) -> int:
        return self.coalitions.Z

    @property
    def N(self) -> int:
        return self.topology.N

    def slot(self, user: int, level: int) -> CoalitionSlot:
        return self.slots[level][self.user_slot[user][level]]

    def bits_per_user(self, user: int) -> int:
        """Upload size in bits: seg_len * sum over levels of ceil(log2 R)."""
        return self.seg_len * sum(self.slot(user, l).bits for l in range(self.Z))


# --------------------------------------------------------------------------
# Key setup
# --------------------------------------------------------------------------


def default_threshold(N: int) -> int:
    return math.ceil(N / 2) + 1


@dataclass
class UserState:
    """Per-user key material and shares held on behalf of others.

    Attributes:
        id: 0-based user id.
        column: Column (group or subgroup) the user sits in.
        group: Quantizer group.
        subgroup: Position inside the group.
        pairwise_seeds: Seed agreed with every other user, keyed by their id.
        private_seed: The user's own b_i.
        held_shares: Shares this user holds, keyed by the owner's id.
        outgoing_shares: Shares this user dealt, keyed by recipient id.
    """

    id: int
    column: int
    group: int
    subgroup: int
    private_key: PrivateKey = field(repr=False)
    public_key: PublicKey
    private_seed: int = field(repr=False)
    pairwise_seeds: dict[int, int] = field(default_factory=dict, repr=False)
    held_shares: dict[int, ShareBundle] = field(default_factory=dict, repr=False)
    outgoing_shares: dict[int, ShareBundle] = field(default_factory=dict, repr=False)
    threshold: int = 0

    @property
    def incoming_count(self) -> int:
        return sum(1 for owner in self.held_shares if owner != self.id)


def setup_round(topology: Topology, rng: np.random.Generator, threshold: int | None = None,
                share_prime: int = SHARE_PRIME) -> list[UserState]:
    """Key agreement and secret sharing for all N users.

    Every user agrees a seed with every other user and Shamir-shares both
    its private seed and its private key to all N users, itself included.

    Args:
        topology: User arrangement.
        rng: Randomness for keys, seeds and share polynomials.
        threshold: Reconstruction threshold; defaults to ceil(N/2)+1.
        share_prime: Field for the shares.
    """
    N = topology.N
    if N < 2:
        raise ConfigError("secure aggregation needs at least 2 users")
    t = default_threshold(N) if threshold is None else int(threshold)
    if not 1 <= t <= N:
        raise ConfigError(f"threshold {t} infeasible for N={N}")

    keys = [generate_keypair(rng) for _ in range(N)]
    users = []
    for u in range(N):
        col = topology.column_of(u)
        label = topology.column_labels[col]
        sub = label[1] if isinstance(label, tuple) else 0
        b = int(rng.integers(0, min(share_prime, 2**62), dtype=np.int64))
        users.append(UserState(u, col, topology.column_groups[col], sub, keys[u][0], keys[u][1],
                               b, threshold=t))
    for i in range(N):
        for j in range(i + 1, N):
            s = derive_pairwise_seed(keys[i][0], keys[j][1])
            users[i].pairwise_seeds[j] = s
            users[j].pairwise_seeds[i] = s
    for owner in users:
        sk_value = owner.private_key.value % share_prime
        b_sh = shamir_share(owner.private_seed, t, N, owner=owner.id, rng=rng, prime=share_prime)
        k_sh = shamir_share(sk_value, t, N, owner=owner.id, rng=rng, prime=share_prime)
        for holder in users:
            bundle = ShareBundle(owner.id, b_sh[holder.id], k_sh[holder.id])
            holder.held_shares[owner.id] = bundle
            owner.outgoing_shares[holder.id] = bundle
    return users


# --------------------------------------------------------------------------
# Encoding
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MaskedSegment:
    """What one user uploads for one segment level."""

    round: int
    user: int
    level: int
    coalition: int
    R: int
    payload: np.ndarray = field(repr=False)

    @property
    def bits(self) -> int:
        return len(self.payload) * ceil_log2(self.R)


def private_mask(seed: int, length: int, R: int, round_index: int, level: int) -> np.ndarray:
    return prg_expand(seed, length, R, (_PRIVATE_TAG, round_index, level))


def pairwise_mask(seed: int, length: int, R: int, round_index: int, level: int) -> np.ndarray:
    return prg_expand(seed, length, R, (_PAIRWISE_TAG, round_index, level))


def pad_update(update, plan: RoundPlan) -> np.ndarray:
    x = np.asarray(update, dtype=np.float64).ravel()
    if x.shape[0] != plan.m:
        raise ShapeError(f"model has length {x.shape[0]}, plan expects {plan.m}")
    out = np.zeros(plan.seg_len * plan.Z)
    out[:plan.m] = x
    return out


def quantize_update(user: int, update, plan: RoundPlan, rng: np.random.Generator) -> list[np.ndarray]:
    """Integer levels for each segment, using each level's coalition quantizer."""
    x = pad_update(update, plan)
    s = plan.seg_len
    return [quantize(x[l * s:(l + 1) * s], plan.slot(user, l).spec, rng) for l in range(plan.Z)]


def apply_masks(levels: np.ndarray, user: UserState, slot: CoalitionSlot, round_index: int) -> np.ndarray:
    """y = x + PRG(b_i) + sum_{j>i} PRG(s_ij) - sum_{j<i} PRG(s_ij) mod R over coalition peers."""
    R, n = slot.R, len(levels)
    y = (np.asarray(levels, dtype=np.int64) + private_mask(user.private_seed, n, R, round_index, slot.level)) % R
    for j in slot.users:
        if j == user.id:
            continue
        z = pairwise_mask(user.pairwise_seeds[j], n, R, round_index, slot.level)
        y = (y + z) % R if user.id < j else (y - z) % R
    return y


def encode_segments(user: UserState, update, plan: RoundPlan, rng: np.random.Generator,
                    round_index: int = 0, return_levels: bool = False):
    """Quantize and mask every segment of one user's update.

    Args:
        user: The encoding user.
        update: Real vector of length ``plan.m``.
        plan: Round plan.
        rng: Stream for the quantizer coins. Give each user its own.
        round_index: Separates mask streams between rounds.
        return_levels: Also return the clear integer levels (for oracles).

    Returns:
        List of MaskedSegment in level order, or ``(segments, levels)``.
    """
    levels = quantize_update(user.id, update, plan, rng)
    out = []
    for l, lv in enumerate(levels):
        slot = plan.slot(user.id, l)
        out.append(MaskedSegment(round_index, user.id, l, slot.index, slot.R,
                                 apply_masks(lv, user, slot, round_index)))
    return (out, levels) if return_levels else out


# --------------------------------------------------------------------------
# Share collection
# --------------------------------------------------------------------------


@dataclass
class CollectedShares:
    """Shares revealed by survivors: private-seed shares for survivors,
    private-key shares for dropped users, never both for the same owner."""

    private_seed: dict[int, list[SecretShare]] = field(default_factory=dict)
    private_key: dict[int, list[SecretShare]] = field(default_factory=dict)
    responders: tuple[int, ...] = ()


def collect_shares(users: Sequence[UserState], dropped: Iterable[int],
                   responders: Iterable[int] | None = None) -> CollectedShares:
    """Ask the surviving users for the shares the server is entitled to.

    Raises:
        ReconstructionError: if fewer than ``threshold`` users respond.
    """
    dropped = set(int(d) for d in dropped)
    ids = [u.id for u in users]
    if responders is None:
        responders = [i for i in ids if i not in dropped]
    responders = sorted(set(responders) - dropped)
    t = users[0].threshold
    if len(responders) < t:
        raise ReconstructionError(f"{len(responders)} survivors respond, threshold is {t}")
    out = CollectedShares(responders=tuple(responders))
    by_id = {u.id: u for u in users}
    for owner in ids:
        field_name = "private_key" if owner in dropped else "private_seed"
        bucket = getattr(out, field_name)
        bucket[owner] = [getattr(by_id[r].held_shares[owner], field_name) for r in responders]
    return out


# --------------------------------------------------------------------------
# Decoding
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DecodedSegment:
    """Aggregate of one coalition at one level.

    ``int_sum`` is the exact sum of survivor levels; ``real_sum`` is its
    dequantized value, all zeros when nobody survived.
    """

    level: int
    coalition: int
    users: tuple[int, ...]
    survivors: tuple[int, ...]
    R: int
    spec: QuantizerSpec
    int_sum: np.ndarray = field(repr=False)
    real_sum: np.ndarray = field(repr=False)

    @property
    def average(self) -> np.ndarray | None:
        if not self.survivors:
            return None
        return self.real_sum / len(self.survivors)


@dataclass
class RoundOutcome:
    """Everything the server learns from one round."""

    plan: RoundPlan
    round: int
    survivors: tuple[int, ...]
    dropped: tuple[int, ...]
    decoded: dict[tuple[int, int], DecodedSegment]
    leakage_events: list[tuple[int, int, int]] = field(default_factory=list)
    empty_coalitions: list[tuple[int, int]] = field(default_factory=list)
    bits_per_user: dict[int, int] = field(default_factory=dict)

    def level_segments(self, level: int) -> list[DecodedSegment]:
        return [d for (l, _), d in sorted(self.decoded.items()) if l == level]

    def survivors_per_level(self) -> list[int]:
        return [sum(len(d.survivors) for d in self.level_segments(l)) for l in range(self.plan.Z)]


def _self_check_pk(sk: PrivateKey, pk: PublicKey) -> None:
    if sk.public_key().value != pk.value:
        raise ReconstructionError("reconstructed private key does not match the public key")


def server_decode(segments: Iterable[MaskedSegment], plan: RoundPlan,
                  public_keys: Mapping[int, PublicKey], dropped: Iterable[int],
                  shares: CollectedShares, round_index: int = 0) -> RoundOutcome:
    """Unmask every coalition's aggregate from what survivors uploaded.

    Per coalition the server removes each survivor's private mask and, for
    each dropped member d and surviving member j, adds back the pairwise
    term j put in for d, so only the survivors' levels remain.

    Segments from users in ``dropped`` (late arrivals) are ignored.
    """
    dropped = tuple(sorted(set(int(d) for d in dropped)))
    dset = set(dropped)
    survivors = tuple(u for u in range(plan.N) if u not in dset)
    received: dict[tuple[int, int], MaskedSegment] = {}
    bits: dict[int, int] = {}
    for seg in segments:
        if seg.user in dset:
            continue
        slot = plan.slot(seg.user, seg.level)
        if seg.coalition != slot.index or seg.R != slot.R or len(seg.payload) != plan.seg_len:
            raise ProtocolError(f"segment from user {seg.user} at level {seg.level} does not match the plan")
        received[(seg.user, seg.level)] = seg
        bits[seg.user] = bits.get(seg.user, 0) + seg.bits
    for u in survivors:
        for l in range(plan.Z):
            if (u, l) not in received:
                raise ProtocolError(f"missing segment from surviving user {u} at level {l}")

    b_seed = {u: shamir_reconstruct(shares.private_seed[u]) for u in survivors}
    dropped_sk = {}
    group = next(iter(public_keys.values())).group
    for d in dropped:
        sk = PrivateKey(shamir_reconstruct(shares.private_key[d]), group)
        _self_check_pk(sk, public_keys[d])
        dropped_sk[d] = sk

    out = RoundOutcome(plan, round_index, survivors, dropped, {}, bits_per_user=bits)
    n = plan.seg_len
    for l in range(plan.Z):
        for slot in plan.slots[l]:
            alive = tuple(u for u in slot.users if u not in dset)
            R = slot.R
            if not alive:
                out.empty_coalitions.append((l, slot.index))
                zero = np.zeros(n, dtype=np.int64)
                out.decoded[(l, slot.index)] = DecodedSegment(l, slot.index, slot.users, (), R, slot.spec,
                                                              zero, np.zeros(n))
                continue
            acc = np.zeros(n, dtype=np.int64)
            for u in alive:
                acc = (acc + received[(u, l)].payload - private_mask(b_seed[u], n, R, round_index, l)) % R
            for d in slot.users:
                if d not in dset:
                    continue
                for j in alive:
                    s = derive_pairwise_seed(dropped_sk[d], public_keys[j])
                    z = pairwise_mask(s, n, R, round_index, l)
                    # j added z if j < d and subtracted it otherwise; undo that
                    acc = (acc - z) % R if j < d else (acc + z) % R
            if len(alive) == 1:
                out.leakage_events.append((l, slot.index, alive[0]))
            real = np.asarray(dequantize_aggregate(acc, len(alive), slot.spec), dtype=np.float64)
            out.decoded[(l, slot.index)] = DecodedSegment(l, slot.index, slot.users, alive, R, slot.spec,
                                                          acc, real)
    return out


def reassemble(outcome: RoundOutcome) -> np.ndarray:
    """Sum of the survivors' dequantized updates, length m.

    Coalition sums at a level are added together; levels are concatenated.

    Raises:
        ProtocolError: if some level has no decoded segment.
    """
    plan = outcome.plan
    parts = []
    for l in range(plan.Z):
        segs = outcome.level_segments(l)
        if not segs:
            raise ProtocolError(f"level {l} was never decoded")
        parts.append(np.sum([s.real_sum for s in segs], axis=0))
    return np.concatenate(parts)[:plan.m]


def run_round(users: Sequence[UserState], updates: Sequence, plan: RoundPlan,
              rngs: Sequence[np.random.Generator], dropped: Iterable[int] = (),
              round_index: int = 0) -> RoundOutcome:
    """Encode for every non-dropped user, collect shares and decode."""
    dropped = set(dropped)
    segments = []
    for u in users:
        if u.id in dropped:
            continue
        segments.extend(encode_segments(u, updates[u.id], plan, rngs[u.id], round_index))
    shares = collect_shares(users, dropped)
    pks = {u.id: u.public_key for u in users}
    return server_decode(segments, plan, pks, dropped, shares, round_index)


# --------------------------------------------------------------------------
# Transcripts
# --------------------------------------------------------------------------

TRANSCRIPT_HEADER = "# heterosag transcript v1: round user level coalition R payload"


def write_transcript(segments: Iterable[MaskedSegment], fh: TextIO | None = None) -> str | None:
    """One line per segment: ``round user level coalition R p0,p1,...``.

    Writes to ``fh`` if given, else returns the text.
    """
    buf = io.StringIO() if fh is None else fh
    buf.write(TRANSCRIPT_HEADER + "\n")
    for s in segments:
        payload = ",".join(str(int(v)) for v in s.payload)
        buf.write(f"{s.round} {s.user} {s.level} {s.coalition} {s.R} {payload}\n")
    return buf.getvalue() if fh is None else None


def read_transcript(source: str | TextIO) -> list[MaskedSegment]:
    text = source if isinstance(source, str) else source.read()
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ProtocolError(f"transcript line {lineno}: expected 6 fields, got {len(parts)}")
        r, u, l, c, R = (int(p) for p in parts[:5])
        payload = np.array([int(v) for v in parts[5].split(",")], dtype=np.int64)
        if np.any(payload < 0) or np.any(payload >= R):
            raise ProtocolError(f"transcript line {lineno}: payload outside [0, {R})")
        out.append(MaskedSegment(r, u, l, c, R, payload))
    return out


# --------------------------------------------------------------------------
# Naive heterogeneous masking (what goes wrong without coalitions)
# --------------------------------------------------------------------------


def naive_mixed_modulus_sum(levels: Sequence[int], moduli: Sequence[int], mask: int) -> int:
    """Two users masking with +z / -z but each in its own modulus."""
    y1 = (levels[0] + mask) % moduli[0]
    y2 = (levels[1] - mask) % moduli[1]
    return (y1 + y2) % max(moduli)


def zero_sum_mask_tuples(mask_ranges: Sequence[int], D: int) -> list[tuple[int, ...]]:
    """Mask tuples whose entries lie in their users' ranges and sum to 0 mod D.

    The last entry is fixed by the others, so it must fall in its range.
    """
    import itertools
    out = []
    for head in itertools.product(*(range(r + 1) for r in mask_ranges[:-1])):
        last = (-sum(head)) % D
        if last <= mask_ranges[-1]:
            out.append(tuple(head) + (last,))
    return out


def naive_tuple_mask_sum(levels: Sequence[int], masks: Sequence[int], moduli: Sequence[int], D: int) -> int:
    """Each user masks in its own modulus; the server sums mod D."""
    return sum((x + z) % R for x, z, R in zip(levels, masks, moduli)) % D

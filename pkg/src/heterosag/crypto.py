"""Ring arithmetic, pseudorandom expansion, key agreement and Shamir sharing.

Everything here is a pure function of its inputs. The Diffie-Hellman group is
a toy 61-bit safe-prime group: it makes seeds symmetric the way the protocol
needs, but it is NOT cryptographically hard. Privacy in the simulator comes
from the one-time-pad style masking, not from the key exchange.
"""

from __future__ import annotations

import hashlib
import itertools
import secrets
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ParameterError, ShareError

# 2^61 - 1 is prime; large enough for 61-bit private keys and private seeds.
SHARE_PRIME = 2**61 - 1
# Small field for exhaustive secrecy enumeration in tests.
SMALL_PRIME = 257


@dataclass(frozen=True)
class RingModulus:
    """Encoding modulus R for one coalition.

    Use :meth:`for_coalition` to build R = |S|(K-1)+1, which is the smallest
    ring in which every possible sum of |S| levels in [0, K-1] fits.
    """

    R: int

    def __post_init__(self):
        if int(self.R) < 2:
            raise ConfigError(f"ring modulus must be >= 2, got {self.R}")

    @classmethod
    def for_coalition(cls, size: int, levels: int) -> "RingModulus":
        if size < 1:
            raise ConfigError(f"coalition size must be >= 1, got {size}")
        if levels < 2:
            raise ConfigError(f"quantizer needs K >= 2, got {levels}")
        return cls(size * (levels - 1) + 1)

    @property
    def bits(self) -> int:
        """Width of one symbol, ceil(log2 R)."""
        return ceil_log2(self.R)

    def __int__(self):
        return int(self.R)


def ceil_log2(value: int) -> int:
    """Exact ceil(log2(value)) for a positive integer."""
    if value < 1:
        raise ValueError(f"ceil_log2 needs a positive integer, got {value}")
    return (int(value) - 1).bit_length()


# --------------------------------------------------------------------------
# Key agreement
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DHGroup:
    """Prime-order subgroup of Z_p^* with p = 2q + 1."""

    p: int = 2305843009213691579
    q: int = 1152921504606845789
    g: int = 4

    def __post_init__(self):
        if self.p != 2 * self.q + 1:
            raise ParameterError("p must equal 2q + 1")
        if pow(self.g, self.q, self.p) != 1 or self.g in (0, 1, self.p - 1):
            raise ParameterError("g does not generate the order-q subgroup")


DEFAULT_GROUP = DHGroup()


@dataclass(frozen=True)
class PublicKey:
    value: int
    group: DHGroup = DEFAULT_GROUP


@dataclass(frozen=True, repr=False)
class PrivateKey:
    value: int
    group: DHGroup = DEFAULT_GROUP

    def public_key(self) -> PublicKey:
        return PublicKey(pow(self.group.g, self.value, self.group.p), self.group)

    def __repr__(self):
        return f"PrivateKey(<hidden>, group=p{self.group.p.bit_length()})"


def generate_keypair(rng: np.random.Generator | None = None,
                     group: DHGroup = DEFAULT_GROUP) -> tuple[PrivateKey, PublicKey]:
    """Draw a private exponent in [1, q-1] and return the key pair."""
    if rng is None:
        value = 1 + secrets.randbelow(group.q - 1)
    else:
        value = 1 + int(rng.integers(0, group.q - 1, dtype=np.uint64))
    sk = PrivateKey(value, group)
    return sk, sk.public_key()


def derive_pairwise_seed(private_key: PrivateKey, public_key: PublicKey) -> int:
    """Symmetric 64-bit seed from one side's secret and the other's public key.

    ``derive_pairwise_seed(sk_i, pk_j) == derive_pairwise_seed(sk_j, pk_i)``.
    """
    if private_key.group != public_key.group:
        raise ParameterError("keys come from different group parameters")
    if private_key.public_key().value == public_key.value:
        raise ParameterError("a user cannot agree on a seed with itself")
    shared = pow(public_key.value, private_key.value, private_key.group.p)
    digest = hashlib.sha256(b"heterosag-pairwise" + shared.to_bytes(8, "big")).digest()
    return int.from_bytes(digest[:8], "big")


# --------------------------------------------------------------------------
# PRG
# --------------------------------------------------------------------------


def _philox_key(seed: int, domain: Sequence[int]) -> int:
    material = ":".join(str(int(v)) for v in (seed, *domain)).encode()
    return int.from_bytes(hashlib.blake2b(material, digest_size=16).digest(), "little")


def prg_expand(seed: int, length: int, modulus: int | RingModulus,
               domain: Sequence[int] = ()) -> np.ndarray:
    """Expand ``seed`` into ``length`` symbols uniform on [0, R).

    Counter-mode Philox keyed by a hash of (seed, *domain); numpy's bounded
    integer sampler rejects out-of-range words, so there is no modulo bias.
    ``domain`` separates streams, e.g. (round, level) for per-segment masks.
    """
    if length < 1:
        raise ValueError("prg_expand needs length >= 1")
    R = int(modulus)
    if R < 2:
        raise ConfigError(f"ring modulus must be >= 2, got {R}")
    gen = np.random.Generator(np.random.Philox(key=_philox_key(seed, domain)))
    return gen.integers(0, R, size=length, dtype=np.int64)


# --------------------------------------------------------------------------
# Shamir secret sharing
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SecretShare:
    owner: int
    index: int
    value: int
    threshold: int
    prime: int = SHARE_PRIME

    def __post_init__(self):
        if self.index % self.prime == 0:
            raise ShareError("share index must be a nonzero field element")


def _poly_eval(coeffs: Sequence[int], x: int, prime: int) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % prime
    return acc


def shamir_share(secret: int, threshold: int, n: int, *, owner: int = 0,
                 rng: np.random.Generator | None = None, prime: int = SHARE_PRIME,
                 indices: Iterable[int] | None = None) -> list[SecretShare]:
    """Split ``secret`` into ``n`` shares, any ``threshold`` of which recover it.

    Evaluation points default to 1..n (user index + 1).
    """
    if not 1 <= threshold <= n:
        raise ShareError(f"infeasible threshold t={threshold} for n={n} shares")
    if not 0 <= secret < prime:
        raise ShareError("secret must be a field element")
    xs = list(range(1, n + 1)) if indices is None else [int(i) for i in indices]
    if len(xs) != n or len(set(x % prime for x in xs)) != n:
        raise ShareError("evaluation points must be n distinct values")
    if rng is None:
        coeffs = [secret] + [secrets.randbelow(prime) for _ in range(threshold - 1)]
    else:
        coeffs = [secret] + [_randbelow(rng, prime) for _ in range(threshold - 1)]
    return [SecretShare(owner, x, _poly_eval(coeffs, x, prime), threshold, prime)
            for x in xs]


def _randbelow(rng: np.random.Generator, bound: int) -> int:
    if bound <= 2**63:
        return int(rng.integers(0, bound, dtype=np.int64 if bound <= 2**62 else np.uint64))
    return int.from_bytes(rng.bytes((bound.bit_length() + 7) // 8 + 8), "little") % bound


def shamir_reconstruct(shares: Sequence[SecretShare]) -> int:
    """Lagrange-interpolate the secret at x = 0."""
    if not shares:
        raise ShareError("no shares supplied")
    t = shares[0].threshold
    prime = shares[0].prime
    owner = shares[0].owner
    if any(s.threshold != t or s.prime != prime or s.owner != owner for s in shares):
        raise ShareError("shares carry mismatched metadata")
    xs = [s.index % prime for s in shares]
    if len(set(xs)) != len(xs):
        raise ShareError("duplicate share indices")
    if len(shares) < t:
        raise ShareError(f"need {t} shares, got {len(shares)}")
    secret = 0
    for j, sj in enumerate(shares):
        num, den = 1, 1
        for k, xk in enumerate(xs):
            if k != j:
                num = num * xk % prime
                den = den * (xk - xs[j]) % prime
        secret = (secret + sj.value * num * pow(den, prime - 2, prime)) % prime
    return secret


def consistent_secrets(shares: Sequence[SecretShare]) -> dict[int, int]:
    """Count, for each candidate secret, the polynomials matching ``shares``.

    Enumerates the secret and all middle coefficients; the top coefficient
    is then forced by the first share and the rest are checked. Only usable
    on a tiny field. With fewer than t shares every secret should be equally
    likely.
    """
    if not shares:
        raise ShareError("no shares supplied")
    t, prime = shares[0].threshold, shares[0].prime
    if prime ** max(t - 1, 1) > 5_000_000:
        raise ValueError("field too large for exhaustive enumeration")
    counts = {s: 0 for s in range(prime)}
    first, rest = shares[0], shares[1:]
    x0 = first.index % prime
    top_inv = pow(pow(x0, t - 1, prime), prime - 2, prime)
    if t == 1:
        if all(sh.value == first.value for sh in rest):
            counts[first.value % prime] += 1
        return counts
    for head in itertools.product(range(prime), repeat=t - 1):
        partial = _poly_eval(head, x0, prime)
        coeffs = head + ((first.value - partial) * top_inv % prime,)
        if all(_poly_eval(coeffs, sh.index, prime) == sh.value for sh in rest):
            counts[coeffs[0]] += 1
    return counts


@dataclass(frozen=True)
class ShareBundle:
    """The two shares one user holds for one owner: private seed and key."""

    owner: int
    private_seed: SecretShare
    private_key: SecretShare = field(repr=False)

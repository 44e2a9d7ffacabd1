"""Shared primitives for the authentication schemes.

Everything protocol-visible travels as a 128-bit word (:class:`Field128`):
identities, password blocks, timestamps, truncated hash outputs, and
group elements in masked/wire form.  Keeping a single word type is what
lets the schemes XOR heterogeneous values together the way their
equations are written.

The module also owns the instrumented hash engine and modular
exponentiation (both count into an active :class:`CostLedger`), the
deterministic per-session RNG, and the simulated clock used by every
test and scenario.
"""

from __future__ import annotations

import hashlib
import random
import time
from contextlib import contextmanager
from dataclasses import dataclass, field


FIELD_BYTES = 16
DEFAULT_DELTA_T_MS = 2000

# Largest 128-bit safe prime: p = 2q + 1 with q prime.  g = 4 is a
# quadratic residue, so its order is exactly q (~2**127).
DEFAULT_P = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFC3A7
DEFAULT_G = 4


# ---------------------------------------------------------------------------
# Protocol errors
# ---------------------------------------------------------------------------

class ProtocolError(Exception):
    """Base class for runtime protocol rejections.

    Each subclass carries a short local code.  On the wire every
    rejection looks the same (see channel.WIRE_TERMINATION); the codes
    exist for local logs, reports, and CLI exit statuses.
    """

    code = "protocol-error"


class RegistrationError(ProtocolError):
    code = "registration"


class LocalAuthFailure(ProtocolError):
    """Smart card refused the holder (V mismatch) before anything was sent."""

    code = "local-auth"


class FreshnessFailure(ProtocolError):
    """Timestamp outside the allowed transmission window."""

    code = "freshness"


class UnknownUser(ProtocolError):
    code = "unknown-user"


class AuthFailure(ProtocolError):
    """Verifier mismatch (C_i or Cs) — message rejected."""

    code = "bad-auth"


# ---------------------------------------------------------------------------
# The 128-bit protocol word
# ---------------------------------------------------------------------------

class Field128(bytes):
    """A 16-byte protocol word with XOR.

    Subclassing ``bytes`` keeps hashing/serialization free; the only
    added behaviour is length enforcement and ``^``.
    """

    __slots__ = ()

    def __new__(cls, data: bytes) -> "Field128":
        if len(data) != FIELD_BYTES:
            raise ValueError(
                "Field128 needs exactly %d bytes, got %d" % (FIELD_BYTES, len(data))
            )
        return super().__new__(cls, data)

    def __xor__(self, other: bytes) -> "Field128":
        if len(other) != FIELD_BYTES:
            raise ValueError("xor operand must be 16 bytes")
        return Field128(bytes(a ^ b for a, b in zip(self, other)))

    __rxor__ = __xor__

    def __repr__(self) -> str:
        return "Field128(%s)" % self.hex()

    def to_int(self) -> int:
        return int.from_bytes(self, "big")

    @classmethod
    def from_int(cls, value: int) -> "Field128":
        if not 0 <= value < (1 << 128):
            raise ValueError("value out of 128-bit range")
        return cls(value.to_bytes(FIELD_BYTES, "big"))

    @classmethod
    def zero(cls) -> "Field128":
        return cls(bytes(FIELD_BYTES))


def encode_text(text: str) -> Field128:
    """Encode an identity or password string as one protocol word.

    UTF-8, zero-padded on the right.  Anything longer than 16 bytes is
    rejected rather than truncated (truncation would silently alias
    distinct passwords).
    """
    raw = text.encode("utf-8")
    if len(raw) > FIELD_BYTES:
        raise ValueError("text too long for a 128-bit word: %r" % text)
    return Field128(raw.ljust(FIELD_BYTES, b"\x00"))


def decode_text(word: Field128) -> str:
    return bytes(word).rstrip(b"\x00").decode("utf-8")


# ---------------------------------------------------------------------------
# Timestamps and clocks
# ---------------------------------------------------------------------------

def ms_to_field(ms: int) -> Field128:
    """Millisecond count -> protocol word (zero-extended to 128 bits)."""
    if not 0 <= ms < (1 << 64):
        raise ValueError("timestamp out of 64-bit range: %d" % ms)
    return Field128(ms.to_bytes(FIELD_BYTES, "big"))


def field_to_ms(word: Field128) -> int:
    """Inverse of :func:`ms_to_field`.

    Raises ValueError when the high 64 bits are nonzero — the word is
    then not a well-formed timestamp (e.g. an unmasking with a wrong
    key produced garbage).
    """
    if any(word[:8]):
        raise ValueError("not a well-formed timestamp word")
    return int.from_bytes(word[8:], "big")


class SimClock:
    """Deterministic millisecond clock for tests and scenarios.

    Time only moves when something calls :meth:`advance`.
    """

    def __init__(self, start_ms: int = 1_700_000_000_000):
        self._now = start_ms

    def now(self) -> int:
        return self._now

    def advance(self, ms: int) -> None:
        if ms < 0:
            raise ValueError("clock cannot move backwards")
        self._now += ms


class RealClock:
    """Wall clock, CLI demo path only — never used by tests or scenarios."""

    def now(self) -> int:
        return int(time.time() * 1000)

    def advance(self, ms: int) -> None:  # pragma: no cover - demo convenience
        time.sleep(ms / 1000.0)


# ---------------------------------------------------------------------------
# Cost ledger
# ---------------------------------------------------------------------------

class CostLedger:
    """Counts hash calls, modular exponentiations, wire bytes and storage.

    Counters are attributed to a (phase, principal) scope, e.g.
    ("login", "user"), managed as a stack so harness code can wrap
    whole protocol steps::

        with ledger.scope("authentication", "server"):
            reply, sk = server.respond(msg, r_s)
    """

    UNSCOPED = ("-", "-")

    def __init__(self) -> None:
        self.hash_calls: dict[tuple[str, str], int] = {}
        self.modexp_calls: dict[tuple[str, str], int] = {}
        self.wire: list[tuple[str, int]] = []  # (label, bits)
        self.storage: dict[str, int] = {}  # label -> 128-bit units
        self._stack: list[tuple[str, str]] = []

    @contextmanager
    def scope(self, phase: str, principal: str):
        self._stack.append((phase, principal))
        try:
            yield self
        finally:
            self._stack.pop()

    def _where(self) -> tuple[str, str]:
        return self._stack[-1] if self._stack else self.UNSCOPED

    def count_hash(self) -> None:
        key = self._where()
        self.hash_calls[key] = self.hash_calls.get(key, 0) + 1

    def count_modexp(self) -> None:
        key = self._where()
        self.modexp_calls[key] = self.modexp_calls.get(key, 0) + 1

    def record_wire(self, label: str, nbytes: int) -> None:
        self.wire.append((label, nbytes * 8))

    def record_storage(self, label: str, units: int) -> None:
        self.storage[label] = units

    # -- rollups ------------------------------------------------------

    def hash_total(self) -> int:
        return sum(self.hash_calls.values())

    def modexp_total(self) -> int:
        return sum(self.modexp_calls.values())

    def wire_bits_total(self) -> int:
        return sum(bits for _, bits in self.wire)

    def hashes_in(self, phase: str | None = None, principal: str | None = None) -> int:
        return self._select(self.hash_calls, phase, principal)

    def modexps_in(self, phase: str | None = None, principal: str | None = None) -> int:
        return self._select(self.modexp_calls, phase, principal)

    @staticmethod
    def _select(counts: dict[tuple[str, str], int], phase, principal) -> int:
        total = 0
        for (ph, pr), n in counts.items():
            if phase is not None and ph != phase:
                continue
            if principal is not None and pr != principal:
                continue
            total += n
        return total

    def phase_table(self) -> dict[str, int]:
        """Hash counts keyed "phase/principal", sorted for stable reports."""
        return {
            "%s/%s" % key: n for key, n in sorted(self.hash_calls.items())
        }


# ---------------------------------------------------------------------------
# Instrumented hash
# ---------------------------------------------------------------------------

class HashEngine:
    """h(x1 || x2 || ...) truncated to 128 bits, with call counting.

    Every input block must be a full 16-byte word: fixed-width
    concatenation is what makes h(a||b) unambiguous.  The digest is the
    configured algorithm's output truncated to the first 16 bytes.
    """

    def __init__(self, name: str = "sha256", ledger: CostLedger | None = None):
        hashlib.new(name)  # fail fast on unknown algorithms
        self.name = name
        self.ledger = ledger

    def __call__(self, *parts: bytes) -> Field128:
        if not parts:
            raise ValueError("hash of zero blocks is undefined")
        h = hashlib.new(self.name)
        for part in parts:
            if len(part) != FIELD_BYTES:
                raise ValueError(
                    "hash input block must be 16 bytes, got %d" % len(part)
                )
            h.update(part)
        if self.ledger is not None:
            self.ledger.count_hash()
        return Field128(h.digest()[:FIELD_BYTES])


# ---------------------------------------------------------------------------
# Group parameters and modular exponentiation
# ---------------------------------------------------------------------------

_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)

# Below this bound the 13 fixed Miller-Rabin bases are a proven
# deterministic primality test.
_MR_DETERMINISTIC_BOUND = 3_317_044_064_679_887_385_961_981
_MR_FIXED_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)


def is_probable_prime(n: int) -> bool:
    """Miller-Rabin.  Deterministic below ~3.3e24, 40 extra seeded
    rounds above it (error < 4**-40; construction-time check only)."""
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1

    def witnesses():
        yield from _MR_FIXED_BASES
        if n >= _MR_DETERMINISTIC_BOUND:
            rnd = random.Random(n)  # deterministic per n
            for _ in range(40):
                yield 2 + rnd.getrandbits(n.bit_length()) % (n - 3)

    for a in witnesses():
        a %= n
        if a in (0, 1, n - 1):
            continue
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = (x * x) % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class GroupParams:
    """A safe-prime group (p = 2q + 1) with generator g of order q or 2q.

    p fits in 128 bits so every group element encodes as one protocol
    word.  Construct via :meth:`default` or :meth:`from_values`.
    """

    p: int
    g: int

    @classmethod
    def default(cls) -> "GroupParams":
        return _DEFAULT_GROUP

    @classmethod
    def from_values(cls, p: int, g: int, trust_unchecked: bool = False) -> "GroupParams":
        """Build params from user-supplied values.

        Verifies that p is a 128-bit-or-smaller safe prime and that g
        generates a subgroup of order > 2**64.  Pass
        ``trust_unchecked=True`` to skip the (documented) check — the
        caller then owns the consequences.
        """
        params = cls(p, g)
        if not trust_unchecked:
            params.verify()
        return params

    def verify(self) -> None:
        if self.p.bit_length() > 128:
            raise ValueError("p must fit in 128 bits")
        if self.p < 7 or not is_probable_prime(self.p):
            raise ValueError("p is not prime")
        q = (self.p - 1) // 2
        if self.p != 2 * q + 1 or not is_probable_prime(q):
            raise ValueError("p is not a safe prime (p = 2q+1, q prime)")
        if q.bit_length() <= 64:
            raise ValueError("subgroup order must exceed 2**64")
        if not 2 <= self.g <= self.p - 2:
            raise ValueError("g out of range")
        # order of g divides 2q; excluding 1, p-1 leaves order q or 2q
        if pow(self.g, 2, self.p) == 1:
            raise ValueError("g has trivial order")

    def encode(self, x: int) -> Field128:
        if not 0 <= x < self.p:
            raise ValueError("element out of group range")
        return Field128.from_int(x)


_DEFAULT_GROUP = GroupParams(DEFAULT_P, DEFAULT_G)
_DEFAULT_GROUP.verify()


def mod_exp(
    base: int | bytes,
    exponent: int,
    params: GroupParams,
    ledger: CostLedger | None = None,
) -> Field128:
    """base**exponent mod p as a protocol word, counted in the ledger.

    ``base`` may be an int or a Field128/bytes wire word.  Bases outside
    (0, p) are a domain error: they cannot be honest group elements and
    rejecting them is how garbage unmaskings surface.
    """
    b = int.from_bytes(base, "big") if isinstance(base, bytes) else base
    if not 0 < b < params.p:
        raise ValueError("modexp base outside (0, p)")
    if exponent < 0:
        raise ValueError("negative exponent")
    if ledger is not None:
        ledger.count_modexp()
    return Field128.from_int(pow(b, exponent, params.p))


@dataclass(frozen=True)
class ServerSecret:
    """The server's long-term exponent X and public Y = g^X mod p."""

    x: int
    y: Field128

    @classmethod
    def generate(cls, params: GroupParams, rng: "SessionRng") -> "ServerSecret":
        x = rng.exponent(params)
        return cls.from_x(params, x)

    @classmethod
    def from_x(cls, params: GroupParams, x: int) -> "ServerSecret":
        # y is always recomputed from x, never trusted from storage
        if not 2 <= x <= params.p - 2:
            raise ValueError("X out of range")
        return cls(x, mod_exp(params.g, x, params))


# ---------------------------------------------------------------------------
# Deterministic randomness
# ---------------------------------------------------------------------------

def derive_seed(seed: int, label: str) -> int:
    """Disjoint deterministic seed stream for a named role."""
    material = ("%d:%s" % (seed, label)).encode("utf-8")
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


class SessionRng:
    """Seeded RNG built on getrandbits only.

    getrandbits is the one Random primitive whose output stream is
    stable across Python versions and platforms, which is what makes
    recorded scenarios replayable byte-for-byte.  The seed is kept on
    the object so transcripts can reference it.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._rng = random.Random(seed)

    def field(self) -> Field128:
        return Field128.from_int(self._rng.getrandbits(128))

    def below(self, bound: int) -> int:
        """Uniform int in [0, bound) by rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        k = bound.bit_length()
        while True:
            x = self._rng.getrandbits(k)
            if x < bound:
                return x

    def exponent(self, params: GroupParams) -> int:
        """Ephemeral exponent in [2, p-2]."""
        return 2 + self.below(params.p - 3)

    def positions(self, n: int, k: int) -> list[int]:
        """k distinct positions out of n (partial Fisher-Yates)."""
        if not 0 <= k <= n:
            raise ValueError("cannot pick %d of %d positions" % (k, n))
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class ProtocolConfig:
    """Tunable knobs shared by CLI, scenarios and tests."""

    p: int = DEFAULT_P
    g: int = DEFAULT_G
    hash_name: str = "sha256"
    delta_t_ms: int = DEFAULT_DELTA_T_MS
    template_bits: int = 512
    seed: int = 1

    def group(self) -> GroupParams:
        if self.p == DEFAULT_P and self.g == DEFAULT_G:
            return GroupParams.default()
        return GroupParams.from_values(self.p, self.g)


@dataclass
class Env:
    """Execution context for one protocol run.

    Bundles the group, the instrumented hash, the ledger and the clock
    so scheme functions don't take five plumbing arguments each.
    """

    params: GroupParams
    hasher: HashEngine
    ledger: CostLedger
    clock: SimClock | RealClock
    delta_t_ms: int = DEFAULT_DELTA_T_MS

    @classmethod
    def from_config(
        cls,
        config: ProtocolConfig | None = None,
        clock: SimClock | RealClock | None = None,
    ) -> "Env":
        config = config or ProtocolConfig()
        ledger = CostLedger()
        return cls(
            params=config.group(),
            hasher=HashEngine(config.hash_name, ledger),
            ledger=ledger,
            clock=clock if clock is not None else SimClock(),
            delta_t_ms=config.delta_t_ms,
        )

    def h(self, *parts: bytes) -> Field128:
        return self.hasher(*parts)

    def mod_exp(self, base: int | bytes, exponent: int) -> Field128:
        return mod_exp(base, exponent, self.params, self.ledger)

    def now_field(self) -> tuple[int, Field128]:
        ms = self.clock.now()
        return ms, ms_to_field(ms)

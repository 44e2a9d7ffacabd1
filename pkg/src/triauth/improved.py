"""The hardened three-factor login scheme.

Same skeleton as the baseline, with one structural change: the two
registration timestamps T1 (user side) and T2 (server side) become
long-term secrets shared by card and server, and every wire value is
masked or keyed by them.  Raw timestamps never travel; the login
message carries Q = T3 xor h(T1) instead of T3, and the reply masks T4
and T5 the same way.  An adversary with the card, the transcripts and
even both session exponents cannot evaluate any verifier equation
without first knowing T1 and T2 — which is exactly what the structural
taint test and the adversary engine check.

Registration (user at time T1, server at time T2):
  user:   N random, W = h(PW || N || T1), (R, P_i) = Gen(B)
  server: G = h(ID || X), H = G xor T2, e = H xor W,
          issues card {e, h(), p, g, Y} plus T1 xor T2,
          stores (ID, T1, T2)
  user:   L = N xor R xor T1, V = h(ID || T1 || PW || T2 || N),
          M = h(ID xor T2) xor T1, Nmask = h(PW || R) xor T2;
          card gains P_i, L, V, M, Nmask (and keeps T1 xor T2).

Login (card unmasks its own state, then masks the wire):
  T2 = Nmask xor h(PW || R), T1 = M xor h(ID xor T2),
  N = R xor L xor T1, verify V, H = e xor h(PW || N || T1),
  A1 = g^r_u, A11 = A1 xor T2 xor T3, A2 = Y^r_u, A22 = A2 xor T3,
  NID = ID xor A22 xor h(T1 || T3 || T2),
  C_i = h(ID || H || A22 || A11 || T1 || T3 || T2),
  Q = T3 xor h(T1)                            ->  <NID, A11, C_i, Q>

Server response (record found by trial verification; T3 must be
derived from Q before freshness can be checked, so the check runs
right after that derivation and before any exponentiation):
  T3 = Q xor h(T1), check T4 - T3 <= dt,
  A1 = A11 xor T2 xor T3, A2 = A1^X, A22 = A2 xor T3,
  ID = NID xor A22 xor h(T1 || T3 || T2), H = h(ID || X) xor T2,
  verify C_i, then A4 = g^r_s, A44 = A4 xor T3 xor T4,
  A5 = A1^r_s, A55 = A5 xor T3 xor T5,
  SK = h(ID || A22 || A55 || H || T1 || T3 || T5),
  Cs = h(ID || SK || H || T2 || T4),
  P = h(T1 || ID || T3) xor T4, Q2 = h(T2 || ID || T3) xor T5
                                              ->  <Cs, A44, P, Q2>

User finish (no freshness check is defined at this step):
  T4 = P xor h(T1 || ID || T3), T5 = Q2 xor h(T2 || ID || T3),
  A4 = A44 xor T3 xor T4, A5 = A4^r_u, A55 = A5 xor T3 xor T5,
  recompute SK and verify Cs.

Scheme functions accept an optional `trace` list; when given, every
computed value is appended as (name, ingredient-names) so tests can
walk the construction dataflow.  Production paths pass nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    AuthFailure,
    Env,
    Field128,
    FreshnessFailure,
    GroupParams,
    LocalAuthFailure,
    RegistrationError,
    ServerSecret,
    SessionRng,
    UnknownUser,
    encode_text,
    field_to_ms,
    ms_to_field,
)
from .fuzzy import BiometricTemplate, HelperData, gen, rep

SCHEME = "improved"

LOGIN_WIRE = ("NID", "A11", "C_i", "Q")
REPLY_WIRE = ("Cs", "A44", "P", "Q2")

Trace = list  # list[tuple[str, tuple[str, ...]]]


def _note(trace: Trace | None, name: str, *ingredients: str) -> None:
    if trace is not None:
        trace.append((name, ingredients))


@dataclass(frozen=True)
class ImprovedCard:
    """Smart card contents after registration.

    T12 = T1 xor T2 is delivered with the card and kept on it; after
    the holder has split it during registration it is never read
    again, but it is a declared field and counts toward storage.
    """

    e: Field128
    hash_name: str
    params: GroupParams
    y: Field128
    helper: HelperData
    l: Field128
    v: Field128
    m: Field128
    nmask: Field128
    t12: Field128

    STORAGE_UNITS = 10
    FIELD_NAMES = ("e", "p", "g", "Y", "P_i", "L", "V", "M", "Nmask", "T12")


@dataclass(frozen=True)
class LoginMessage:
    nid: Field128
    a11: Field128
    c_i: Field128
    q: Field128

    def encode(self) -> bytes:
        return b"".join((self.nid, self.a11, self.c_i, self.q))

    @classmethod
    def decode(cls, raw: bytes) -> "LoginMessage":
        if len(raw) != 64:
            raise ValueError("improved login message must be 64 bytes")
        return cls(*(Field128(raw[i : i + 16]) for i in range(0, 64, 16)))


@dataclass(frozen=True)
class ReplyMessage:
    cs: Field128
    a44: Field128
    p: Field128
    q2: Field128

    def encode(self) -> bytes:
        return b"".join((self.cs, self.a44, self.p, self.q2))

    @classmethod
    def decode(cls, raw: bytes) -> "ReplyMessage":
        if len(raw) != 64:
            raise ValueError("improved reply message must be 64 bytes")
        return cls(*(Field128(raw[i : i + 16]) for i in range(0, 64, 16)))


@dataclass
class PendingLogin:
    """Session secrets retained by the card between login and finish."""

    user_id: Field128
    h: Field128
    a22: Field128
    r_u: int
    t1: Field128
    t2: Field128
    t3: Field128


@dataclass(frozen=True)
class ServerRecord:
    """Per-user registration state: the two long-term timestamps."""

    user_id: Field128
    t1_ms: int
    t2_ms: int


class ImprovedServer:
    """Long-term secret X plus the (ID, T1, T2) registry.

    Login messages carry no cleartext identity, so the server finds
    the right record by trial verification: for each record it unmasks
    the message under that record's timestamps and accepts the record
    whose C_i verifies.  Trial cost is visible in the ledger.
    """

    def __init__(
        self,
        env: Env,
        secret: ServerSecret | None = None,
        rng: SessionRng | None = None,
    ):
        if secret is None:
            if rng is None:
                raise ValueError("need a secret or an rng to generate one")
            secret = ServerSecret.generate(env.params, rng)
        self.env = env
        self.secret = secret
        self.records: list[ServerRecord] = []

    def enroll(
        self, user_id: Field128, w: Field128, t1_ms: int, t2_ms: int
    ) -> Field128:
        """Registration at the server: returns e; stores (ID, T1, T2)."""
        if any(rec.user_id == user_id for rec in self.records):
            raise RegistrationError("identity already registered")
        x_word = Field128.from_int(self.secret.x)
        g_val = self.env.h(user_id, x_word)
        h_val = g_val ^ ms_to_field(t2_ms)
        self.records.append(ServerRecord(user_id, t1_ms, t2_ms))
        return h_val ^ w

    def respond(
        self,
        msg: LoginMessage,
        r_s: int,
        trace: Trace | None = None,
        processing_ms: int = 0,
    ) -> tuple[ReplyMessage, Field128]:
        env = self.env
        t4_ms = env.clock.now()
        x_word = Field128.from_int(self.secret.x)

        matched = None
        saw_stale = False
        saw_mismatch = False
        for rec in self.records:
            t1 = ms_to_field(rec.t1_ms)
            t2 = ms_to_field(rec.t2_ms)
            t3 = msg.q ^ env.h(t1)
            try:
                t3_ms = field_to_ms(t3)
            except ValueError:
                continue  # unmasking garbage: not this user's message
            if t4_ms - t3_ms > env.delta_t_ms:
                # stale under this record's T1; no group work was spent
                saw_stale = True
                continue
            a1 = msg.a11 ^ t2 ^ t3
            try:
                a2 = env.mod_exp(a1, self.secret.x)
            except ValueError:
                continue  # unmasked value is not a group element
            a22 = a2 ^ t3
            user_id = msg.nid ^ a22 ^ env.h(t1, t3, t2)
            h_val = env.h(user_id, x_word) ^ t2
            expected = env.h(user_id, h_val, a22, msg.a11, t1, t3, t2)
            if expected == msg.c_i:
                matched = (rec, t1, t2, t3, a1, a22, user_id, h_val)
                break
            saw_mismatch = True

        if matched is None:
            if saw_stale:
                raise FreshnessFailure("login timestamp outside the window")
            if saw_mismatch:
                raise AuthFailure("login verifier mismatch")
            raise UnknownUser("no registered identity matches this login")

        rec, t1, t2, t3, a1, a22, user_id, h_val = matched
        t4 = ms_to_field(t4_ms)
        a4 = env.mod_exp(env.params.g, r_s)
        a44 = a4 ^ t3 ^ t4
        a5 = env.mod_exp(a1, r_s)
        if processing_ms:
            env.clock.advance(processing_ms)
        _, t5 = env.now_field()
        a55 = a5 ^ t3 ^ t5
        sk = env.h(user_id, a22, a55, h_val, t1, t3, t5)
        cs = env.h(user_id, sk, h_val, t2, t4)
        p_mask = env.h(t1, user_id, t3) ^ t4
        q2 = env.h(t2, user_id, t3) ^ t5

        _note(trace, "A44", "A4", "T3", "T4")
        _note(trace, "A55", "A5", "T3", "T5")
        _note(trace, "SK", "ID", "A22", "A55", "H", "T1", "T3", "T5")
        _note(trace, "Cs", "ID", "SK", "H", "T2", "T4")
        _note(trace, "P", "T1", "ID", "T3", "T4")
        _note(trace, "Q2", "T2", "ID", "T3", "T5")
        return ReplyMessage(cs, a44, p_mask, q2), sk


def register(
    env: Env,
    server: ImprovedServer,
    user_id: Field128,
    password: str,
    template: BiometricTemplate,
    rng: SessionRng,
    exchange_ms: int = 0,
) -> ImprovedCard:
    """Run registration; the clock is read for T1 and again for T2.

    `exchange_ms` models the secure-channel hop, which is what makes
    T2 land after T1 — the two instants become the card's and the
    server's shared long-term secrets.
    """
    pw = encode_text(password)
    with env.ledger.scope("registration", "user"):
        t1_ms, t1 = env.now_field()
        n = rng.field()
        w = env.h(pw, n, t1)
        r, helper = gen(template, rng)
    if exchange_ms:
        env.clock.advance(exchange_ms)
    with env.ledger.scope("registration", "server"):
        t2_ms, t2 = env.now_field()
        e = server.enroll(user_id, w, t1_ms, t2_ms)
        t12 = t1 ^ t2
    with env.ledger.scope("registration", "user"):
        # the holder learns T2 by splitting the delivered T1 xor T2
        t2_user = t12 ^ t1
        l_val = n ^ r ^ t1
        v = env.h(user_id, t1, pw, t2_user, n)
        m = env.h(user_id ^ t2_user) ^ t1
        nmask = env.h(pw, r) ^ t2_user
    return ImprovedCard(
        e=e,
        hash_name=env.hasher.name,
        params=env.params,
        y=server.secret.y,
        helper=helper,
        l=l_val,
        v=v,
        m=m,
        nmask=nmask,
        t12=t12,
    )


def login(
    env: Env,
    card: ImprovedCard,
    user_id: Field128,
    password: str,
    template: BiometricTemplate,
    r_u: int,
    trace: Trace | None = None,
) -> tuple[LoginMessage, PendingLogin]:
    """Card-side login: unmask T2, T1, N; verify V; mask the wire."""
    if card.hash_name != env.hasher.name:
        raise ValueError("card was issued under a different hash function")
    pw = encode_text(password)
    r = rep(template, card.helper)
    t2 = card.nmask ^ env.h(pw, r)
    t1 = card.m ^ env.h(user_id ^ t2)
    n = r ^ card.l ^ t1
    if env.h(user_id, t1, pw, t2, n) != card.v:
        raise LocalAuthFailure("card rejected holder")
    h_val = card.e ^ env.h(pw, n, t1)

    _, t3 = env.now_field()
    a1 = env.mod_exp(card.params.g, r_u)
    a11 = a1 ^ t2 ^ t3
    a2 = env.mod_exp(card.y, r_u)
    a22 = a2 ^ t3
    nid = user_id ^ a22 ^ env.h(t1, t3, t2)
    c_i = env.h(user_id, h_val, a22, a11, t1, t3, t2)
    q = t3 ^ env.h(t1)

    _note(trace, "A11", "A1", "T2", "T3")
    _note(trace, "A22", "A2", "T3")
    _note(trace, "NID", "ID", "A22", "T1", "T3", "T2")
    _note(trace, "C_i", "ID", "H", "A22", "A11", "T1", "T3", "T2")
    _note(trace, "Q", "T3", "T1")

    msg = LoginMessage(nid, a11, c_i, q)
    pending = PendingLogin(
        user_id=user_id, h=h_val, a22=a22, r_u=r_u, t1=t1, t2=t2, t3=t3
    )
    return msg, pending


def finish(
    env: Env,
    pending: PendingLogin,
    reply: ReplyMessage,
    trace: Trace | None = None,
) -> Field128:
    """User-side completion.

    The scheme defines no freshness check here — T4 and T5 are
    recovered values, trusted only through the Cs verifier; env's
    delta_t is deliberately unused.
    """
    t4 = reply.p ^ env.h(pending.t1, pending.user_id, pending.t3)
    t5 = reply.q2 ^ env.h(pending.t2, pending.user_id, pending.t3)
    a4 = reply.a44 ^ pending.t3 ^ t4
    try:
        a5 = env.mod_exp(a4, pending.r_u)
    except ValueError as exc:
        raise AuthFailure("reply unmasked to a non-group element") from exc
    a55 = a5 ^ pending.t3 ^ t5
    sk = env.h(
        pending.user_id, pending.a22, a55, pending.h, pending.t1, pending.t3, t5
    )
    expected = env.h(pending.user_id, sk, pending.h, pending.t2, t4)
    if expected != reply.cs:
        raise AuthFailure("reply verifier mismatch")
    return sk

"""The baseline three-factor login scheme.

Registration (over a secure channel):
  user:   N random, W = h(PW || N), (R, P_i) = Gen(B)
  server: H = h(ID || X), e = H xor W, issues card {e, h(), p, g, Y}
  user:   L = N xor R, V = h(ID || PW || N); card gains P_i, L, V

Login (card-side, after the biometric and V check pass):
  A1 = g^r_u, A2 = Y^r_u, NID = ID xor A2,
  C_i = h(ID || H || A1 || A2 || T1)          ->  <NID, A1, C_i, T1>

Server response:
  check T2 - T1 <= dt, A3 = A1^X, ID = NID xor A3,
  verify C_i, then A4 = g^r_s, A5 = A1^r_s,
  SK = h(ID || A3 || A5 || H || T1 || T3),
  Cs = h(ID || SK || H || T3)                 ->  <Cs, A4, T3>

User finish:
  check T4 - T3 <= dt, A6 = A4^r_u,
  SK = h(ID || A2 || A6 || H || T1 || T3), verify Cs.

The weakness exercised by the adversary engine: every value C_i binds
is either on the wire (A1, T1), reconstructable from the card plus the
session exponent r_u (A2, hence ID), or a function of the password
alone once N is exposed through L and the biometric key.  Leak r_u and
C_i becomes a password-testing oracle.
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

SCHEME = "baseline"

# Wire layouts: field name -> byte offset, in transmission order.
LOGIN_WIRE = ("NID", "A1", "C_i", "T1")
REPLY_WIRE = ("Cs", "A4", "T3")


@dataclass(frozen=True)
class BaselineCard:
    """Smart card contents after registration completes.

    Protocol names: e, h(), p, g, Y come from the issuer; P_i (helper),
    L (masked N) and V (local verifier) are written by the holder.
    """

    e: Field128
    hash_name: str
    params: GroupParams
    y: Field128
    helper: HelperData
    l: Field128
    v: Field128

    # Field count as stored on the card, in 128-bit units; the helper
    # string is one declared field although it is template-length.
    STORAGE_UNITS = 8
    FIELD_NAMES = ("e", "h", "p", "g", "Y", "P_i", "L", "V")


@dataclass(frozen=True)
class LoginMessage:
    nid: Field128
    a1: Field128
    c_i: Field128
    t1: Field128

    def encode(self) -> bytes:
        return b"".join((self.nid, self.a1, self.c_i, self.t1))

    @classmethod
    def decode(cls, raw: bytes) -> "LoginMessage":
        if len(raw) != 64:
            raise ValueError("baseline login message must be 64 bytes")
        return cls(*(Field128(raw[i : i + 16]) for i in range(0, 64, 16)))


@dataclass(frozen=True)
class ReplyMessage:
    cs: Field128
    a4: Field128
    t3: Field128

    def encode(self) -> bytes:
        return b"".join((self.cs, self.a4, self.t3))

    @classmethod
    def decode(cls, raw: bytes) -> "ReplyMessage":
        if len(raw) != 48:
            raise ValueError("baseline reply message must be 48 bytes")
        return cls(*(Field128(raw[i : i + 16]) for i in range(0, 48, 16)))


@dataclass
class PendingLogin:
    """Session secrets the card keeps between login and finish.

    These live only here; the scenario runner destroys the record when
    the session completes unless a leak step exported it first.
    """

    user_id: Field128
    h: Field128
    a2: Field128
    r_u: int
    t1: Field128


class BaselineServer:
    """Holds the long-term secret X and the registered-identity set."""

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
        self.registered: set[Field128] = set()

    def enroll(self, user_id: Field128, w: Field128) -> Field128:
        """Registration step at the server: returns e = h(ID||X) xor W."""
        if user_id in self.registered:
            raise RegistrationError("identity already registered")
        x_word = Field128.from_int(self.secret.x)
        h_val = self.env.h(user_id, x_word)
        self.registered.add(user_id)
        return h_val ^ w

    def respond(
        self, msg: LoginMessage, r_s: int, processing_ms: int = 0
    ) -> tuple[ReplyMessage, Field128]:
        """Authenticate a login message; returns (reply, session key).

        The freshness check runs before any exponentiation, so a stale
        or malformed message costs the server no group operations.
        `processing_ms` is simulated compute time between receiving the
        login and stamping the reply.
        """
        env = self.env
        t2 = env.clock.now()
        try:
            t1_ms = field_to_ms(msg.t1)
        except ValueError as exc:
            raise FreshnessFailure("malformed timestamp") from exc
        if t2 - t1_ms > env.delta_t_ms:
            raise FreshnessFailure("login timestamp outside the window")

        a3 = env.mod_exp(msg.a1, self.secret.x)
        user_id = msg.nid ^ a3
        if user_id not in self.registered:
            raise UnknownUser("recovered identity is not enrolled")
        x_word = Field128.from_int(self.secret.x)
        h_val = self.env.h(user_id, x_word)
        expected = env.h(user_id, h_val, msg.a1, a3, msg.t1)
        if expected != msg.c_i:
            raise AuthFailure("login verifier mismatch")

        a4 = env.mod_exp(env.params.g, r_s)
        a5 = env.mod_exp(msg.a1, r_s)
        if processing_ms:
            env.clock.advance(processing_ms)
        _, t3 = env.now_field()
        sk = env.h(user_id, a3, a5, h_val, msg.t1, t3)
        cs = env.h(user_id, sk, h_val, t3)
        return ReplyMessage(cs, a4, t3), sk


def register(
    env: Env,
    server: BaselineServer,
    user_id: Field128,
    password: str,
    template: BiometricTemplate,
    rng: SessionRng,
    exchange_ms: int = 0,
) -> BaselineCard:
    """Run the three registration steps; returns the issued card.

    `exchange_ms` models the secure-channel hop between user and
    server (this scheme reads no clock during registration, so it only
    moves simulated time forward).
    """
    pw = encode_text(password)
    with env.ledger.scope("registration", "user"):
        n = rng.field()
        w = env.h(pw, n)
        r, helper = gen(template, rng)
    if exchange_ms:
        env.clock.advance(exchange_ms)
    with env.ledger.scope("registration", "server"):
        e = server.enroll(user_id, w)
    with env.ledger.scope("registration", "user"):
        l_val = n ^ r
        v = env.h(user_id, pw, n)
    return BaselineCard(
        e=e,
        hash_name=env.hasher.name,
        params=env.params,
        y=server.secret.y,
        helper=helper,
        l=l_val,
        v=v,
    )


def login(
    env: Env,
    card: BaselineCard,
    user_id: Field128,
    password: str,
    template: BiometricTemplate,
    r_u: int,
) -> tuple[LoginMessage, PendingLogin]:
    """Card-side login step.

    Rejects the holder locally (V mismatch) before anything reaches the
    wire; a wrong password or a far-off biometric never produces a
    message.
    """
    if card.hash_name != env.hasher.name:
        raise ValueError("card was issued under a different hash function")
    pw = encode_text(password)
    r = rep(template, card.helper)
    n = card.l ^ r
    if env.h(user_id, pw, n) != card.v:
        raise LocalAuthFailure("card rejected holder")
    h_val = card.e ^ env.h(pw, n)

    _, t1 = env.now_field()
    a1 = env.mod_exp(card.params.g, r_u)
    a2 = env.mod_exp(card.y, r_u)
    nid = user_id ^ a2
    c_i = env.h(user_id, h_val, a1, a2, t1)
    msg = LoginMessage(nid, a1, c_i, t1)
    pending = PendingLogin(user_id=user_id, h=h_val, a2=a2, r_u=r_u, t1=t1)
    return msg, pending


def finish(env: Env, pending: PendingLogin, reply: ReplyMessage) -> Field128:
    """User-side completion: checks the reply, returns the session key."""
    t4 = env.clock.now()
    try:
        t3_ms = field_to_ms(reply.t3)
    except ValueError as exc:
        raise FreshnessFailure("malformed timestamp") from exc
    if t4 - t3_ms > env.delta_t_ms:
        raise FreshnessFailure("reply timestamp outside the window")

    a6 = env.mod_exp(reply.a4, pending.r_u)
    sk = env.h(pending.user_id, pending.a2, a6, pending.h, pending.t1, reply.t3)
    expected = env.h(pending.user_id, sk, pending.h, reply.t3)
    if expected != reply.cs:
        raise AuthFailure("reply verifier mismatch")
    return sk

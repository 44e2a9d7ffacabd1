"""Shared test fixtures: enrollments and honest sessions for both schemes."""

from dataclasses import dataclass

from triauth import baseline, improved
from triauth.channel import SERVER_TO_USER, USER_TO_SERVER, Transcript, TranscriptEntry
from triauth.core import Env, Field128, ProtocolConfig, SessionRng, SimClock, encode_text
from triauth.fuzzy import BiometricTemplate, perturb_within_tolerance

MODULES = {
    baseline.SCHEME: (baseline, baseline.BaselineServer),
    improved.SCHEME: (improved, improved.ImprovedServer),
}


@dataclass
class Enrollment:
    scheme: str
    env: Env
    server: object
    card: object
    user_id: Field128
    password: str
    template: BiometricTemplate
    rng: SessionRng


@dataclass
class SessionRun:
    msg: object
    pending: object
    reply: object
    sk_user: Field128
    sk_server: Field128
    r_u: int
    r_s: int


def enroll(
    scheme: str,
    seed: int = 1,
    identity: str = "alice",
    password: str = "correct-horse",
    delta_t_ms: int = 2000,
    exchange_ms: int = 10,
    start_ms: int = 1_700_000_000_000,
) -> Enrollment:
    mod, server_cls = MODULES[scheme]
    config = ProtocolConfig(delta_t_ms=delta_t_ms)
    env = Env.from_config(config, SimClock(start_ms))
    rng = SessionRng(seed)
    server = server_cls(env, rng=rng)
    user_id = encode_text(identity)
    template = BiometricTemplate.random(rng, config.template_bits)
    card = mod.register(
        env, server, user_id, password, template, rng, exchange_ms=exchange_ms
    )
    return Enrollment(scheme, env, server, card, user_id, password, template, rng)


def run_session(
    enr: Enrollment,
    noise_blocks: int = 16,
    gap_ms: int = 60_000,
    network_ms: int = 10,
    processing_ms: int = 3,
    password: str | None = None,
) -> SessionRun:
    """One full honest handshake; the clock moves like a real exchange."""
    mod, _ = MODULES[enr.scheme]
    env = enr.env
    env.clock.advance(gap_ms)
    reading = perturb_within_tolerance(enr.template, enr.rng, noise_blocks)
    r_u = enr.rng.exponent(env.params)
    r_s = enr.rng.exponent(env.params)
    with env.ledger.scope("login", "user"):
        msg, pending = mod.login(
            env, enr.card, enr.user_id,
            password if password is not None else enr.password,
            reading, r_u,
        )
    env.clock.advance(network_ms)
    with env.ledger.scope("authentication", "server"):
        reply, sk_server = enr.server.respond(msg, r_s, processing_ms=processing_ms)
    env.clock.advance(network_ms)
    with env.ledger.scope("authentication", "user"):
        sk_user = mod.finish(env, pending, reply)
    return SessionRun(msg, pending, reply, sk_user, sk_server, r_u, r_s)


def transcript_of(run: SessionRun, session_id: str = "eavesdrop") -> Transcript:
    """The wire view an eavesdropper would have recorded for a run."""
    return Transcript(
        session_id,
        rng_seed=None,
        entries=[
            TranscriptEntry(USER_TO_SERVER, "login", run.msg.encode(), 0),
            TranscriptEntry(SERVER_TO_USER, "reply", run.reply.encode(), 0),
        ],
    )

"""Baseline scheme: honest flow, every rejection path, replay, tampering."""

import dataclasses

import pytest

from support import enroll, run_session
from triauth import baseline
from triauth.core import (
    AuthFailure,
    Field128,
    FreshnessFailure,
    LocalAuthFailure,
    RegistrationError,
    SessionRng,
    UnknownUser,
    ms_to_field,
)
from triauth.fuzzy import BiometricTemplate, perturb_within_tolerance


def test_honest_session_agrees_on_the_key():
    enr = enroll("baseline")
    run = run_session(enr)
    assert run.sk_user == run.sk_server
    assert len(run.sk_user) == 16


def test_sessions_with_fresh_exponents_get_fresh_keys():
    enr = enroll("baseline")
    first = run_session(enr)
    second = run_session(enr)
    assert first.sk_user == first.sk_server
    assert second.sk_user == second.sk_server
    assert first.sk_user != second.sk_user


def test_card_contents_never_store_the_raw_password_or_identity():
    enr = enroll("baseline")
    stored = {bytes(enr.card.e), bytes(enr.card.l), bytes(enr.card.v),
              bytes(enr.card.y)}
    from triauth.core import encode_text

    assert bytes(encode_text(enr.password)) not in stored
    assert bytes(enr.user_id) not in stored


def test_duplicate_registration_is_refused():
    enr = enroll("baseline")
    with pytest.raises(RegistrationError):
        enr.server.enroll(enr.user_id, Field128.zero())


def test_wrong_password_is_rejected_locally():
    enr = enroll("baseline")
    enr.env.clock.advance(60_000)
    reading = perturb_within_tolerance(enr.template, enr.rng, 8)
    with pytest.raises(LocalAuthFailure):
        baseline.login(
            enr.env, enr.card, enr.user_id, "wrong-password", reading,
            enr.rng.exponent(enr.env.params),
        )


def test_wrong_person_biometric_is_rejected_locally():
    enr = enroll("baseline")
    stranger = BiometricTemplate.random(SessionRng(777), 512)
    with pytest.raises(LocalAuthFailure):
        baseline.login(
            enr.env, enr.card, enr.user_id, enr.password, stranger,
            enr.rng.exponent(enr.env.params),
        )


def test_wrong_identity_is_rejected_locally():
    from triauth.core import encode_text

    enr = enroll("baseline")
    reading = perturb_within_tolerance(enr.template, enr.rng, 4)
    with pytest.raises(LocalAuthFailure):
        baseline.login(
            enr.env, enr.card, encode_text("mallory"), enr.password, reading,
            enr.rng.exponent(enr.env.params),
        )


def test_rejected_holder_never_reaches_the_wire():
    """A local rejection must happen before any message exists."""
    enr = enroll("baseline")
    try:
        baseline.login(
            enr.env, enr.card, enr.user_id, "bad", enr.template,
            enr.rng.exponent(enr.env.params),
        )
    except LocalAuthFailure:
        pass
    # no exponentiation happened either: rejection precedes A1/A2
    assert enr.env.ledger.modexp_total() == 0


def test_card_issued_under_other_hash_is_refused():
    enr = enroll("baseline")
    other = dataclasses.replace(enr.card, hash_name="sha512")
    with pytest.raises(ValueError):
        baseline.login(
            enr.env, other, enr.user_id, enr.password, enr.template,
            enr.rng.exponent(enr.env.params),
        )


def test_stale_login_is_rejected_before_any_exponentiation():
    enr = enroll("baseline")
    enr.env.clock.advance(60_000)
    reading = perturb_within_tolerance(enr.template, enr.rng, 8)
    msg, _ = baseline.login(
        enr.env, enr.card, enr.user_id, enr.password, reading,
        enr.rng.exponent(enr.env.params),
    )
    modexps_before = enr.env.ledger.modexp_total()
    enr.env.clock.advance(enr.env.delta_t_ms + 1)
    with pytest.raises(FreshnessFailure):
        enr.server.respond(msg, enr.rng.exponent(enr.env.params))
    assert enr.env.ledger.modexp_total() == modexps_before


def test_login_at_the_window_edge_is_accepted():
    enr = enroll("baseline")
    enr.env.clock.advance(60_000)
    reading = perturb_within_tolerance(enr.template, enr.rng, 8)
    msg, pending = baseline.login(
        enr.env, enr.card, enr.user_id, enr.password, reading,
        enr.rng.exponent(enr.env.params),
    )
    enr.env.clock.advance(enr.env.delta_t_ms)  # exactly delta_t late
    reply, sk_server = enr.server.respond(msg, enr.rng.exponent(enr.env.params))
    assert baseline.finish(enr.env, pending, reply) == sk_server


def test_malformed_timestamp_is_a_freshness_failure():
    enr = enroll("baseline")
    run = run_session(enr)
    garbled = baseline.LoginMessage(
        run.msg.nid, run.msg.a1, run.msg.c_i, Field128.from_int(1 << 127)
    )
    modexps_before = enr.env.ledger.modexp_total()
    with pytest.raises(FreshnessFailure):
        enr.server.respond(garbled, enr.rng.exponent(enr.env.params))
    assert enr.env.ledger.modexp_total() == modexps_before


def test_unregistered_identity_is_unknown():
    enr = enroll("baseline")
    enr.env.clock.advance(10)
    reading = perturb_within_tolerance(enr.template, enr.rng, 8)
    msg, _ = baseline.login(
        enr.env, enr.card, enr.user_id, enr.password, reading,
        enr.rng.exponent(enr.env.params),
    )
    # flip NID so the server unmasks a different identity
    altered = baseline.LoginMessage(
        msg.nid ^ Field128.from_int(1), msg.a1, msg.c_i, msg.t1
    )
    with pytest.raises(UnknownUser):
        enr.server.respond(altered, enr.rng.exponent(enr.env.params))


def test_replay_of_a_recorded_login_is_rejected_after_the_window():
    enr = enroll("baseline")
    run = run_session(enr)
    enr.env.clock.advance(enr.env.delta_t_ms + 1)
    with pytest.raises(FreshnessFailure):
        enr.server.respond(run.msg, enr.rng.exponent(enr.env.params))


def test_single_bit_tamper_on_each_login_field_is_rejected():
    enr = enroll("baseline")
    enr.env.clock.advance(60_000)
    for offset in range(0, 64, 16):
        reading = perturb_within_tolerance(enr.template, enr.rng, 8)
        msg, _ = baseline.login(
            enr.env, enr.card, enr.user_id, enr.password, reading,
            enr.rng.exponent(enr.env.params),
        )
        raw = bytearray(msg.encode())
        raw[offset] ^= 0x01
        tampered = baseline.LoginMessage.decode(bytes(raw))
        # a flipped group element may also unmask outside (0, p): that
        # surfaces as ValueError and is a rejection all the same
        with pytest.raises((AuthFailure, UnknownUser, FreshnessFailure, ValueError)):
            enr.server.respond(tampered, enr.rng.exponent(enr.env.params))
        enr.env.clock.advance(100)


def test_single_bit_tamper_on_each_reply_field_is_rejected():
    enr = enroll("baseline")
    for offset in range(0, 48, 16):
        enr.env.clock.advance(1000)
        reading = perturb_within_tolerance(enr.template, enr.rng, 8)
        msg, pending = baseline.login(
            enr.env, enr.card, enr.user_id, enr.password, reading,
            enr.rng.exponent(enr.env.params),
        )
        reply, _ = enr.server.respond(msg, enr.rng.exponent(enr.env.params))
        raw = bytearray(reply.encode())
        raw[offset] ^= 0x01
        tampered = baseline.ReplyMessage.decode(bytes(raw))
        with pytest.raises((AuthFailure, FreshnessFailure, ValueError)):
            baseline.finish(enr.env, pending, tampered)


def test_stale_reply_is_rejected_by_the_user():
    enr = enroll("baseline")
    enr.env.clock.advance(500)
    reading = perturb_within_tolerance(enr.template, enr.rng, 8)
    msg, pending = baseline.login(
        enr.env, enr.card, enr.user_id, enr.password, reading,
        enr.rng.exponent(enr.env.params),
    )
    reply, _ = enr.server.respond(msg, enr.rng.exponent(enr.env.params))
    enr.env.clock.advance(enr.env.delta_t_ms + 1)
    with pytest.raises(FreshnessFailure):
        baseline.finish(enr.env, pending, reply)


def test_wire_encoding_round_trips():
    enr = enroll("baseline")
    run = run_session(enr)
    assert baseline.LoginMessage.decode(run.msg.encode()) == run.msg
    assert baseline.ReplyMessage.decode(run.reply.encode()) == run.reply
    assert len(run.msg.encode()) == 16 * len(baseline.LOGIN_WIRE)
    assert len(run.reply.encode()) == 16 * len(baseline.REPLY_WIRE)
    with pytest.raises(ValueError):
        baseline.LoginMessage.decode(b"\x00" * 63)
    with pytest.raises(ValueError):
        baseline.ReplyMessage.decode(b"\x00" * 64)


def test_login_timestamps_are_clock_readings():
    enr = enroll("baseline", start_ms=1_700_000_000_000)
    enr.env.clock.advance(1234)
    reading = perturb_within_tolerance(enr.template, enr.rng, 8)
    msg, _ = baseline.login(
        enr.env, enr.card, enr.user_id, enr.password, reading,
        enr.rng.exponent(enr.env.params),
    )
    assert msg.t1 == ms_to_field(1_700_000_000_000 + 10 + 1234)


def test_reply_timestamp_is_later_than_login_timestamp():
    """processing_ms must separate T3 from T1 or transpositions hide."""
    enr = enroll("baseline")
    run = run_session(enr)
    assert run.reply.t3 != run.msg.t1

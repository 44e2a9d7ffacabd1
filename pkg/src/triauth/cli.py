"""Command-line interface.

Subcommands::

    register      enroll a user: writes card, template and server state
    login-run     full handshake over the simulated channel
    attack        offline dictionary attack from captured material
    cost-report   instrumented run vs the nominal cost figures
    replay        run a scenario; record it, or verify byte-identity
    verify-card   structural check of a card file

Exit codes: 0 success; 2 precondition or file-format problem;
3 freshness rejection; 4 authentication rejection (verifier or
unknown identity); 5 replay drift; 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import adversary, baseline, improved
from .channel import SERVER_TO_USER, USER_TO_SERVER, SimChannel
from .core import (
    AuthFailure,
    Env,
    FreshnessFailure,
    LocalAuthFailure,
    ProtocolConfig,
    ProtocolError,
    RealClock,
    RegistrationError,
    SessionRng,
    SimClock,
    UnknownUser,
    derive_seed,
    encode_text,
)
from .costs import cost_report, format_cost_report
from .files import (
    FileFormatError,
    load_card,
    load_config,
    load_dictionary,
    load_leak,
    load_server,
    load_template,
    load_transcript,
    save_card,
    save_leak,
    save_server,
    save_template,
    save_transcript,
    write_json_report,
)
from .fuzzy import BiometricTemplate, perturb_within_tolerance
from .scenario import (
    compare_with_recording,
    load_scenario,
    run_scenario,
    write_result,
)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_PRECONDITION = 2
EXIT_FRESHNESS = 3
EXIT_AUTH = 4
EXIT_REPLAY_DRIFT = 5

_MODULES = {
    baseline.SCHEME: (baseline, baseline.BaselineServer),
    improved.SCHEME: (improved, improved.ImprovedServer),
}


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, FreshnessFailure):
        return EXIT_FRESHNESS
    if isinstance(exc, (AuthFailure, LocalAuthFailure, UnknownUser)):
        return EXIT_AUTH
    if isinstance(exc, (RegistrationError, FileFormatError, ValueError, OSError)):
        return EXIT_PRECONDITION
    return EXIT_UNEXPECTED


def _load_env(args, clock=None) -> Env:
    config = load_config(args.config) if args.config else ProtocolConfig()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if clock is None:
        clock = RealClock() if getattr(args, "real_clock", False) else SimClock()
    return Env.from_config(config, clock)


def _print(line: str) -> None:
    sys.stdout.write(line + "\n")


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_register(args) -> int:
    config = load_config(args.config) if args.config else ProtocolConfig()
    if args.seed is not None:
        config.seed = args.seed
    clock = RealClock() if args.real_clock else SimClock()
    env = Env.from_config(config, clock)
    mod, server_cls = _MODULES[args.scheme]
    seed = config.seed
    rng = SessionRng(seed)

    state = Path(args.server_state)
    if state.exists():
        server = load_server(state, env)
    else:
        server = server_cls(env, rng=SessionRng(derive_seed(seed, "server-secret")))

    if args.template:
        template = load_template(args.template)
    else:
        template = BiometricTemplate.random(
            SessionRng(derive_seed(seed, "template")), config.template_bits
        )
    user_id = encode_text(args.id)
    card = mod.register(
        env, server, user_id, args.password, template, rng,
        exchange_ms=args.latency,
    )
    save_card(card, args.card_out)
    save_server(server, state)
    if args.template_out:
        save_template(template, args.template_out)
    _print("registered %s under the %s scheme" % (args.id, args.scheme))
    _print("card -> %s" % args.card_out)
    _print("server state -> %s" % args.server_state)
    if args.template_out:
        _print("template -> %s" % args.template_out)
    return EXIT_OK


def _cmd_login_run(args) -> int:
    env = _load_env(args)
    mod, _ = _MODULES[args.scheme]
    server = load_server(args.server_state, env)
    card = load_card(args.card)
    template = load_template(args.template)
    seed = args.seed
    rng = SessionRng(seed)
    if args.advance_ms:
        env.clock.advance(args.advance_ms)

    session_id = "cli-%d" % seed
    channel = SimChannel(
        env.clock, latency_ms=args.latency, session_id=session_id, rng_seed=seed
    )
    reading = perturb_within_tolerance(template, rng, args.noise_blocks)
    r_u = rng.exponent(env.params)
    r_s = SessionRng(derive_seed(seed, "server-ephemeral")).exponent(env.params)

    try:
        with env.ledger.scope("login", "user"):
            msg, pending = mod.login(
                env, card, encode_text(args.id), args.password, reading, r_u
            )
        channel.send(USER_TO_SERVER, "login", msg.encode())
        with env.ledger.scope("authentication", "server"):
            reply, sk_server = server.respond(
                mod.LoginMessage.decode(channel.recv(USER_TO_SERVER)),
                r_s,
                processing_ms=3,
            )
        channel.send(SERVER_TO_USER, "reply", reply.encode())
        with env.ledger.scope("authentication", "user"):
            sk_user = mod.finish(
                env, pending, mod.ReplyMessage.decode(channel.recv(SERVER_TO_USER))
            )
    except ProtocolError as exc:
        channel.terminate(SERVER_TO_USER)
        _print("session rejected locally: %s (%s)" % (exc, exc.code))
        _print("wire view: session terminated")
        return _exit_code_for(exc)

    match = sk_user == sk_server
    _print("session %s complete" % session_id)
    _print("session key (user):   %s" % sk_user.hex())
    _print("session key (server): %s" % sk_server.hex())
    _print("keys match: %s" % ("yes" if match else "NO"))
    for where, n in env.ledger.phase_table().items():
        _print("hash %-24s %d" % (where, n))

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_transcript(channel.transcript(), out / "transcript.bin")
        _print("transcript -> %s" % (out / "transcript.bin"))
        if args.leak:
            leak = {
                "session": session_id,
                "seed": seed,
                "r_u": r_u,
                "r_s": r_s,
            }
            save_leak(leak, out / "leak.json")
            _print("leaked session randomness -> %s" % (out / "leak.json"))
    return EXIT_OK if match else EXIT_UNEXPECTED


def _cmd_attack(args) -> int:
    card = load_card(args.card)
    transcript = load_transcript(args.transcript)
    template = load_template(args.template) if args.template else None
    leak = load_leak(args.leak) if args.leak else {}
    words = load_dictionary(args.dict)

    knowledge = adversary.AdversaryKnowledge.assemble(
        args.scheme,
        card=card,
        transcripts=(transcript,),
        biometric=template,
        r_u=leak.get("r_u"),
        r_s=leak.get("r_s"),
        dictionary=words,
    )
    if args.scheme == baseline.SCHEME:
        if args.grant_timestamps:
            raise ValueError("--grant-timestamps applies to the improved scheme")
        outcome = adversary.attack_baseline(knowledge)
    else:
        granted = None
        if args.grant_timestamps:
            t1_ms, t2_ms = (int(x) for x in args.grant_timestamps.split(","))
            granted = (t1_ms, t2_ms)
        outcome = adversary.attack_improved(knowledge, granted)

    _print("attack outcome: %s" % outcome.status)
    _print("verifier evaluations: %d" % outcome.work)
    if outcome.out_of_model:
        _print("NOTE: ran with out-of-model timestamps granted")
    if outcome.status == adversary.RECOVERED:
        _print("password: %s" % outcome.password)
        _print("identity: %s" % outcome.identity.hex())
        _print("forged session key: %s" % outcome.session_key.hex())
    for line in adversary.explain_gaps(outcome):
        _print(line)

    if args.out:
        write_json_report(
            {
                "scheme": args.scheme,
                "status": outcome.status,
                "work": outcome.work,
                "out_of_model": outcome.out_of_model,
                "password": outcome.password,
                "identity": outcome.identity.hex() if outcome.identity else None,
                "session_key": outcome.session_key.hex()
                if outcome.session_key
                else None,
                "gaps": [
                    {"equation": g.equation, "unknown": list(g.unknown)}
                    for g in outcome.gaps
                ],
            },
            args.out,
        )
        _print("report -> %s" % args.out)
    return EXIT_OK


def _cmd_cost_report(args) -> int:
    config = load_config(args.config) if args.config else None
    report = cost_report(args.scheme, config, seed=args.seed)
    _print(format_cost_report(report))
    if args.out:
        write_json_report(report, args.out)
        _print("report -> %s" % args.out)
    return EXIT_OK


def _cmd_replay(args) -> int:
    script = load_scenario(args.scenario)
    config = load_config(args.config) if args.config else None
    result = run_scenario(script, config)
    out = Path(args.out)
    if (out / "report.json").exists():
        mismatches = compare_with_recording(result, out)
        if mismatches:
            for m in mismatches:
                _print("replay drift: %s" % m)
            return EXIT_REPLAY_DRIFT
        _print("replay of %s is byte-identical to the recording" % script.name)
        return EXIT_OK
    write_result(result, out)
    _print("recorded scenario %s -> %s" % (script.name, out))
    for line in result.text.splitlines():
        _print(line)
    return EXIT_OK


def _cmd_verify_card(args) -> int:
    card = load_card(args.card)
    scheme = (
        baseline.SCHEME
        if isinstance(card, baseline.BaselineCard)
        else improved.SCHEME
    )
    _print("card OK: %s scheme" % scheme)
    _print("hash: %s" % card.hash_name)
    _print("group: p=%032x g=%d (verified safe prime)" % (card.params.p, card.params.g))
    _print("helper bits: %d" % card.helper.nbits)
    _print("declared fields: %d" % card.STORAGE_UNITS)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triauth",
        description="three-factor authentication scheme simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scheme=True):
        if scheme:
            p.add_argument(
                "--scheme", choices=sorted(_MODULES), required=True,
                help="which scheme variant",
            )
        p.add_argument("--config", help="config file (key = value lines)")
        p.add_argument("--seed", type=int, default=1, help="deterministic seed")

    p = sub.add_parser("register", help="enroll a user and issue a card")
    common(p)
    p.add_argument("--id", required=True, help="identity (at most 16 UTF-8 bytes)")
    p.add_argument("--password", required=True)
    p.add_argument("--card-out", default="user.card")
    p.add_argument("--server-state", default="server.state")
    p.add_argument("--template", help="existing template file to enroll")
    p.add_argument("--template-out", help="where to save the enrolled template")
    p.add_argument("--latency", type=int, default=10,
                   help="secure-channel hop in ms")
    p.add_argument("--real-clock", action="store_true",
                   help="wall clock instead of the simulated one")
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("login-run", help="run one full authentication")
    common(p)
    p.add_argument("--id", required=True)
    p.add_argument("--password", required=True)
    p.add_argument("--card", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--server-state", required=True)
    p.add_argument("--noise-blocks", type=int, default=16,
                   help="biometric reading noise (1 flip in this many blocks)")
    p.add_argument("--latency", type=int, default=10)
    p.add_argument("--advance-ms", type=int, default=60_000,
                   help="simulated time between registration and login")
    p.add_argument("--out", help="directory for transcript (and leak)")
    p.add_argument("--leak", action="store_true",
                   help="export session randomness for the attack command")
    p.add_argument("--real-clock", action="store_true")
    p.set_defaults(func=_cmd_login_run)

    p = sub.add_parser("attack", help="offline dictionary attack")
    common(p)
    p.add_argument("--card", required=True, help="captured card file")
    p.add_argument("--transcript", required=True, help="captured transcript")
    p.add_argument("--template", help="victim's biometric template")
    p.add_argument("--leak", help="leak.json with session randomness")
    p.add_argument("--dict", required=True, help="password dictionary file")
    p.add_argument("--grant-timestamps",
                   help="T1,T2 in ms: explicit out-of-model grant "
                        "(improved scheme white-box control)")
    p.add_argument("--out", help="write a JSON report here")
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("cost-report", help="measured vs nominal costs")
    common(p)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=_cmd_cost_report)

    p = sub.add_parser("replay", help="record or verify a scenario")
    common(p, scheme=False)
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True,
                   help="recording directory (created on first run)")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("verify-card", help="structural card file check")
    p.add_argument("--card", required=True)
    p.set_defaults(func=_cmd_verify_card)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProtocolError as exc:
        sys.stderr.write("rejected: %s (%s)\n" % (exc, exc.code))
        return _exit_code_for(exc)
    except (FileFormatError, ValueError, OSError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return EXIT_PRECONDITION
    except Exception as exc:  # pragma: no cover - last resort
        sys.stderr.write("unexpected error: %r\n" % exc)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())

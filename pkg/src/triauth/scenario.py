"""Scripted end-to-end runs: parse, execute, record, replay.

A scenario file is JSON describing a deterministic sequence of steps —
registrations, logins, server responses, clock movement, leaks to the
adversary, tampering, and attacks.  Every random draw comes from a
seed written in the file, every timestamp from the simulated clock, so
running the same scenario twice (or on another machine) produces
byte-identical transcripts and reports.  That identity is what the
replay command checks.

Step vocabulary::

    {"op": "register", "user": "alice", "id": "alice",
     "password": "...", "seed": 101}
    {"op": "advance-clock", "ms": 60000}
    {"op": "login", "user": "alice", "seed": 102, "noise_blocks": 16}
    {"op": "respond", "seed": 103}
    {"op": "finish"}
    {"op": "leak", "values": ["card", "biometric", "r_u", "r_s",
                              "transcript"]}
    {"op": "tamper", "message": "login", "field": "C_i", "mask": "01"}
    {"op": "attack", "dictionary": {"size": 1000, "seed": 9,
                                    "plant_at": 417}}

An attack step may instead reference {"file": "words.txt"}, and for
the improved scheme may set "grant_timestamps": true to run the
documented out-of-model control alongside the in-model attack.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import adversary, baseline, improved
from .channel import SERVER_TO_USER, USER_TO_SERVER, SimChannel, Transcript
from .core import (
    Env,
    ProtocolConfig,
    ProtocolError,
    SessionRng,
    SimClock,
    encode_text,
)
from .files import (
    load_dictionary,
    save_transcript,
    transcript_bytes,
    write_json_report,
)
from .fuzzy import BiometricTemplate, perturb_within_tolerance

KNOWN_OPS = (
    "register",
    "login",
    "respond",
    "finish",
    "leak",
    "attack",
    "tamper",
    "advance-clock",
)

DEFAULT_EPOCH_MS = 1_700_000_000_000
LEAKABLE = ("card", "biometric", "r_u", "r_s", "transcript")


@dataclass
class ScenarioScript:
    name: str
    scheme: str
    seed: int
    steps: list[dict]
    latency_ms: int = 10
    epoch_ms: int = DEFAULT_EPOCH_MS
    delta_t_ms: int | None = None

    def validate(self) -> None:
        if self.scheme not in (baseline.SCHEME, improved.SCHEME):
            raise ValueError("scenario scheme must be baseline or improved")
        for i, step in enumerate(self.steps, 1):
            op = step.get("op")
            if op not in KNOWN_OPS:
                raise ValueError("step %d: unknown op %r" % (i, op))


def load_scenario(path) -> ScenarioScript:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError("%s: not valid JSON (%s)" % (path, exc)) from None
    for need in ("name", "scheme", "seed", "steps"):
        if need not in doc:
            raise ValueError("%s: missing %r" % (path, need))
    script = ScenarioScript(
        name=doc["name"],
        scheme=doc["scheme"],
        seed=doc["seed"],
        steps=doc["steps"],
        latency_ms=doc.get("latency_ms", 10),
        epoch_ms=doc.get("epoch_ms", DEFAULT_EPOCH_MS),
        delta_t_ms=doc.get("delta_t_ms"),
    )
    script.validate()
    return script


@dataclass
class ScenarioResult:
    report: dict
    text: str
    transcripts: dict[str, Transcript]


@dataclass
class _User:
    user_id: "bytes"
    password: str
    template: BiometricTemplate
    card: object = None


@dataclass
class _Session:
    session_id: str
    user: str
    seed: int
    channel: SimChannel
    pending: object = None
    r_u: int | None = None
    r_s: int | None = None
    sk_user: bytes | None = None
    sk_server: bytes | None = None
    error: str | None = None


class _Runner:
    def __init__(self, script: ScenarioScript, config: ProtocolConfig | None):
        self.script = script
        config = config or ProtocolConfig()
        if script.delta_t_ms is not None:
            config.delta_t_ms = script.delta_t_ms
        self.config = config
        self.env = Env.from_config(config, SimClock(script.epoch_ms))
        mod, server_cls = {
            baseline.SCHEME: (baseline, baseline.BaselineServer),
            improved.SCHEME: (improved, improved.ImprovedServer),
        }[script.scheme]
        self.mod = mod
        self.server = server_cls(self.env, rng=SessionRng(script.seed))
        self.users: dict[str, _User] = {}
        self.sessions: list[_Session] = []
        self.pool: dict[str, object] = {"transcripts": []}
        self.step_reports: list[dict] = []
        self.attack_reports: list[dict] = []

    # -- step handlers --------------------------------------------------

    def run(self) -> ScenarioResult:
        for i, step in enumerate(self.script.steps, 1):
            handler = getattr(self, "_op_" + step["op"].replace("-", "_"))
            outcome = {"step": i, "op": step["op"]}
            outcome.update(handler(step))
            self.step_reports.append(outcome)
        return self._result()

    def _op_register(self, step) -> dict:
        rng = SessionRng(step["seed"])
        name = step["user"]
        if name in self.users:
            return {"ok": False, "error": "user already defined"}
        user = _User(
            user_id=encode_text(step.get("id", name)),
            password=step["password"],
            template=BiometricTemplate.random(rng, self.config.template_bits),
        )
        try:
            user.card = self.mod.register(
                self.env, self.server, user.user_id, user.password,
                user.template, rng, exchange_ms=self.script.latency_ms,
            )
        except ProtocolError as exc:
            return {"ok": False, "error": exc.code}
        self.users[name] = user
        return {"ok": True, "user": name}

    def _op_advance_clock(self, step) -> dict:
        self.env.clock.advance(step["ms"])
        return {"ok": True, "now_ms": self.env.clock.now()}

    def _op_login(self, step) -> dict:
        user = self.users[step["user"]]
        seed = step["seed"]
        rng = SessionRng(seed)
        session = _Session(
            session_id="s%03d" % (len(self.sessions) + 1),
            user=step["user"],
            seed=seed,
            channel=SimChannel(
                self.env.clock,
                latency_ms=self.script.latency_ms,
                session_id="%s-s%03d" % (self.script.name, len(self.sessions) + 1),
                rng_seed=seed,
            ),
        )
        self.sessions.append(session)
        reading = perturb_within_tolerance(
            user.template, rng, step.get("noise_blocks", 16)
        )
        session.r_u = rng.exponent(self.env.params)
        try:
            with self.env.ledger.scope("login", "user"):
                msg, session.pending = self.mod.login(
                    self.env, user.card, user.user_id, user.password,
                    reading, session.r_u,
                )
        except ProtocolError as exc:
            session.error = exc.code
            return {"ok": False, "session": session.session_id, "error": exc.code}
        raw = msg.encode()
        self.env.ledger.record_wire("login", len(raw))
        session.channel.send(USER_TO_SERVER, "login", raw)
        return {"ok": True, "session": session.session_id}

    def _op_respond(self, step) -> dict:
        session = self._current()
        rng = SessionRng(step["seed"])
        session.r_s = rng.exponent(self.env.params)
        try:
            raw = session.channel.recv(USER_TO_SERVER)
        except LookupError:
            return {"ok": False, "session": session.session_id,
                    "error": "nothing in flight"}
        login_cls = self.mod.LoginMessage
        try:
            msg = login_cls.decode(raw)
            with self.env.ledger.scope("authentication", "server"):
                reply, session.sk_server = self.server.respond(
                    msg, session.r_s, processing_ms=step.get("processing_ms", 3)
                )
        except (ProtocolError, ValueError) as exc:
            code = getattr(exc, "code", "malformed")
            session.error = code
            session.channel.terminate(SERVER_TO_USER)
            return {"ok": False, "session": session.session_id, "error": code}
        raw_reply = reply.encode()
        self.env.ledger.record_wire("reply", len(raw_reply))
        session.channel.send(SERVER_TO_USER, "reply", raw_reply)
        return {"ok": True, "session": session.session_id}

    def _op_finish(self, step) -> dict:
        session = self._current()
        try:
            raw = session.channel.recv(SERVER_TO_USER)
        except LookupError:
            return {"ok": False, "session": session.session_id,
                    "error": "no reply: session terminated"}
        if raw == b"session terminated":
            return {"ok": False, "session": session.session_id,
                    "error": "no reply: session terminated"}
        try:
            reply = self.mod.ReplyMessage.decode(raw)
            with self.env.ledger.scope("authentication", "user"):
                session.sk_user = self.mod.finish(self.env, session.pending, reply)
        except (ProtocolError, ValueError) as exc:
            code = getattr(exc, "code", "malformed")
            session.error = code
            return {"ok": False, "session": session.session_id, "error": code}
        finally:
            session.pending = None  # session secrets destroyed either way
        match = (
            session.sk_server is not None and session.sk_user == session.sk_server
        )
        return {"ok": True, "session": session.session_id, "keys_match": match}

    def _op_leak(self, step) -> dict:
        session = self._current()
        user = self.users[session.user]
        values = step.get("values", list(LEAKABLE))
        for value in values:
            if value not in LEAKABLE:
                return {"ok": False, "error": "cannot leak %r" % value}
        if "card" in values:
            self.pool["card"] = user.card
        if "biometric" in values:
            self.pool["biometric"] = user.template
        if "r_u" in values:
            self.pool["r_u"] = session.r_u
        if "r_s" in values:
            self.pool["r_s"] = session.r_s
        if "transcript" in values:
            self.pool["transcripts"].append(session.channel.transcript())
        self.pool["victim"] = session.user
        return {"ok": True, "leaked": sorted(values), "session": session.session_id}

    def _op_tamper(self, step) -> dict:
        session = self._current()
        label = step["message"]
        direction = USER_TO_SERVER if label == "login" else SERVER_TO_USER
        names = adversary.wire_layout(self.script.scheme, label)
        fieldname = step["field"]
        if fieldname not in names:
            return {"ok": False, "error": "no field %r in %s" % (fieldname, label)}
        mask = bytes.fromhex(step["mask"])
        try:
            session.channel.corrupt_in_flight(
                direction, 16 * names.index(fieldname), mask
            )
        except LookupError:
            return {"ok": False, "error": "nothing in flight"}
        return {"ok": True, "message": label, "field": fieldname,
                "mask": mask.hex()}

    def _op_attack(self, step) -> dict:
        words, dict_note = self._dictionary(step)
        knowledge = adversary.AdversaryKnowledge.assemble(
            self.script.scheme,
            card=self.pool.get("card"),
            transcripts=tuple(self.pool["transcripts"]),
            biometric=self.pool.get("biometric"),
            r_u=self.pool.get("r_u"),
            r_s=self.pool.get("r_s"),
            dictionary=words,
        )
        if self.script.scheme == baseline.SCHEME:
            outcome = adversary.attack_baseline(knowledge)
        else:
            granted = None
            if step.get("grant_timestamps"):
                victim = self.users[self.pool["victim"]]
                rec = next(
                    r for r in self.server.records
                    if r.user_id == victim.user_id
                )
                granted = (rec.t1_ms, rec.t2_ms)
            outcome = adversary.attack_improved(knowledge, granted)
        entry = {
            "scheme": self.script.scheme,
            "status": outcome.status,
            "work": outcome.work,
            "out_of_model": outcome.out_of_model,
            "dictionary": dict_note,
            "password": outcome.password,
            "identity": outcome.identity.hex() if outcome.identity else None,
            "session_key": outcome.session_key.hex()
            if outcome.session_key
            else None,
            "gaps": [
                {"equation": g.equation, "unknown": list(g.unknown)}
                for g in outcome.gaps
            ],
        }
        self.attack_reports.append(entry)
        return {"ok": True, "status": outcome.status, "work": outcome.work,
                "out_of_model": outcome.out_of_model}

    # -- helpers ---------------------------------------------------------

    def _current(self) -> _Session:
        if not self.sessions:
            raise ValueError("no session yet: login must come first")
        return self.sessions[-1]

    def _dictionary(self, step) -> tuple[list[str], dict]:
        spec = step.get("dictionary", {})
        if "file" in spec:
            return load_dictionary(spec["file"]), {"file": spec["file"]}
        size = spec.get("size", 1000)
        rng = SessionRng(spec.get("seed", self.script.seed))
        words = ["w%05d%04x" % (i, rng.below(1 << 16)) for i in range(size)]
        plant_at = spec.get("plant_at")
        note = {"size": size, "seed": spec.get("seed", self.script.seed)}
        if plant_at is not None:
            victim = self.users[self.pool.get("victim", step.get("user", ""))]
            words.insert(plant_at, victim.password)
            note["plant_at"] = plant_at
        return words, note

    def _result(self) -> ScenarioResult:
        ledger = self.env.ledger
        sessions = {}
        transcripts = {}
        for s in self.sessions:
            sessions[s.session_id] = {
                "user": s.user,
                "seed": s.seed,
                "sk_user": s.sk_user.hex() if s.sk_user else None,
                "sk_server": s.sk_server.hex() if s.sk_server else None,
                "keys_match": bool(
                    s.sk_user and s.sk_server and s.sk_user == s.sk_server
                ),
                "error": s.error,
            }
            transcripts[s.session_id] = s.channel.transcript()
        report = {
            "name": self.script.name,
            "scheme": self.script.scheme,
            "seed": self.script.seed,
            "steps": self.step_reports,
            "sessions": sessions,
            "attacks": self.attack_reports,
            "costs": {
                "hash_by_phase": ledger.phase_table(),
                "hash_total": ledger.hash_total(),
                "modexp_total": ledger.modexp_total(),
                "wire_bits": ledger.wire_bits_total(),
            },
            "final_clock_ms": self.env.clock.now(),
        }
        return ScenarioResult(report, _render_text(report, transcripts), transcripts)


def _render_text(report: dict, transcripts: dict[str, Transcript]) -> str:
    lines = [
        "scenario %s (%s scheme, seed %d)"
        % (report["name"], report["scheme"], report["seed"])
    ]
    for step in report["steps"]:
        detail = " ".join(
            "%s=%s" % (k, v)
            for k, v in step.items()
            if k not in ("step", "op", "ok")
        )
        lines.append(
            "step %02d %-14s %s%s"
            % (
                step["step"],
                step["op"],
                "ok" if step["ok"] else "FAILED",
                (" " + detail) if detail else "",
            )
        )
    for sid, info in report["sessions"].items():
        lines.append(
            "session %s user=%s keys_match=%s error=%s"
            % (sid, info["user"], info["keys_match"], info["error"])
        )
    for i, attack in enumerate(report["attacks"], 1):
        lines.append(
            "attack %d status=%s work=%d out_of_model=%s"
            % (i, attack["status"], attack["work"], attack["out_of_model"])
        )
        if attack["password"]:
            lines.append(
                "  recovered password=%s identity=%s sk=%s"
                % (attack["password"], attack["identity"], attack["session_key"])
            )
        for gap in attack["gaps"]:
            lines.append(
                "  gap: equation %s unknown %s"
                % (gap["equation"], ",".join(gap["unknown"]))
            )
    for sid, transcript in transcripts.items():
        for entry in transcript.entries:
            lines.append(
                "wire %s %s %s at %d: %s"
                % (sid, entry.direction, entry.label, entry.captured_at,
                   entry.data.hex())
            )
    costs = report["costs"]
    lines.append(
        "costs hash_total=%d modexp_total=%d wire_bits=%d"
        % (costs["hash_total"], costs["modexp_total"], costs["wire_bits"])
    )
    return "\n".join(lines) + "\n"


def run_scenario(
    script: ScenarioScript, config: ProtocolConfig | None = None
) -> ScenarioResult:
    return _Runner(script, config).run()


def write_result(result: ScenarioResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json_report(result.report, out / "report.json")
    (out / "report.txt").write_text(result.text, "utf-8")
    tdir = out / "transcripts"
    tdir.mkdir(exist_ok=True)
    for sid, transcript in result.transcripts.items():
        save_transcript(transcript, tdir / ("%s.bin" % sid))


def compare_with_recording(result: ScenarioResult, out_dir) -> list[str]:
    """Byte-compare a fresh run against a recorded one; [] means identical."""
    out = Path(out_dir)
    mismatches = []
    fresh_json = (
        json.dumps(result.report, sort_keys=True, indent=2,
                   separators=(",", ": ")) + "\n"
    ).encode("utf-8")
    if (out / "report.json").read_bytes() != fresh_json:
        mismatches.append("report.json differs")
    if (out / "report.txt").read_bytes() != result.text.encode("utf-8"):
        mismatches.append("report.txt differs")
    for sid, transcript in result.transcripts.items():
        path = out / "transcripts" / ("%s.bin" % sid)
        if not path.exists():
            mismatches.append("transcripts/%s.bin missing" % sid)
        elif path.read_bytes() != transcript_bytes(transcript):
            mismatches.append("transcripts/%s.bin differs" % sid)
    return mismatches

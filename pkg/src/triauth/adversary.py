"""Adversary engine: what leaks, what follows from it, and the attack.

The threat model is a network adversary with insider extras: it holds
everything stored on a captured smart card, byte-exact transcripts of
the victim's sessions, the victim's biometric template and helper
string, the per-session exponents r_u and r_s (the "temporary
information" whose exposure the schemes are judged against), and a
password dictionary.  It does NOT hold the identity, the password, the
server secret X, or any raw protocol timestamp — and the
:class:`AdversaryKnowledge` constructor refuses to smuggle those in.

The attack itself is not hard-coded per scheme.  A small derivation
engine closes the adversary's atoms under per-scheme rewrite rules
(XORs, hashes, exponentiations — each rule is an executable fact about
the scheme's public structure).  An atom ends up *known*, *derivable
per password candidate*, or *unknown*.  A dictionary attack runs iff
every block of some verifier equation is known or candidate-derivable;
otherwise the outcome reports, per equation, exactly which atoms stay
unknown.  Against the baseline the closure reaches C_i and the loop
recovers the password, identity and session key.  Against the hardened
scheme T1, T3 and ID lock each other (T1 needs ID, ID needs T1 and T3,
T3 needs T1) and every equation keeps at least two unknowns — the
attack cannot start.  Granting (T1, T2) through the explicit
out-of-model hook unlocks the same pipeline, which is the white-box
control showing the engine is honest about *why* the attack fails.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from . import baseline, improved
from .core import (
    Field128,
    GroupParams,
    HashEngine,
    ProtocolError,
    SessionRng,
    encode_text,
    ms_to_field,
)
from .channel import SimChannel, Transcript, TranscriptEntry
from .fuzzy import BiometricTemplate, rep

# Atoms the model says the adversary never holds.  Checked
# case-insensitively against every externally supplied mapping key.
FORBIDDEN_ATOMS = frozenset(
    {"id", "pw", "password", "x", "t1", "t2", "t3", "t4", "t5", "t12"}
)

RECOVERED = "recovered"
INSUFFICIENT = "insufficient_knowledge"
EXHAUSTED = "dictionary_exhausted"

ACCEPT = "accept"
REJECT = "reject"

# Closure statuses, ordered: an atom's level is the min over any rule's
# inputs, and PW itself sits at CANDIDATE.
_UNKNOWN, _CANDIDATE, _KNOWN = 0, 1, 2


@dataclass(frozen=True)
class AdversaryKnowledge:
    """Exactly the assumed-leak set, nothing more.

    ``card_view`` is the adversary's copy of the card contents — for
    the hardened scheme this omits T12 (= T1 xor T2), which the model
    does not grant even though the physical card stores it.  Build via
    :meth:`assemble` to get the stripping right.
    """

    scheme: str
    card_view: Mapping[str, object] | None = None
    transcripts: tuple[Transcript, ...] = ()
    biometric: BiometricTemplate | None = None
    r_u: int | None = None
    r_s: int | None = None
    dictionary: tuple[str, ...] = ()

    def __post_init__(self):
        if self.scheme not in (baseline.SCHEME, improved.SCHEME):
            raise ValueError("unknown scheme %r" % self.scheme)
        if self.card_view is not None:
            for key in self.card_view:
                if key.lower() in FORBIDDEN_ATOMS:
                    raise ValueError(
                        "knowledge model forbids atom %r" % key
                    )
        object.__setattr__(self, "transcripts", tuple(self.transcripts))
        object.__setattr__(self, "dictionary", tuple(self.dictionary))

    @classmethod
    def assemble(
        cls,
        scheme: str,
        card=None,
        transcripts=(),
        biometric: BiometricTemplate | None = None,
        r_u: int | None = None,
        r_s: int | None = None,
        dictionary=(),
    ) -> "AdversaryKnowledge":
        view = None
        if card is not None:
            view = {
                "e": card.e,
                "h": card.hash_name,
                "p": card.params.p,
                "g": card.params.g,
                "Y": card.y,
                "P_i": card.helper,
                "L": card.l,
                "V": card.v,
            }
            if isinstance(card, improved.ImprovedCard):
                view["M"] = card.m
                view["Nmask"] = card.nmask
                # card.t12 deliberately not copied: outside the model
        return cls(
            scheme=scheme,
            card_view=view,
            transcripts=tuple(transcripts),
            biometric=biometric,
            r_u=r_u,
            r_s=r_s,
            dictionary=tuple(dictionary),
        )


@dataclass(frozen=True)
class EquationGap:
    """One verifier equation and the atoms that keep it unusable."""

    equation: str
    unknown: tuple[str, ...]


@dataclass(frozen=True)
class AttackOutcome:
    status: str
    work: int = 0  # verifier evaluations performed
    password: str | None = None
    identity: Field128 | None = None
    session_key: Field128 | None = None
    gaps: tuple[EquationGap, ...] = ()
    out_of_model: bool = False

    def __post_init__(self):
        if self.status == RECOVERED:
            if None in (self.password, self.identity, self.session_key):
                raise ValueError("a recovery must carry PW, ID and SK")
        if self.status == INSUFFICIENT and not self.gaps:
            raise ValueError("an insufficiency must explain itself")


# ---------------------------------------------------------------------------
# Derivation rules: executable facts about each scheme's public shape
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Derivation:
    target: str
    needs: tuple[str, ...]
    how: str
    fn: Callable


@dataclass(frozen=True)
class Verifier:
    """A published hash whose preimage blocks the adversary may test."""

    name: str
    preimage: tuple[str, ...]


class _Ctx:
    """The adversary's own tools: the card's hash and group, no ledger."""

    def __init__(self, hash_name: str, params: GroupParams):
        self.h = HashEngine(hash_name)
        self.params = params

    def exp(self, base: Field128, exponent: int) -> Field128:
        # the attacker is not bound by protocol domain checks; pow's
        # implicit reduction is what an attacker would compute anyway
        return Field128.from_int(pow(base.to_int(), exponent, self.params.p))


def _baseline_rules(ctx: _Ctx) -> list[Derivation]:
    return [
        Derivation("R", ("B", "P_i"), "R = Rep(B, P_i)", lambda b, p: rep(b, p)),
        Derivation("N", ("L", "R"), "N = L xor R", lambda l, r: l ^ r),
        Derivation("A2", ("Y", "r_u"), "A2 = Y^r_u", ctx.exp),
        Derivation("ID", ("NID", "A2"), "ID = NID xor A2", lambda nid, a2: nid ^ a2),
        Derivation(
            "H", ("e", "PW", "N"), "H = e xor h(PW||N)",
            lambda e, pw, n: e ^ ctx.h(pw, n),
        ),
        Derivation("A6", ("A4", "r_u"), "A6 = A4^r_u", ctx.exp),
        Derivation(
            "SK",
            ("ID", "A2", "A6", "H", "T1w", "T3w"),
            "SK = h(ID||A2||A6||H||T1||T3)",
            lambda *blocks: ctx.h(*blocks),
        ),
    ]


def _improved_rules(ctx: _Ctx) -> list[Derivation]:
    return [
        Derivation("R", ("B", "P_i"), "R = Rep(B, P_i)", lambda b, p: rep(b, p)),
        Derivation(
            "T2w", ("Nmask", "PW", "R"), "T2 = Nmask xor h(PW||R)",
            lambda nm, pw, r: nm ^ ctx.h(pw, r),
        ),
        Derivation(
            "T1w", ("M", "ID", "T2w"), "T1 = M xor h(ID xor T2)",
            lambda m, uid, t2: m ^ ctx.h(uid ^ t2),
        ),
        Derivation(
            "T3w", ("Q", "T1w"), "T3 = Q xor h(T1)",
            lambda q, t1: q ^ ctx.h(t1),
        ),
        Derivation("A2", ("Y", "r_u"), "A2 = Y^r_u", ctx.exp),
        Derivation("A22", ("A2", "T3w"), "A22 = A2 xor T3", lambda a2, t3: a2 ^ t3),
        Derivation(
            "ID",
            ("NID", "A22", "T1w", "T3w", "T2w"),
            "ID = NID xor A22 xor h(T1||T3||T2)",
            lambda nid, a22, t1, t3, t2: nid ^ a22 ^ ctx.h(t1, t3, t2),
        ),
        Derivation(
            "N", ("R", "L", "T1w"), "N = R xor L xor T1",
            lambda r, l, t1: r ^ l ^ t1,
        ),
        Derivation(
            "H", ("e", "PW", "N", "T1w"), "H = e xor h(PW||N||T1)",
            lambda e, pw, n, t1: e ^ ctx.h(pw, n, t1),
        ),
        Derivation(
            "T4w", ("P", "T1w", "ID", "T3w"), "T4 = P xor h(T1||ID||T3)",
            lambda p, t1, uid, t3: p ^ ctx.h(t1, uid, t3),
        ),
        Derivation(
            "T5w", ("Q2", "T2w", "ID", "T3w"), "T5 = Q2 xor h(T2||ID||T3)",
            lambda q2, t2, uid, t3: q2 ^ ctx.h(t2, uid, t3),
        ),
        Derivation(
            "A4", ("A44", "T3w", "T4w"), "A4 = A44 xor T3 xor T4",
            lambda a44, t3, t4: a44 ^ t3 ^ t4,
        ),
        Derivation("A5", ("A4", "r_u"), "A5 = A4^r_u", ctx.exp),
        Derivation(
            "A55", ("A5", "T3w", "T5w"), "A55 = A5 xor T3 xor T5",
            lambda a5, t3, t5: a5 ^ t3 ^ t5,
        ),
        Derivation(
            "SK",
            ("ID", "A22", "A55", "H", "T1w", "T3w", "T5w"),
            "SK = h(ID||A22||A55||H||T1||T3||T5)",
            lambda *blocks: ctx.h(*blocks),
        ),
    ]


_VERIFIERS = {
    baseline.SCHEME: Verifier("C_i", ("ID", "H", "A1", "A2", "T1w")),
    improved.SCHEME: Verifier("C_i", ("ID", "H", "A22", "A11", "T1w", "T3w", "T2w")),
}

# What a successful attack must produce besides the password.
_TARGETS = ("ID", "SK")


# ---------------------------------------------------------------------------
# Assembling the adversary's initial atoms
# ---------------------------------------------------------------------------

def _wire_atoms(scheme: str, transcript: Transcript) -> dict[str, Field128]:
    layouts = {
        baseline.SCHEME: {"login": baseline.LOGIN_WIRE, "reply": baseline.REPLY_WIRE},
        improved.SCHEME: {"login": improved.LOGIN_WIRE, "reply": improved.REPLY_WIRE},
    }[scheme]
    atoms: dict[str, Field128] = {}
    for entry in transcript.entries:
        names = layouts.get(entry.label)
        if names is None or len(entry.data) != 16 * len(names):
            continue
        for i, name in enumerate(names):
            # timestamps captured off the wire are words, not clock
            # readings the adversary can trust; keep the 'w' marker
            atom = name + "w" if name in ("T1", "T3") else name
            atoms.setdefault(atom, Field128(entry.data[16 * i : 16 * i + 16]))
    return atoms


def _initial_atoms(knowledge: AdversaryKnowledge) -> dict[str, object]:
    atoms: dict[str, object] = {}
    if knowledge.card_view:
        for key, value in knowledge.card_view.items():
            if key in ("h", "p", "g"):
                continue  # tooling, not equation material
            atoms[key] = value
    if knowledge.transcripts:
        atoms.update(_wire_atoms(knowledge.scheme, knowledge.transcripts[0]))
    if knowledge.biometric is not None:
        atoms["B"] = knowledge.biometric
    if knowledge.r_u is not None:
        atoms["r_u"] = knowledge.r_u
    if knowledge.r_s is not None:
        atoms["r_s"] = knowledge.r_s
    return atoms


def _ctx_from_knowledge(knowledge: AdversaryKnowledge) -> _Ctx | None:
    view = knowledge.card_view
    if not view:
        return None
    try:
        params = GroupParams.from_values(view["p"], view["g"], trust_unchecked=True)
        return _Ctx(view["h"], params)
    except (KeyError, ValueError, TypeError):
        return None


# ---------------------------------------------------------------------------
# Closure and execution
# ---------------------------------------------------------------------------

def _close(
    initial: set[str], rules: list[Derivation]
) -> tuple[dict[str, int], dict[str, Derivation]]:
    """Fixed-point status assignment plus the rule chosen per atom."""
    level: dict[str, int] = {a: _KNOWN for a in initial}
    level["PW"] = max(level.get("PW", 0), _CANDIDATE)
    chosen: dict[str, Derivation] = {}
    changed = True
    while changed:
        changed = False
        for rule in rules:
            reachable = min(level.get(a, _UNKNOWN) for a in rule.needs)
            if reachable > level.get(rule.target, _UNKNOWN):
                level[rule.target] = reachable
                chosen[rule.target] = rule
                changed = True
    return level, chosen


def _plan(targets: list[str], chosen: dict[str, Derivation]) -> list[Derivation]:
    """Topological execution order for the chosen rules (DFS)."""
    order: list[Derivation] = []
    done: set[str] = set()

    def visit(atom: str) -> None:
        if atom in done:
            return
        done.add(atom)
        rule = chosen.get(atom)
        if rule is None:
            return
        for need in rule.needs:
            visit(need)
        order.append(rule)

    for target in targets:
        visit(target)
    return order


def _execute(plan: list[Derivation], values: dict[str, object]) -> None:
    for rule in plan:
        if rule.target in values:
            continue
        values[rule.target] = rule.fn(*(values[a] for a in rule.needs))


def _survey(
    knowledge: AdversaryKnowledge, granted: dict[str, Field128] | None
):
    """Shared front half of every attack: atoms, closure, feasibility."""
    ctx = _ctx_from_knowledge(knowledge)
    atoms = _initial_atoms(knowledge)
    if granted:
        atoms.update(granted)
    rules = (
        _baseline_rules(ctx)
        if knowledge.scheme == baseline.SCHEME
        else _improved_rules(ctx)
    ) if ctx is not None else []
    level, chosen = _close(set(atoms), rules)
    verifier = _VERIFIERS[knowledge.scheme]

    gaps = []
    needed = list(verifier.preimage) + [verifier.name] + list(_TARGETS)
    unknown = tuple(
        sorted({a for a in needed if level.get(a, _UNKNOWN) == _UNKNOWN})
    )
    if ctx is None:
        unknown = tuple(sorted(set(needed))) or ("card",)
        gaps.append(EquationGap(verifier.name, unknown))
    elif unknown:
        gaps.append(EquationGap(verifier.name, unknown))
    return ctx, atoms, level, chosen, verifier, tuple(gaps)


def _run_dictionary(
    knowledge: AdversaryKnowledge,
    granted: dict[str, Field128] | None = None,
) -> AttackOutcome:
    out_of_model = bool(granted)
    ctx, atoms, level, chosen, verifier, gaps = _survey(knowledge, granted)
    if gaps:
        return AttackOutcome(
            status=INSUFFICIENT, gaps=gaps, out_of_model=out_of_model
        )

    full_plan = _plan(list(verifier.preimage) + list(_TARGETS), chosen)
    loop_plan = _plan(list(verifier.preimage), chosen)
    known_plan = [r for r in full_plan if level[r.target] == _KNOWN]
    # inside the loop: only what the verifier itself needs; the rest of
    # the chain (the forged SK) runs once, on the hit
    loop_rules = [r for r in loop_plan if level[r.target] == _CANDIDATE]
    post_rules = [
        r
        for r in full_plan
        if level[r.target] == _CANDIDATE and r not in loop_rules
    ]

    base_values = dict(atoms)
    _execute(known_plan, base_values)

    work = 0
    for word in knowledge.dictionary:
        try:
            pw = encode_text(word)
        except ValueError:
            work += 1  # tested and rejected: cannot encode to a block
            continue
        values = dict(base_values)
        values["PW"] = pw
        _execute(loop_rules, values)
        work += 1
        if ctx.h(*(values[a] for a in verifier.preimage)) == values[verifier.name]:
            _execute(post_rules, values)
            return AttackOutcome(
                status=RECOVERED,
                work=work,
                password=word,
                identity=values["ID"],
                session_key=values["SK"],
                out_of_model=out_of_model,
            )
    return AttackOutcome(status=EXHAUSTED, work=work, out_of_model=out_of_model)


# ---------------------------------------------------------------------------
# Public attack operations
# ---------------------------------------------------------------------------

def attack_baseline(knowledge: AdversaryKnowledge) -> AttackOutcome:
    """Offline dictionary attack against the baseline scheme.

    With the modeled leak set the C_i equation is a pure password
    oracle; expect RECOVERED whenever the true password is in the
    dictionary, with the identity unmasked and the victim session's
    key forged byte-for-byte.
    """
    if knowledge.scheme != baseline.SCHEME:
        raise ValueError("knowledge is not about the baseline scheme")
    return _run_dictionary(knowledge)


def attack_improved(
    knowledge: AdversaryKnowledge,
    out_of_model_timestamps: tuple[int, int] | None = None,
) -> AttackOutcome:
    """Same engine pointed at the hardened scheme.

    In-model this returns INSUFFICIENT_KNOWLEDGE with the per-equation
    unknown atoms.  `out_of_model_timestamps` is the white-box control:
    granting the registration instants (T1, T2), which the model
    forbids, restores the exact pipeline the baseline attack runs —
    flagged on the outcome so nobody mistakes it for an in-model break.
    """
    if knowledge.scheme != improved.SCHEME:
        raise ValueError("knowledge is not about the improved scheme")
    granted = None
    if out_of_model_timestamps is not None:
        t1_ms, t2_ms = out_of_model_timestamps
        granted = {"T1w": ms_to_field(t1_ms), "T2w": ms_to_field(t2_ms)}
    return _run_dictionary(knowledge, granted)


def explain_gaps(outcome: AttackOutcome) -> list[str]:
    """Human-readable lines for why an attack could not start."""
    lines = []
    for gap in outcome.gaps:
        lines.append(
            "equation %s blocked; unknown: %s"
            % (gap.equation, ", ".join(gap.unknown))
        )
    return lines


def forge_improved_session_key(
    knowledge: AdversaryKnowledge,
    t1_ms: int,
    t2_ms: int,
    password_guess: str,
) -> Field128 | None:
    """Forge an SK for guessed (T1, T2, PW) without any verification.

    This is the brute-force counterpart to the closure argument: run
    the full derivation chain under the guesses and emit whatever key
    falls out.  Wrong guesses produce well-formed garbage; the caller
    compares against the honest key.  Returns None only if the chain
    cannot run at all (missing knowledge).
    """
    if knowledge.scheme != improved.SCHEME:
        raise ValueError("forgery chain is specific to the improved scheme")
    granted = {"T1w": ms_to_field(t1_ms), "T2w": ms_to_field(t2_ms)}
    ctx, atoms, level, chosen, verifier, gaps = _survey(knowledge, granted)
    if gaps:
        return None
    values = dict(atoms)
    try:
        values["PW"] = encode_text(password_guess)
    except ValueError:
        return None
    _execute(_plan(list(verifier.preimage) + list(_TARGETS), chosen), values)
    return values["SK"]


# ---------------------------------------------------------------------------
# Active operations: interception, tampering, impersonation
# ---------------------------------------------------------------------------

def intercept(channel: SimChannel) -> Transcript:
    """The eavesdropper's copy of everything the channel carried."""
    if not channel.recording:
        raise ValueError("channel is not recording; nothing to intercept")
    return channel.transcript()


def wire_layout(scheme: str, label: str) -> tuple[str, ...]:
    table = {
        (baseline.SCHEME, "login"): baseline.LOGIN_WIRE,
        (baseline.SCHEME, "reply"): baseline.REPLY_WIRE,
        (improved.SCHEME, "login"): improved.LOGIN_WIRE,
        (improved.SCHEME, "reply"): improved.REPLY_WIRE,
    }
    try:
        return table[(scheme, label)]
    except KeyError:
        raise ValueError("no %s message in the %s scheme" % (label, scheme)) from None


def tamper(
    transcript: Transcript, scheme: str, label: str, fieldname: str, mask: bytes
) -> Transcript:
    """Copy of the transcript with `mask` XORed into one named field.

    A zero mask returns an identical transcript — tampering is exactly
    the bits you flip, nothing implicit.
    """
    names = wire_layout(scheme, label)
    if fieldname not in names:
        raise ValueError("message %r has no field %r" % (label, fieldname))
    if len(mask) > 16:
        raise ValueError("mask longer than a field")
    offset = 16 * names.index(fieldname)
    out = transcript.copy()
    for i, entry in enumerate(out.entries):
        if entry.label != label:
            continue
        data = bytearray(entry.data)
        for j, b in enumerate(mask):
            data[offset + j] ^= b
        out.entries[i] = TranscriptEntry(
            entry.direction, entry.label, bytes(data), entry.captured_at
        )
        return out
    raise ValueError("transcript has no %r entry" % label)


def impersonate(
    env,
    server,
    knowledge: AdversaryKnowledge,
    outcome: AttackOutcome,
    rng: SessionRng,
) -> str:
    """Try to open a fresh session as the victim; "accept" or "reject".

    After a baseline recovery this replays the honest login computation
    with the recovered password and identity and a fresh exponent, and
    completes the handshake.  Anything less (notably the hardened
    scheme, where the attack ends insufficient) falls back to a
    best-effort forgery under random guesses, which the server should
    throw out.
    """
    view = knowledge.card_view or {}
    r_fresh = rng.exponent(env.params)

    if (
        knowledge.scheme == baseline.SCHEME
        and outcome.status == RECOVERED
        and knowledge.biometric is not None
    ):
        ctx = _ctx_from_knowledge(knowledge)
        pw = encode_text(outcome.password)
        n = view["L"] ^ rep(knowledge.biometric, view["P_i"])
        h_val = view["e"] ^ ctx.h(pw, n)
        _, t1 = env.now_field()
        a1 = ctx.exp(Field128.from_int(env.params.g), r_fresh)
        a2 = ctx.exp(view["Y"], r_fresh)
        nid = outcome.identity ^ a2
        c_i = ctx.h(outcome.identity, h_val, a1, a2, t1)
        msg = baseline.LoginMessage(nid, a1, c_i, t1)
        pending = baseline.PendingLogin(
            user_id=outcome.identity, h=h_val, a2=a2, r_u=r_fresh, t1=t1
        )
        try:
            reply, _sk = server.respond(msg, rng.exponent(env.params))
            baseline.finish(env, pending, reply)
        except ProtocolError:
            return REJECT
        return ACCEPT

    # best-effort forgery: guess the values the model withholds
    guess_id, guess_h = rng.field(), rng.field()
    if knowledge.scheme == baseline.SCHEME:
        ctx = _ctx_from_knowledge(knowledge)
        _, t1 = env.now_field()
        a1 = ctx.exp(Field128.from_int(env.params.g), r_fresh)
        a2 = ctx.exp(view["Y"], r_fresh)
        msg = baseline.LoginMessage(
            guess_id ^ a2, a1, ctx.h(guess_id, guess_h, a1, a2, t1), t1
        )
    else:
        ctx = _ctx_from_knowledge(knowledge)
        t1_guess, t2_guess = rng.field(), rng.field()
        _, t3 = env.now_field()
        a1 = ctx.exp(Field128.from_int(env.params.g), r_fresh)
        a11 = a1 ^ t2_guess ^ t3
        a2 = ctx.exp(view["Y"], r_fresh)
        a22 = a2 ^ t3
        nid = guess_id ^ a22 ^ ctx.h(t1_guess, t3, t2_guess)
        c_i = ctx.h(guess_id, guess_h, a22, a11, t1_guess, t3, t2_guess)
        msg = improved.LoginMessage(nid, a11, c_i, t3 ^ ctx.h(t1_guess))
    try:
        server.respond(msg, rng.exponent(env.params))
    except ProtocolError:
        return REJECT
    return ACCEPT

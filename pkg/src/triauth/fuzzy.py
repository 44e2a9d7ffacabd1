"""Code-offset fuzzy extractor for binary biometric templates.

A template is a fixed-length bit string (512 bits at defaults).  Gen
draws a uniform 128-bit key R, spreads it with a t-fold repetition code
(t = template bits / 128, so t = 4 by default) and publishes the XOR of
the codeword with the template as helper data.  Rep decodes each t-bit
block by majority vote, so any reading that differs in strictly fewer
than t/2 positions per block reproduces R exactly.  Ties (exactly t/2
flips in a block, possible because t is even) decode as 0.

The helper data leaks nothing useful about R to anyone without a close
template — a random template recovers each key bit with probability
well below 1, so all 128 bits essentially never.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import FIELD_BYTES, Field128, SessionRng

KEY_BITS = FIELD_BYTES * 8


@dataclass(frozen=True)
class BiometricTemplate:
    """One biometric reading as a packed bit string (MSB first)."""

    bits: bytes
    nbits: int

    def __post_init__(self) -> None:
        if self.nbits % 8 != 0 or len(self.bits) != self.nbits // 8:
            raise ValueError("template length does not match bit count")

    @classmethod
    def random(cls, rng: SessionRng, nbits: int = 512) -> "BiometricTemplate":
        if nbits % 8 != 0:
            raise ValueError("template bit count must be a multiple of 8")
        raw = b"".join(
            rng.below(256).to_bytes(1, "big") for _ in range(nbits // 8)
        )
        return cls(raw, nbits)

    def as_int(self) -> int:
        return int.from_bytes(self.bits, "big")

    def hamming(self, other: "BiometricTemplate") -> int:
        if self.nbits != other.nbits:
            raise ValueError("template sizes differ")
        return (self.as_int() ^ other.as_int()).bit_count()


@dataclass(frozen=True)
class HelperData:
    """Public sketch published at enrollment: codeword XOR template."""

    offset: bytes
    nbits: int

    def __post_init__(self) -> None:
        if len(self.offset) != self.nbits // 8:
            raise ValueError("helper length does not match bit count")


def _repetition_factor(nbits: int) -> int:
    if nbits % KEY_BITS != 0:
        raise ValueError("template bits must be a multiple of %d" % KEY_BITS)
    t = nbits // KEY_BITS
    if t < 1:
        raise ValueError("template too short for a 128-bit key")
    return t


def _expand(key: Field128, t: int) -> int:
    """Repetition-code encoding of a 128-bit key, as an int."""
    key_int = key.to_int()
    block = (1 << t) - 1
    word = 0
    for i in range(KEY_BITS):
        word <<= t
        if (key_int >> (KEY_BITS - 1 - i)) & 1:
            word |= block
    return word


def gen(
    template: BiometricTemplate, rng: SessionRng
) -> tuple[Field128, HelperData]:
    """Enroll a template: returns (key R, helper data P)."""
    t = _repetition_factor(template.nbits)
    key = rng.field()
    offset = _expand(key, t) ^ template.as_int()
    helper = HelperData(offset.to_bytes(template.nbits // 8, "big"), template.nbits)
    return key, helper


def rep(template: BiometricTemplate, helper: HelperData) -> Field128:
    """Reproduce R from a (possibly noisy) reading of the same template.

    Never fails loudly: a far-off template simply decodes to the wrong
    key, and the scheme's own verifier (V) is what rejects it.
    """
    if template.nbits != helper.nbits:
        raise ValueError("template and helper sizes differ")
    t = _repetition_factor(template.nbits)
    noisy = template.as_int() ^ int.from_bytes(helper.offset, "big")
    block_mask = (1 << t) - 1
    key_int = 0
    for i in range(KEY_BITS):
        shift = (KEY_BITS - 1 - i) * t
        weight = ((noisy >> shift) & block_mask).bit_count()
        key_int <<= 1
        if weight * 2 > t:  # tie (weight*2 == t) decodes as 0
            key_int |= 1
    return Field128.from_int(key_int)


def flip_positions(
    template: BiometricTemplate, positions: list[int]
) -> BiometricTemplate:
    """Copy of the template with the given bit positions inverted.

    Position 0 is the most significant bit of the first byte, matching
    the block layout used by the repetition code.
    """
    word = template.as_int()
    for pos in positions:
        if not 0 <= pos < template.nbits:
            raise ValueError("flip position out of range")
        word ^= 1 << (template.nbits - 1 - pos)
    return BiometricTemplate(word.to_bytes(template.nbits // 8, "big"), template.nbits)


def perturb(
    template: BiometricTemplate, flips: int, rng: SessionRng
) -> BiometricTemplate:
    """Random reading noise: flip `flips` distinct positions."""
    return flip_positions(template, rng.positions(template.nbits, flips))


def perturb_within_tolerance(
    template: BiometricTemplate, rng: SessionRng, nblocks: int
) -> BiometricTemplate:
    """Reading noise the decoder is guaranteed to correct.

    Flips exactly one bit in `nblocks` distinct repetition blocks —
    always within the majority decoder's radius, so Rep recovers the
    enrolled key exactly.  This is what honest sessions use.
    """
    t = _repetition_factor(template.nbits)
    positions = [
        block * t + rng.below(t)
        for block in rng.positions(KEY_BITS, nblocks)
    ]
    return flip_positions(template, positions)

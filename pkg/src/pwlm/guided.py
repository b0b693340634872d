"""Template-constrained password generation.

A template fixes the exact output length: one constraint per position,
drawn from the character classes l/u/d/p, the wildcard *, or a fixed
byte. At each slot the model's next-token distribution is masked to the
slot's allowed set and renormalized; after the last slot EOS is forced,
so every sample matches the template exactly.

Template syntax:
    l  lowercase a-z          u  uppercase A-Z
    d  digit 0-9              p  ASCII punctuation (32 bytes)
    *  any byte
    =c     fixed literal character c (the char right after '=')
    \\xHH  fixed byte by hex value
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from . import gpt
from .errors import LengthExceeded, ParseError, TemplateMismatch, ZeroMass
from .gpt import GptModel, SampleOpts
from .nn import functional as F
from .nn import tensor as T

_CLASS_BYTES = {
    "l": frozenset(range(0x61, 0x7B)),
    "u": frozenset(range(0x41, 0x5B)),
    "d": frozenset(range(0x30, 0x3A)),
    "p": frozenset(
        set(range(0x21, 0x30)) | set(range(0x3A, 0x41))
        | set(range(0x5B, 0x61)) | set(range(0x7B, 0x7F))),
    "*": frozenset(range(0x100)),
}


def class_members(cls: str) -> FrozenSet[int]:
    """Token ids allowed by one class symbol (byte value == token id)."""
    try:
        return _CLASS_BYTES[cls]
    except KeyError:
        raise ParseError(f"unknown character class {cls!r}", 0) from None


@dataclass(frozen=True)
class Slot:
    label: str
    allowed: FrozenSet[int]  # byte values


@dataclass(frozen=True)
class Template:
    slots: Tuple[Slot, ...]

    def __len__(self) -> int:
        return len(self.slots)

    def matches(self, password: bytes) -> bool:
        return len(password) == len(self.slots) and all(
            b in slot.allowed for b, slot in zip(password, self.slots))

    def describe(self) -> str:
        return "".join(s.label for s in self.slots)


def parse_template(s: str) -> Template:
    """One slot per template symbol; raises ParseError with the position."""
    if not s:
        raise ParseError("template must be non-empty", 0)
    slots: List[Slot] = []
    i = 0
    while i < len(s):
        c = s[i]
        if c in _CLASS_BYTES:
            slots.append(Slot(c, _CLASS_BYTES[c]))
            i += 1
        elif c == "=":
            if i + 1 >= len(s):
                raise ParseError("'=' must be followed by a literal character", i)
            b = ord(s[i + 1])
            if b > 0xFF:
                raise ParseError("fixed literal must be a single byte", i + 1)
            slots.append(Slot(f"={s[i + 1]}", frozenset({b})))
            i += 2
        elif c == "\\":
            if s[i + 1:i + 2] != "x" or i + 4 > len(s):
                raise ParseError("expected \\xHH escape", i)
            try:
                b = int(s[i + 2:i + 4], 16)
            except ValueError:
                raise ParseError(f"bad hex digits {s[i + 2:i + 4]!r}", i + 2) from None
            slots.append(Slot(f"\\x{b:02x}", frozenset({b})))
            i += 4
        else:
            raise ParseError(f"unexpected template character {c!r}", i)
    return Template(tuple(slots))


def allow_id_sets(template: Template, model: GptModel) -> List[np.ndarray]:
    """Per-slot boolean masks over the model vocabulary.

    BOS and EOS are never allowed inside a slot; EOS is forced only after
    the final slot. Bytes outside the model's alphabet are dropped.
    """
    if model.vocab is None:
        raise ZeroMass("model has no byte alphabet")
    masks = []
    for pos, slot in enumerate(template.slots):
        mask = np.zeros(model.cfg.vocab, dtype=bool)
        for b in slot.allowed:
            tid = model.vocab._byte_to_id.get(b)
            if tid is not None:
                mask[tid] = True
        if not mask.any():
            raise ZeroMass(
                f"slot {pos} ({slot.label}) allows no byte of the model alphabet")
        masks.append(mask)
    return masks


def masked_distribution(dist: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Restrict a probability vector to the mask and renormalize."""
    mass = dist[mask].sum()
    if mass < 1e-30:
        raise ZeroMass(f"allowed mass {mass:.3e} is numerically degenerate")
    out = np.where(mask, dist, 0.0)
    return out / mass


def guided_next_distribution(model: GptModel, prefix: Sequence[int],
                             mask: np.ndarray) -> np.ndarray:
    """next_distribution masked to one slot's allowed set and renormalized."""
    return masked_distribution(gpt.next_distribution(model, prefix), mask)


def guided_sample_many(model: GptModel, template: Template, n: int,
                       opts: SampleOpts) -> List[bytes]:
    """n samples matching the template exactly; deterministic in (seed, n)."""
    cfg = model.cfg
    if len(template) > cfg.max_len:
        raise LengthExceeded(
            f"template length {len(template)} exceeds model max_len {cfg.max_len}")
    masks = allow_id_sets(template, model)
    bos = cfg.vocab - 2
    alphabet = model.vocab.alphabet

    n_chunks = math.ceil(n / gpt._SAMPLE_CHUNK)
    streams = np.random.SeedSequence(opts.seed).spawn(max(n_chunks, 1))
    out: List[bytes] = []
    for c in range(n_chunks):
        batch = min(gpt._SAMPLE_CHUNK, n - c * gpt._SAMPLE_CHUNK)
        rng = np.random.Generator(np.random.PCG64(streams[c]))
        cache = model.new_cache(batch)
        tokens = np.full((batch, 1), bos, dtype=np.int64)
        drawn = np.empty((batch, len(template)), dtype=np.int64)
        with T.no_grad():
            for pos, mask in enumerate(masks):
                logits = model.forward_np(tokens, cache)[:, -1, :].astype(np.float64)
                full = F.softmax_np(logits, axis=-1)
                masses = full[:, mask].sum(axis=-1)
                if (masses < 1e-30).any():
                    raise ZeroMass(
                        f"slot {pos}: allowed mass {masses.min():.3e} "
                        "is numerically degenerate")
                z = np.where(mask[None, :], logits, -np.inf)
                if opts.temperature == 0.0:
                    nxt = np.argmax(z, axis=-1)
                else:
                    probs = gpt._next_probs(z, opts.temperature, opts.top_k, ())
                    nxt = gpt._draw(probs, rng)
                drawn[:, pos] = nxt
                tokens = nxt[:, None]
        out.extend(bytes(alphabet[t] for t in row) for row in drawn)
    return out


def guided_sample(model: GptModel, template: Template, opts: SampleOpts) -> bytes:
    return guided_sample_many(model, template, 1, opts)[0]


def template_logprob_many(model: GptModel, template: Template,
                          passwords: Sequence[bytes]) -> np.ndarray:
    """log10 probability of each password under the constrained process.

    Per slot: masked, renormalized conditional probability; the forced
    terminal EOS contributes probability one. Over a template's full
    support these probabilities sum to one.
    """
    masks = allow_id_sets(template, model)
    for pw in passwords:
        if not template.matches(pw):
            raise TemplateMismatch(f"{pw!r} does not match {template.describe()}")
    rows = gpt._encode_many(model, passwords)
    out = np.empty(len(rows))
    batch = 1024
    for start in range(0, len(rows), batch):
        part = rows[start:start + batch]
        logp = gpt._score_rows(model, part)
        for i, row in enumerate(part):
            total = 0.0
            for pos, mask in enumerate(masks):
                dist = np.exp(logp[i, pos])
                mass = dist[mask].sum()
                if mass < 1e-30:
                    raise ZeroMass(f"slot {pos}: allowed mass {mass:.3e}")
                total += math.log10(dist[row[pos + 1]] / mass)
            out[start + i] = total
    return out


def template_logprob(model: GptModel, template: Template, password: bytes) -> float:
    return float(template_logprob_many(model, template, [password])[0])

"""Heuristic password-strength estimation.

Approximates the familiar 0 (very weak) .. 4 (very strong) scoring: a
password is decomposed into matches — ranked-dictionary words (straight,
reversed, and symbol-substituted), repeated units, single-class runs,
and a bruteforce remainder — and the estimated guess count is the
product of per-match guesses times an arrangement factor (l! for l
segments). log10(guesses) buckets into scores at thresholds 3/6/8/10.

This is deliberately an approximation behind a small interface: any
estimator mapping password -> StrengthScore can be substituted. Scores
are deterministic given the dictionaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import FormatError, IoError

_LOG10_BYTE = math.log10(256.0)
_BUCKETS = (3.0, 6.0, 8.0, 10.0)

# inverse substitution table: symbol byte -> plausible original letters
_UNLEET = {
    ord("4"): b"a", ord("@"): b"a", ord("3"): b"e", ord("1"): b"il",
    ord("!"): b"i", ord("0"): b"o", ord("$"): b"s", ord("5"): b"s",
    ord("7"): b"t", ord("+"): b"t", ord("8"): b"b", ord("2"): b"z",
    ord("6"): b"g", ord("9"): b"g", ord("|"): b"l",
}
_MAX_UNLEET_VARIANTS = 64

_CLASS_RANGES = {
    "lower": (0x61, 0x7A, 26),
    "upper": (0x41, 0x5A, 26),
    "digit": (0x30, 0x39, 10),
}
_PUNCT = frozenset(
    set(range(0x21, 0x30)) | set(range(0x3A, 0x41))
    | set(range(0x5B, 0x61)) | set(range(0x7B, 0x7F)))


@dataclass
class Dictionary:
    """Ranked word list; rank 1 is the most common entry."""

    name: str
    ranks: Dict[bytes, int]

    def __len__(self) -> int:
        return len(self.ranks)

    @classmethod
    def from_words(cls, name: str, words: Sequence[str]) -> "Dictionary":
        return cls(name, {w.lower().encode(): i + 1 for i, w in enumerate(words)})


def load_dictionary(path, name: Optional[str] = None) -> Dictionary:
    """Read a "rank<TAB>word" UTF-8 file into a Dictionary."""
    ranks: Dict[bytes, int] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                rank_s, _, word = line.partition("\t")
                if not word:
                    raise FormatError(f"{path}:{lineno}: expected rank<TAB>word")
                try:
                    rank = int(rank_s)
                except ValueError:
                    raise FormatError(
                        f"{path}:{lineno}: rank {rank_s!r} is not an integer"
                    ) from None
                ranks.setdefault(word.lower().encode(), rank)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    return Dictionary(name or str(path), ranks)


@lru_cache(maxsize=1)
def default_dictionaries() -> Tuple[Dictionary, ...]:
    """The bundled English + common-passwords list (about 10k entries)."""
    ref = resources.files("pwlm.data").joinpath("ranked_words.txt")
    with resources.as_file(ref) as path:
        return (load_dictionary(path, name="bundled"),)


@dataclass(frozen=True)
class PatternMatch:
    kind: str          # dictionary | reverse-dictionary | l33t-dictionary |
    start: int         # repeat | class-run | bruteforce
    end: int
    word: Optional[bytes] = None  # dictionary form for word-based matches

    @property
    def span(self) -> Tuple[int, int]:
        return (self.start, self.end)


@dataclass
class StrengthScore:
    score: int
    guesses_log10: float
    matched_patterns: List[PatternMatch] = field(default_factory=list)


def repeat_detect(password: bytes) -> Optional[Tuple[bytes, int]]:
    """Smallest unit u with u^k (k >= 2) covering a maximal prefix, else None."""
    n = len(password)
    for ulen in range(1, n // 2 + 1):
        u = password[:ulen]
        k = 1
        while password[k * ulen:(k + 1) * ulen] == u:
            k += 1
        if k >= 2:
            return u, k
    return None


def _byte_class(b: int) -> Optional[str]:
    for name, (lo, hi, _) in _CLASS_RANGES.items():
        if lo <= b <= hi:
            return name
    if b in _PUNCT:
        return "punct"
    return None


def _class_size(name: str) -> int:
    return 32 if name == "punct" else _CLASS_RANGES[name][2]


def _case_mult(span: bytes) -> float:
    return 2.0 if span != span.lower() else 1.0


def _unleet_variants(span: bytes) -> List[Tuple[bytes, int]]:
    """(candidate plaintext, substituted position count) pairs, capped."""
    options = [(_UNLEET.get(b, bytes([b])), b in _UNLEET) for b in span]
    variants: List[Tuple[bytes, int]] = [(b"", 0)]
    for choices, subbed in options:
        grown = []
        for prefix, cnt in variants:
            for c in choices:
                grown.append((prefix + bytes([c]), cnt + (1 if subbed else 0)))
                if len(grown) > _MAX_UNLEET_VARIANTS:
                    return []
        variants = grown
    return [(v, c) for v, c in variants if c > 0]


def _word_matches(pw: bytes, dictionaries: Sequence[Dictionary]
                  ) -> List[Tuple[int, int, str, float, bytes]]:
    out = []
    n = len(pw)
    lowered = pw.lower()
    for i in range(n):
        for j in range(i + 2, n + 1):
            span = pw[i:j]
            low = lowered[i:j]
            case = _case_mult(span)
            for d in dictionaries:
                rank = d.ranks.get(low)
                if rank is not None:
                    out.append((i, j, "dictionary",
                                math.log10(rank * case), low))
                rank = d.ranks.get(low[::-1])
                if rank is not None:
                    out.append((i, j, "reverse-dictionary",
                                math.log10(rank * 2 * case), low[::-1]))
            if any(b in _UNLEET for b in low):
                for candidate, subbed in _unleet_variants(low):
                    for d in dictionaries:
                        rank = d.ranks.get(candidate)
                        if rank is not None:
                            out.append((i, j, "l33t-dictionary",
                                        math.log10(rank * (2.0 ** subbed) * case),
                                        candidate))
    return out


def _structure_matches(pw: bytes) -> List[Tuple[int, int, str, float, None]]:
    out = []
    n = len(pw)
    classes = [_byte_class(b) for b in pw]
    for i in range(n):
        cls = classes[i]
        for j in range(i + 1, n + 1):
            if cls is None or classes[j - 1] != cls:
                break
            out.append((i, j, "class-run",
                        (j - i) * math.log10(_class_size(cls)), None))
    for i in range(n):
        for j in range(i + 4, n + 1):  # a repeat needs at least 2x2 bytes
            rep = repeat_detect(pw[i:j])
            if rep is None:
                continue
            unit, k = rep
            if len(unit) * k != j - i:
                continue
            out.append((i, j, "repeat",
                        _unit_guesses_log10(unit) + math.log10(k), None))
    return out


def _unit_guesses_log10(unit: bytes) -> float:
    best = len(unit) * _LOG10_BYTE
    cls = _byte_class(unit[0])
    if cls is not None and all(_byte_class(b) == cls for b in unit):
        best = min(best, len(unit) * math.log10(_class_size(cls)))
    return best


def estimate_strength(password: bytes,
                      dictionaries: Optional[Sequence[Dictionary]] = None
                      ) -> StrengthScore:
    """Decompose the password and bucket its estimated guess count.

    The minimizing segmentation is found by dynamic programming over
    (prefix length, segment count); unmatched spans cost 256^length.
    """
    if isinstance(password, str):
        password = password.encode()
    if dictionaries is None:
        dictionaries = default_dictionaries()
    n = len(password)
    if n == 0:
        return StrengthScore(score=0, guesses_log10=0.0)

    matches: List[Tuple[int, int, str, float, Optional[bytes]]] = []
    matches.extend(_word_matches(password, dictionaries))
    matches.extend(_structure_matches(password))
    for i in range(n):
        for j in range(i + 1, n + 1):
            matches.append((i, j, "bruteforce", (j - i) * _LOG10_BYTE, None))

    ending_at: List[List[int]] = [[] for _ in range(n + 1)]
    for idx, m in enumerate(matches):
        ending_at[m[1]].append(idx)

    inf = math.inf
    # dp[i][l]: min sum of log10 per-match guesses covering pw[:i] in l segments
    dp = [[inf] * (n + 1) for _ in range(n + 1)]
    back: List[List[Optional[Tuple[int, int]]]] = [
        [None] * (n + 1) for _ in range(n + 1)]
    dp[0][0] = 0.0
    for i in range(1, n + 1):
        for idx in ending_at[i]:
            start, _, _, cost, _ = matches[idx]
            for l in range(1, i + 1):
                prev = dp[start][l - 1]
                if prev + cost < dp[i][l]:
                    dp[i][l] = prev + cost
                    back[i][l] = (idx, l - 1)

    best_lg, best_l = inf, 1
    for l in range(1, n + 1):
        total = dp[n][l] + math.log10(math.factorial(l))
        if total < best_lg:
            best_lg, best_l = total, l

    path: List[PatternMatch] = []
    i, l = n, best_l
    while i > 0 and back[i][l] is not None:
        idx, l_prev = back[i][l]
        start, end, kind, _, word = matches[idx]
        path.append(PatternMatch(kind=kind, start=start, end=end, word=word))
        i, l = start, l_prev
    path.reverse()

    score = sum(best_lg >= t for t in _BUCKETS)
    return StrengthScore(score=int(score), guesses_log10=best_lg,
                         matched_patterns=path)

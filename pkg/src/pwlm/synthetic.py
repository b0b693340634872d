"""Deterministic synthetic password corpora for desk-scale experiments.

Passwords follow the pattern lowercase-word (4-6 chars) + two digits,
drawn from a fixed 500-word list: 450 real words spanning the bundled
dictionary's rank range plus 50 pronounceable pseudowords that match no
dictionary entry. Sampling weight decays with dictionary rank, so word
frequency, model probability, and estimated strength stay correlated the
way real leaks behave.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Dict, List, Tuple

import numpy as np

from .corpus import Corpus
from .rng import generator
from .strength import default_dictionaries, estimate_strength

# word + two digits, where word+digits itself is a ranked dictionary entry;
# forced into the corpus so the very weakest strength bucket is populated
_CLASSIC_BASES = (
    "monkey", "angel", "tigger", "flower", "shadow", "summer",
    "purple", "cookie", "banana", "dragon", "yellow", "pepper",
)
_CLASSIC_SUFFIX = {
    "monkey": "12", "angel": "123", "tigger": "12", "flower": "12",
    "shadow": "12", "summer": "08", "purple": "13", "cookie": "12",
    "banana": "01", "dragon": "12", "yellow": "22", "pepper": "12",
}

_PSEUDO_SEED = 0x5EED  # fixed; not a tunable
_CONSONANTS = "bcdfghjklmnpqrstvwxz"
_VOWELS = "aeiouy"


def _pseudowords(count_by_len: Dict[int, int]) -> List[str]:
    """Pronounceable non-words whose strength comes out as pure class runs."""
    dicts = default_dictionaries()
    rng = generator(_PSEUDO_SEED)
    expected_score = {4: 2, 5: 3, 6: 4}
    out: List[str] = []
    for length, need in sorted(count_by_len.items()):
        got = 0
        while got < need:
            chars = []
            for i in range(length):
                pool = _CONSONANTS if i % 2 == 0 else _VOWELS
                chars.append(pool[rng.integers(len(pool))])
            w = "".join(chars)
            if any(w.encode() in d.ranks for d in dicts) or w in out:
                continue
            if estimate_strength((w + "00").encode(), dicts).score != expected_score[length]:
                continue  # a substring matched the dictionary; not a clean non-word
            out.append(w)
            got += 1
    return out


@lru_cache(maxsize=1)
def word_list() -> Tuple[Tuple[str, float], ...]:
    """The fixed 500-entry (word, sampling weight) list.

    Real words weigh 1/rank; pseudowords get small trailing weights so
    each still appears at least once in a 5k corpus.
    """
    d = default_dictionaries()[0]
    by_rank = sorted((rank, word.decode()) for word, rank in d.ranks.items()
                     if word.isalpha() and 4 <= len(word) <= 6)
    entries: List[Tuple[str, float]] = []
    chosen = set()
    for base in _CLASSIC_BASES:
        rank = d.ranks[base.encode()]
        entries.append((base, 1.0 / rank))
        chosen.add(base)
    pool = [(r, w) for r, w in by_rank if w not in chosen]
    need = 450 - len(entries)
    stride = len(pool) / need
    for i in range(need):
        rank, word = pool[int(i * stride)]
        entries.append((word, 1.0 / rank))
        chosen.add(word)
    pseudo = _pseudowords({4: 15, 5: 20, 6: 15})
    for i, w in enumerate(pseudo):
        entries.append((w, 1.0 / (25000.0 + 1000.0 * i)))
    assert len(entries) == 500
    return tuple(entries)


def make_synthetic_corpus(n: int = 5000, seed: int = 0,
                          name: str = "synthetic") -> Corpus:
    """A word+2digits corpus of about n occurrences, heavy-tailed by design.

    Words with a classic word+digits dictionary entry put 60% of their
    mass on that exact password; other occurrences draw digits uniformly
    from the seeded generator. Deterministic in (n, seed).
    """
    words = word_list()
    total_w = sum(w for _, w in words)
    rng = generator(seed)
    corpus = Corpus(leak_name=name, max_len=8)
    for word, weight in words:
        count = max(1, round(n * weight / total_w))
        classic = _CLASSIC_SUFFIX.get(word)
        if classic is not None:
            forced = max(1, int(0.6 * count))
            corpus.add((word + classic).encode(), forced)
            count -= forced
        for _ in range(count):
            corpus.add((word + f"{rng.integers(100):02d}").encode())
    return corpus


def template_space_size(word_lengths=(4, 5, 6), digit_slots: int = 2) -> int:
    """How many strings the lowercase-word + digits template space holds."""
    return sum(26 ** k for k in word_lengths) * 10 ** digit_slots

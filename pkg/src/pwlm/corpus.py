"""Password corpus ingestion, train/test splitting, and filtering.

A Corpus is a multiset: the same password may carry a large occurrence
count (leaks repeat popular passwords heavily). Splitting operates on
the flattened occurrence list, which is what pushes high-frequency
passwords into the training side and leaves a low-frequency test set.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Set

from .errors import EmptyCorpus, FormatError, IoError
from .rng import fisher_yates

ONE_PER_LINE = "one-per-line"
PAIRS = "pairs"  # "count<TAB>password" or "count<SPACE>password"


@dataclass
class Corpus:
    """Multiset of passwords with provenance."""

    entries: Dict[bytes, int] = field(default_factory=dict)
    leak_name: str = ""
    max_len: int = 16

    def total_occurrences(self) -> int:
        return sum(self.entries.values())

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, password: bytes, count: int = 1) -> None:
        self.entries[password] = self.entries.get(password, 0) + count


@dataclass
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly in (0, 1)")


@dataclass
class SplitStats:
    source_occurrences: int
    train_occurrences: int
    heldout_occurrences: int
    test_unique: int
    max_test_frequency: int  # frequency of the most common test password in the source leak
    mean_test_frequency: float


@dataclass
class SplitResult:
    train: Corpus
    test: Set[bytes]
    stats: SplitStats


def _strip_line(raw: bytes) -> bytes:
    return raw.rstrip(b"\r\n")


def load_leak(path, max_len: int, format: str = ONE_PER_LINE) -> Corpus:
    """Read a leak file into a Corpus, dropping lines longer than max_len bytes.

    Lines are treated as raw bytes with trailing CR/LF stripped; empty
    lines are dropped. In `pairs` format each line is
    "count<whitespace>password" and counts aggregate across duplicates.
    """
    if format not in (ONE_PER_LINE, PAIRS):
        raise ValueError(f"unknown corpus format {format!r}")
    entries: Dict[bytes, int] = {}
    try:
        with open(path, "rb") as fh:
            raw_lines = fh.read().split(b"\n")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    for lineno, raw in enumerate(raw_lines, start=1):
        line = _strip_line(raw)
        if not line:
            continue
        if format == ONE_PER_LINE:
            password, count = line, 1
        else:
            head, _, tail = line.partition(b"\t")
            if not tail:
                head, _, tail = line.partition(b" ")
            if not tail:
                raise FormatError(f"{path}:{lineno}: expected 'count password'")
            try:
                count = int(head)
            except ValueError:
                raise FormatError(
                    f"{path}:{lineno}: count field {head!r} is not numeric"
                ) from None
            if count < 1:
                raise FormatError(f"{path}:{lineno}: count must be >= 1")
            password = tail
        if 1 <= len(password) <= max_len:
            entries[password] = entries.get(password, 0) + count
    return Corpus(entries=entries, leak_name=os.path.basename(str(path)), max_len=max_len)


def split_rockyou_style(corpus: Corpus, spec: SplitSpec) -> SplitResult:
    """80/20-style occurrence split with a held-out unique test set.

    The occurrence list (each occurrence a separate item, passwords in
    byte-sorted order before shuffling) is permuted by Fisher-Yates under
    SplitMix64(seed). The first floor(train_fraction * N) occurrences
    become the training multiset; the test set is every held-out password
    that never occurs in training. Identical (corpus, seed) inputs yield
    byte-identical results.
    """
    if not corpus.entries:
        raise EmptyCorpus("cannot split an empty corpus")
    occurrences: List[bytes] = []
    for pw in sorted(corpus.entries):
        occurrences.extend([pw] * corpus.entries[pw])
    fisher_yates(occurrences, spec.seed)

    n_train = int(spec.train_fraction * len(occurrences))
    train = Corpus(leak_name=corpus.leak_name, max_len=corpus.max_len)
    for pw in occurrences[:n_train]:
        train.add(pw)
    heldout = occurrences[n_train:]
    test = {pw for pw in heldout if pw not in train.entries}

    freqs = [corpus.entries[pw] for pw in test]
    stats = SplitStats(
        source_occurrences=len(occurrences),
        train_occurrences=n_train,
        heldout_occurrences=len(heldout),
        test_unique=len(test),
        max_test_frequency=max(freqs) if freqs else 0,
        mean_test_frequency=sum(freqs) / len(freqs) if freqs else 0.0,
    )
    return SplitResult(train=train, test=test, stats=stats)


def dedupe(corpus: Corpus) -> Corpus:
    """Same key set, every count forced to 1."""
    return Corpus(
        entries={pw: 1 for pw in corpus.entries},
        leak_name=corpus.leak_name,
        max_len=corpus.max_len,
    )


def cross_eval_filter(test: Set[bytes], exclusions: Iterable[Corpus]) -> Set[bytes]:
    """Remove from `test` any password present in an exclusion corpus."""
    out = set(test)
    for corpus in exclusions:
        out -= corpus.entries.keys()
    return out

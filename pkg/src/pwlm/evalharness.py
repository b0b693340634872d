"""Guessing-performance evaluation: match rates, uniqueness curves,
cross-leak matrices, strength-bucketed tables, quantile exemplars, and
strength-alignment summaries.

Every report number counts a test password once no matter how often it
was guessed, match rates are monotone in the guess budget (bigger budgets
reuse the same sample stream as prefixes), and reports serialize
byte-identically given the same seeds.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from . import gpt
from .errors import DataError, EmptyAfterFilter, EmptyTestSet
from .gpt import GptModel, SampleOpts
from .strength import StrengthScore, estimate_strength
from .textio import escape_bytes


class KmvSketch:
    """k-minimum-values distinct counter (about 0.5% error at k = 65536)."""

    def __init__(self, k: int = 65536):
        self.k = k
        self._heap: List[int] = []  # max-heap via negation
        self._members: Set[int] = set()

    def add(self, item: bytes) -> None:
        h = int.from_bytes(hashlib.blake2b(item, digest_size=8).digest(), "big")
        if h in self._members:
            return
        if len(self._heap) < self.k:
            heapq.heappush(self._heap, -h)
            self._members.add(h)
        elif h < -self._heap[0]:
            self._members.discard(-heapq.heappushpop(self._heap, -h))
            self._members.add(h)

    def distinct(self) -> float:
        if len(self._heap) < self.k:
            return float(len(self._heap))
        kth = -self._heap[0]
        return (self.k - 1) * (2.0 ** 64) / kth


@dataclass
class GuessPool:
    """Distinct guesses drawn from one source under a budget.

    Exact mode keeps the set (needed for match rates); sketch mode trades
    membership for memory and flags its counts as approximate.
    """

    source: str = ""
    total_drawn: int = 0
    unique_guesses: Set[bytes] = field(default_factory=set)
    sketch: Optional[KmvSketch] = None

    @classmethod
    def sketched(cls, source: str = "", k: int = 65536) -> "GuessPool":
        return cls(source=source, unique_guesses=set(), sketch=KmvSketch(k))

    def add(self, password: bytes) -> None:
        self.total_drawn += 1
        if self.sketch is not None:
            self.sketch.add(password)
        else:
            self.unique_guesses.add(password)

    def add_many(self, passwords: Iterable[bytes]) -> "GuessPool":
        for pw in passwords:
            self.add(pw)
        return self

    def distinct(self) -> float:
        if self.sketch is not None:
            return self.sketch.distinct()
        return float(len(self.unique_guesses))

    def merge(self, other: "GuessPool") -> "GuessPool":
        """Associative, commutative combine of two exact pools."""
        if self.sketch is not None or other.sketch is not None:
            raise DataError("merge is defined for exact pools only")
        return GuessPool(
            source=self.source if self.source == other.source
            else "+".join(sorted({self.source, other.source})),
            total_drawn=self.total_drawn + other.total_drawn,
            unique_guesses=self.unique_guesses | other.unique_guesses,
        )


def match_rate(pool: GuessPool, test: Set[bytes]) -> float:
    """Fraction of test passwords present among the pool's distinct guesses."""
    if not test:
        raise EmptyTestSet("match_rate requires a non-empty test set")
    if pool.sketch is not None:
        raise DataError("match_rate requires an exact pool")
    return len(pool.unique_guesses & test) / len(test)


def uniqueness_curve(stream: Iterable[bytes], budgets: Sequence[int],
                     sketch: bool = False) -> List[Tuple[int, float]]:
    """distinct(first B samples)/B at each ascending budget B."""
    budgets = list(budgets)
    if any(b <= 0 for b in budgets) or sorted(budgets) != budgets:
        raise DataError("budgets must be positive and ascending")
    seen: Union[KmvSketch, Set[bytes]] = KmvSketch() if sketch else set()
    points = []
    it = iter(stream)
    drawn = 0
    for budget in budgets:
        while drawn < budget:
            pw = next(it)
            drawn += 1
            seen.add(pw)
        distinct = seen.distinct() if sketch else len(seen)
        points.append((budget, distinct / budget))
    return points


SamplerLike = Union[GptModel, Callable[[int, int], List[bytes]]]


def _draw_from(model: SamplerLike, n: int, seed: int) -> List[bytes]:
    if isinstance(model, GptModel):
        return gpt.sample_many(model, n, SampleOpts(seed=seed))
    return model(n, seed)


@dataclass
class CrossLeakCell:
    model: str
    test_set: str
    budget: int
    seed: int
    rate: float


def cross_leak_eval(models: Mapping[str, SamplerLike],
                    test_sets: Mapping[str, Set[bytes]],
                    budgets: Sequence[int], seed: int = 0) -> List[CrossLeakCell]:
    """match_rate per (model, test set, budget).

    One sample stream per model at the largest budget; smaller budgets
    take prefixes of it, which makes rates monotone in the budget by
    construction. The per-model stream seed is recorded in every cell.
    """
    budgets = sorted(budgets)
    if not budgets:
        raise DataError("need at least one budget")
    cells: List[CrossLeakCell] = []
    streams = np.random.SeedSequence(seed).spawn(len(models))
    for (name, model), stream in zip(models.items(), streams):
        model_seed = int(stream.generate_state(1)[0])
        guesses = _draw_from(model, budgets[-1], model_seed)
        for budget in budgets:
            pool = GuessPool(source=name).add_many(guesses[:budget])
            for set_name, test in test_sets.items():
                cells.append(CrossLeakCell(
                    model=name, test_set=set_name, budget=budget,
                    seed=model_seed, rate=match_rate(pool, test)))
    return cells


@dataclass
class BucketRow:
    score: int
    total: int
    by_combo: Dict[Tuple[str, ...], int]  # exact subset of pools that guessed
    none: int

    def check_sum(self) -> bool:
        return self.total == self.none + sum(self.by_combo.values())


def strength_bucketed_matches(
    test: Set[bytes], pools: Mapping[str, GuessPool],
    estimator: Callable[[bytes], StrengthScore] = estimate_strength,
) -> List[BucketRow]:
    """Per strength score: who guessed what, split by exact pool subset."""
    if not pools:
        raise DataError("need at least one pool")
    names = sorted(pools)
    rows = [BucketRow(score=s, total=0, by_combo={}, none=0) for s in range(5)]
    for pw in sorted(test):
        row = rows[estimator(pw).score]
        row.total += 1
        combo = tuple(n for n in names if pw in pools[n].unique_guesses)
        if combo:
            row.by_combo[combo] = row.by_combo.get(combo, 0) + 1
        else:
            row.none += 1
    return rows


def quantile_passwords(scored: Sequence[Tuple[bytes, float]],
                       quantiles: Sequence[float],
                       length: Optional[int] = None
                       ) -> List[Tuple[float, bytes, float]]:
    """Nearest-rank quantile exemplars of the log-prob distribution."""
    items = [(pw, lp) for pw, lp in scored
             if length is None or len(pw) == length]
    if not items:
        raise EmptyAfterFilter(f"no scored passwords of length {length}")
    items.sort(key=lambda t: (t[1], t[0]))
    n = len(items)
    out = []
    for q in quantiles:
        if not 0.0 <= q <= 1.0:
            raise DataError(f"quantile {q} outside [0, 1]")
        idx = min(max(math.ceil(q * n) - 1, 0), n - 1)
        pw, lp = items[idx]
        out.append((q, pw, lp))
    return out


@dataclass
class ScoreSummary:
    score: int
    count: int
    logprob_q1: float
    logprob_median: float
    logprob_q3: float
    entropy_q1: float
    entropy_median: float
    entropy_q3: float


@dataclass
class AlignmentReport:
    buckets: List[ScoreSummary]
    low_prob_weak: List[Tuple[bytes, float, int]]
    high_prob_strong: List[Tuple[bytes, float, int]]


def strength_alignment(
    scored: Sequence[Tuple[bytes, float, float]],
    estimator: Callable[[bytes], StrengthScore] = estimate_strength,
    weak_max_score: int = 1, strong_min_score: int = 3,
    low_percentile: float = 10.0, high_percentile: float = 90.0,
) -> AlignmentReport:
    """Distribution of (log_prob, mean entropy) per strength score.

    Outliers are weak-scored passwords in the low tail of the log-prob
    distribution and strong-scored ones in its high tail, at the given
    percentile cutoffs.
    """
    if not scored:
        raise DataError("strength_alignment requires scored passwords")
    scores = {pw: estimator(pw).score for pw, _, _ in scored}
    all_lp = np.array([lp for _, lp, _ in scored])
    lo_cut = float(np.percentile(all_lp, low_percentile))
    hi_cut = float(np.percentile(all_lp, high_percentile))

    buckets = []
    for s in range(5):
        lps = np.array([lp for pw, lp, _ in scored if scores[pw] == s])
        ents = np.array([e for pw, _, e in scored if scores[pw] == s])
        if lps.size == 0:
            continue
        q1, med, q3 = np.percentile(lps, [25, 50, 75])
        e1, emed, e3 = np.percentile(ents, [25, 50, 75])
        buckets.append(ScoreSummary(
            score=s, count=int(lps.size),
            logprob_q1=float(q1), logprob_median=float(med), logprob_q3=float(q3),
            entropy_q1=float(e1), entropy_median=float(emed), entropy_q3=float(e3)))

    low_weak = sorted(
        (pw, lp, scores[pw]) for pw, lp, _ in scored
        if scores[pw] <= weak_max_score and lp <= lo_cut)
    high_strong = sorted(
        (pw, lp, scores[pw]) for pw, lp, _ in scored
        if scores[pw] >= strong_min_score and lp >= hi_cut)
    return AlignmentReport(buckets=buckets, low_prob_weak=low_weak,
                           high_prob_strong=high_strong)


# ---------------------------------------------------------------------------
# report container
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    metadata: Dict[str, object] = field(default_factory=dict)
    match_rates: List[Tuple[str, int, float]] = field(default_factory=list)
    uniqueness: List[Tuple[int, float]] = field(default_factory=list)
    bucket_rows: List[BucketRow] = field(default_factory=list)
    cross_cells: List[CrossLeakCell] = field(default_factory=list)
    quantiles: List[Tuple[float, bytes, float]] = field(default_factory=list)
    alignment: Optional[AlignmentReport] = None

    def render(self) -> str:
        """Key-value text plus CSV-style tables; deterministic bytes."""
        lines: List[str] = []
        for key in sorted(self.metadata):
            lines.append(f"meta.{key}={self.metadata[key]}")
        if self.match_rates:
            lines.append("table.match_rates=source,budget,rate")
            for source, budget, rate in self.match_rates:
                lines.append(f"{source},{budget},{rate!r}")
        if self.uniqueness:
            lines.append("table.uniqueness=budget,unique_fraction")
            for budget, frac in self.uniqueness:
                lines.append(f"{budget},{frac!r}")
        if self.bucket_rows:
            lines.append("table.strength_buckets=score,total,combo,count")
            for row in self.bucket_rows:
                for combo in sorted(row.by_combo):
                    lines.append(
                        f"{row.score},{row.total},{'+'.join(combo)},"
                        f"{row.by_combo[combo]}")
                lines.append(f"{row.score},{row.total},none,{row.none}")
        if self.cross_cells:
            lines.append("table.cross_leak=model,test_set,budget,seed,rate")
            for c in self.cross_cells:
                lines.append(f"{c.model},{c.test_set},{c.budget},{c.seed},{c.rate!r}")
        if self.quantiles:
            lines.append("table.quantiles=q,password,log10_prob")
            for q, pw, lp in self.quantiles:
                lines.append(f"{q!r},{escape_bytes(pw)},{lp!r}")
        if self.alignment is not None:
            lines.append("table.alignment=score,count,lp_q1,lp_med,lp_q3,"
                         "ent_q1,ent_med,ent_q3")
            for b in self.alignment.buckets:
                lines.append(
                    f"{b.score},{b.count},{b.logprob_q1!r},{b.logprob_median!r},"
                    f"{b.logprob_q3!r},{b.entropy_q1!r},{b.entropy_median!r},"
                    f"{b.entropy_q3!r}")
            for pw, lp, s in self.alignment.low_prob_weak:
                lines.append(f"outlier.low_prob_weak={escape_bytes(pw)},{lp!r},{s}")
            for pw, lp, s in self.alignment.high_prob_strong:
                lines.append(f"outlier.high_prob_strong={escape_bytes(pw)},{lp!r},{s}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())

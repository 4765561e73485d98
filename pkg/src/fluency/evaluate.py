"""Overlap-based scoring of generated runs against a human reference bank.

The sequence score is a three-order n-gram overlap with a brevity penalty,

    score = (prod_{i=1..3} precision_i)^(1/3) * min(1, exp(1 - L_ref / L_gen))

where precision_i pools min(reference count, generation count) over every
n-gram of every reference, divided by the total reference n-gram count, and
L_ref is the mean reference length. The same machinery scores raw exemplar
tokens and coded category tokens. The module also aligns model signals
(switch probability mass, entropy) around human category switches.
"""

from __future__ import annotations

import bisect
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

from .corpus import (
    CategoryCoding,
    CategoryScheme,
    RunBank,
    code_sequence,
    run_statistics,
)
from .cues import DistributionProvider, distribution_switch_mass
from .errors import DataError, DeadEndError

logger = logging.getLogger(__name__)

BLEU_ORDERS = (1, 2, 3)


def ngrams(seq: Sequence[Hashable], n: int) -> list[tuple]:
    return [tuple(seq[i : i + n]) for i in range(len(seq) - n + 1)]


def ngram_precision(
    gen: Sequence[Hashable], refs: Sequence[Sequence[Hashable]], n: int
) -> float:
    """Pooled overlap of order-n grams: sum over references of
    min(reference count, generation count) per n-gram type, divided by the
    total reference n-gram count."""
    if n not in BLEU_ORDERS:
        raise DataError(f"n-gram order must be in {BLEU_ORDERS}, got {n}")
    if not refs:
        raise DataError("empty reference bank")
    gen_counts = Counter(ngrams(gen, n))
    numerator = 0
    denominator = 0
    for ref in refs:
        ref_counts = Counter(ngrams(ref, n))
        denominator += sum(ref_counts.values())
        numerator += sum(min(c, gen_counts[g]) for g, c in ref_counts.items())
    if denominator == 0:
        raise DataError(f"references contain no {n}-grams")
    return numerator / denominator


class ReferenceBank:
    """Precomputed reference n-gram tables shared across many evaluations.

    For each order, counts per n-gram type are stored as sorted arrays with
    prefix sums so the pooled min() numerator is a binary search per type.
    """

    def __init__(self, refs: Sequence[Sequence[Hashable]]):
        if not refs:
            raise DataError("empty reference bank")
        self.refs = [tuple(r) for r in refs]
        self.mean_length = sum(len(r) for r in self.refs) / len(self.refs)
        self.total_length = sum(len(r) for r in self.refs)
        self._tables: dict[int, dict[tuple, tuple[list[int], list[int]]]] = {}
        self._denominators: dict[int, int] = {}
        self._per_ref_counts: dict[int, list[Counter]] = {}
        for n in BLEU_ORDERS:
            per_ref = [Counter(ngrams(r, n)) for r in self.refs]
            self._per_ref_counts[n] = per_ref
            self._denominators[n] = sum(sum(c.values()) for c in per_ref)
            bucket: dict[tuple, list[int]] = {}
            for counts in per_ref:
                for gram, c in counts.items():
                    bucket.setdefault(gram, []).append(c)
            table = {}
            for gram, counts in bucket.items():
                counts.sort()
                prefix = [0]
                for c in counts:
                    prefix.append(prefix[-1] + c)
                table[gram] = (counts, prefix)
            self._tables[n] = table

    def __len__(self) -> int:
        return len(self.refs)

    def precision(self, gen: Sequence[Hashable], n: int,
                  leave_out: int | None = None) -> float | None:
        """Pooled order-n precision of ``gen``; ``leave_out`` removes one
        reference (by index) from both numerator and denominator.

        Returns None when the references hold no n-grams of this order (the
        one case where the ratio is undefined and the order is skipped)."""
        table = self._tables[n]
        denominator = self._denominators[n]
        numerator = 0
        gen_counts = Counter(ngrams(gen, n))
        for gram, m in gen_counts.items():
            entry = table.get(gram)
            if entry is None:
                continue
            counts, prefix = entry
            # sum over refs of min(ref count, m)
            split = bisect.bisect_right(counts, m)
            numerator += prefix[split] + m * (len(counts) - split)
        if leave_out is not None:
            held = self._per_ref_counts[n][leave_out]
            denominator -= sum(held.values())
            numerator -= sum(min(c, gen_counts[g]) for g, c in held.items())
        if denominator == 0:
            return None
        return numerator / denominator

    def reference_length(self, leave_out: int | None = None) -> float:
        if leave_out is None:
            return self.mean_length
        if len(self.refs) < 2:
            raise DataError("cannot leave one out of a single-reference bank")
        return (self.total_length - len(self.refs[leave_out])) / (len(self.refs) - 1)


def brevity_penalty(ref_length: float, gen_length: int) -> float:
    if gen_length <= 0:
        raise DataError("empty generation")
    return min(1.0, math.exp(1.0 - ref_length / gen_length))


@dataclass(frozen=True)
class BleuScore:
    """One metric's precisions (None where the order was skipped), brevity
    penalty, and combined score."""

    precisions: tuple[float | None, ...]
    brevity_penalty: float
    score: float


def _combine(precisions: list[float | None], bp: float) -> float:
    defined = [p for p in precisions if p is not None]
    if not defined:
        raise DataError("generation too short for any n-gram order")
    if any(p == 0.0 for p in defined):
        return 0.0
    gmean = math.exp(sum(math.log(p) for p in defined) / len(defined))
    return gmean * bp


def sequence_bleu(
    gen: Sequence[Hashable],
    refs: ReferenceBank | Sequence[Sequence[Hashable]],
    leave_out: int | None = None,
) -> BleuScore:
    """Three-order overlap score with brevity penalty; orders longer than
    the generation are skipped (warned)."""
    bank = refs if isinstance(refs, ReferenceBank) else ReferenceBank(refs)
    gen = tuple(gen)
    if not gen:
        raise DataError("empty generation")
    if len(gen) < max(BLEU_ORDERS):
        # a generation with no n-grams of some order scores 0 there
        logger.warning("generation of length %d shorter than %d-grams", len(gen),
                       max(BLEU_ORDERS))
    precisions = [bank.precision(gen, n, leave_out) for n in BLEU_ORDERS]
    bp = brevity_penalty(bank.reference_length(leave_out), len(gen))
    return BleuScore(tuple(precisions), bp, _combine(precisions, bp))


def exemplar_bleu(
    gen: Sequence[str],
    refs: ReferenceBank | Sequence[Sequence[str]],
    leave_out: int | None = None,
) -> BleuScore:
    """Overlap of raw exemplar tokens against the reference bank."""
    return sequence_bleu(gen, refs, leave_out)


def coded_bank(
    refs: Sequence[Sequence[str]],
    scheme: CategoryScheme,
    coding: CategoryCoding = CategoryCoding.CHAINED,
) -> ReferenceBank:
    return ReferenceBank([code_sequence(r, scheme, coding) for r in refs])


def category_bleu(
    gen: Sequence[str],
    refs: ReferenceBank | Sequence[Sequence[str]],
    scheme: CategoryScheme,
    coding: CategoryCoding = CategoryCoding.CHAINED,
    leave_out: int | None = None,
) -> float:
    """Overlap of coded category tokens (consecutive duplicates kept).

    ``refs`` may be raw reference sequences or a bank already built from
    coded sequences."""
    bank = refs if isinstance(refs, ReferenceBank) else coded_bank(refs, scheme, coding)
    coded_gen = code_sequence(tuple(gen), scheme, coding)
    return sequence_bleu(coded_gen, bank, leave_out).score


def corpus_eval(
    generations: Sequence[Sequence[str]],
    refs: RunBank,
    scheme: CategoryScheme,
    coding: CategoryCoding = CategoryCoding.CHAINED,
    leave_one_out: bool = False,
) -> dict[str, float]:
    """Scorecard: mean exemplar and category overlap of each generation
    against the bank, plus the generations' own run statistics.

    ``leave_one_out`` scores generation i against the bank without its i-th
    run (for self-evaluation of the bank)."""
    if not generations:
        raise DataError("no generations to evaluate")
    ref_seqs = refs.sequences()
    if leave_one_out and len(generations) != len(ref_seqs):
        raise DataError("leave-one-out needs one generation per reference")
    ex_bank = ReferenceBank(ref_seqs)
    cat_bank = coded_bank(ref_seqs, scheme, coding)
    ex_scores = []
    cat_scores = []
    for i, gen in enumerate(generations):
        leave = i if leave_one_out else None
        ex_scores.append(exemplar_bleu(gen, ex_bank, leave).score)
        cat_scores.append(category_bleu(gen, cat_bank, scheme, coding, leave))
    stats = run_statistics(generations, scheme)
    return {
        "exemplar_bleu": float(np.mean(ex_scores)),
        "category_bleu": float(np.mean(cat_scores)),
        "avg_run_length": stats["avg_run_length"],
        "pct_switch": stats["pct_switch"],
        "n_generations": len(generations),
    }


@dataclass(frozen=True)
class SwitchProfile:
    """Mean model signal at offsets around human category switches.

    Offset +1 is the first exemplar of the new patch, -1 the last exemplar
    of the old one (there is no offset 0).
    """

    offsets: tuple[int, ...]
    values: tuple[float, ...]
    n_events: tuple[int, ...]
    signal_kind: str

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("offset,mean_signal,n_events\n")
            for off, val, n in zip(self.offsets, self.values, self.n_events):
                fh.write(f"{off},{val!r},{n}\n")


def _position_signals(
    model: DistributionProvider,
    items: tuple[str, ...],
    scheme: CategoryScheme,
    signal: str,
    exclude_repeats: bool,
) -> dict[int, float]:
    """Signal of the model's next distribution at each production position.

    Position k is the distribution that produces items[k]; switch mass needs
    a current exemplar so it starts at k=1, entropy at k=0.
    """
    signals: dict[int, float] = {}
    start = 1 if signal == "prob_ratio" else 0
    for k in range(start, len(items)):
        prefix = items[:k]
        excluded = frozenset(prefix) if exclude_repeats else frozenset()
        try:
            dist = model.distribution(prefix, excluded)
        except DeadEndError:
            continue
        if signal == "prob_ratio":
            signals[k] = distribution_switch_mass(dist, items[k - 1], scheme)
        else:
            signals[k] = dist.entropy()
    return signals


def switch_profile(
    model: DistributionProvider,
    bank: RunBank,
    scheme: CategoryScheme,
    window: int = 2,
    signal: str = "prob_ratio",
    exclude_repeats: bool = True,
) -> SwitchProfile:
    """Align a model signal around every human switch.

    prob_ratio: switch probability mass at each position divided by the
    run's mean switch mass, averaged per offset over all switch events.
    entropy: same alignment using the Shannon entropy of the next
    distribution. Runs without switches are skipped.
    """
    if window < 1:
        raise DataError("window must be >= 1")
    if signal not in ("prob_ratio", "entropy"):
        raise DataError(f"unknown signal kind: {signal!r}")
    offsets = tuple(range(-window, 0)) + tuple(range(1, window + 1))
    sums = {o: 0.0 for o in offsets}
    counts = {o: 0 for o in offsets}
    for run in bank.runs:
        items = run.items
        switch_points = [
            n
            for n in range(len(items) - 1)
            if scheme.member_set(items[n]).isdisjoint(scheme.member_set(items[n + 1]))
        ]
        if not switch_points:
            continue
        signals = _position_signals(model, items, scheme, signal, exclude_repeats)
        if not signals:
            continue
        if signal == "prob_ratio":
            mean = sum(signals.values()) / len(signals)
            if mean <= 0:
                continue
            signals = {k: v / mean for k, v in signals.items()}
        for n in switch_points:
            for o in offsets:
                k = n + o + 1 if o < 0 else n + o
                if k in signals:
                    sums[o] += signals[k]
                    counts[o] += 1
    if all(c == 0 for c in counts.values()):
        raise DataError("no switch events found in bank")
    values = tuple(sums[o] / counts[o] if counts[o] else math.nan for o in offsets)
    return SwitchProfile(
        offsets=offsets,
        values=values,
        n_events=tuple(counts[o] for o in offsets),
        signal_kind=signal,
    )

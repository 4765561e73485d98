"""Ingestion and validation of fluency data, plus corpus statistics.

Handles participant run banks (CSV/JSONL), category schemes, frequency
tables, the category transition matrix, and run-level switch statistics.
All loaded objects are immutable; loading is single-threaded.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

PROB_TOL = 1e-9

RUNS_CSV_HEADER = ["participant", "position", "exemplar", "irt_seconds"]
SCHEME_CSV_HEADER = ["exemplar", "categories"]
FREQ_CSV_HEADER = ["exemplar", "count"]


def normalize_surface(text: str) -> str:
    """Trim, lowercase, and collapse internal whitespace. Idempotent."""
    return " ".join(text.strip().lower().split())


class Lexicon:
    """Ordered set of exemplar surfaces; list position is the exemplar id."""

    def __init__(self, surfaces: Iterable[str]):
        self._surfaces: list[str] = []
        self._ids: dict[str, int] = {}
        for raw in surfaces:
            surface = normalize_surface(raw)
            if not surface:
                raise DataError("empty exemplar surface in lexicon")
            if surface not in self._ids:
                self._ids[surface] = len(self._surfaces)
                self._surfaces.append(surface)

    def __len__(self) -> int:
        return len(self._surfaces)

    def __iter__(self):
        return iter(self._surfaces)

    def __contains__(self, surface: str) -> bool:
        return surface in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, Lexicon) and self._surfaces == other._surfaces

    def id_of(self, surface: str) -> int:
        try:
            return self._ids[surface]
        except KeyError:
            raise DataError(f"exemplar not in lexicon: {surface!r}") from None

    def get_id(self, surface: str) -> int | None:
        return self._ids.get(surface)

    def surface_of(self, exemplar_id: int) -> str:
        return self._surfaces[exemplar_id]

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(self._surfaces)


@dataclass(frozen=True)
class FluencyRun:
    """One participant's ordered exemplar sequence with optional IRTs."""

    participant: str
    items: tuple[str, ...]
    irts: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.items:
            raise DataError(f"run {self.participant!r} has no items")
        if self.irts is not None:
            if len(self.irts) != len(self.items) - 1:
                raise DataError(
                    f"run {self.participant!r}: expected {len(self.items) - 1} "
                    f"irts, got {len(self.irts)}"
                )
            if any(irt <= 0 for irt in self.irts):
                raise DataError(f"run {self.participant!r}: irts must be > 0")


@dataclass(frozen=True)
class RunBank:
    """A collection of fluency runs plus the lexicon of their exemplars."""

    runs: tuple[FluencyRun, ...]
    lexicon: Lexicon

    def __post_init__(self):
        if not self.runs:
            raise DataError("run bank is empty")

    @classmethod
    def from_runs(cls, runs: Sequence[FluencyRun]) -> "RunBank":
        lexicon = Lexicon(item for run in runs for item in run.items)
        return cls(runs=tuple(runs), lexicon=lexicon)

    def sequences(self) -> list[tuple[str, ...]]:
        return [run.items for run in self.runs]

    def lengths(self) -> tuple[int, ...]:
        return tuple(len(run.items) for run in self.runs)


class CategoryCoding(Enum):
    """Rule for picking one category when an exemplar belongs to several."""

    CHAINED = "chained"
    FIRST_LISTED = "first-listed"


@dataclass(frozen=True)
class CategoryScheme:
    """Exemplar -> set-of-subcategories mapping.

    ``membership`` values preserve the order categories were listed in the
    source file (first entry is the "first listed" category).
    """

    categories: tuple[str, ...]
    membership: dict[str, tuple[int, ...]]

    def __post_init__(self):
        n = len(self.categories)
        for surface, cats in self.membership.items():
            if not cats:
                raise DataError(f"exemplar {surface!r} has no categories")
            if any(c < 0 or c >= n for c in cats):
                raise DataError(f"exemplar {surface!r} has invalid category index")

    def member_set(self, surface: str) -> frozenset[Hashable]:
        """Membership as a set; unmapped exemplars get a singleton unknown
        category keyed by their own surface."""
        cats = self.membership.get(surface)
        if cats is None:
            return frozenset([("unmapped", surface)])
        return frozenset(cats)

    def is_mapped(self, surface: str) -> bool:
        return surface in self.membership

    def n_categories(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class FrequencyTable:
    """Normalized exemplar frequencies (the attachment for the global cue)."""

    weights: dict[str, float]

    def __post_init__(self):
        if not self.weights:
            raise DataError("frequency table is empty")
        if any(w <= 0 for w in self.weights.values()):
            raise DataError("frequency weights must be > 0")
        total = sum(self.weights.values())
        if abs(total - 1.0) > PROB_TOL:
            raise DataError(f"frequency weights sum to {total}, expected 1")

    @classmethod
    def from_counts(cls, counts: dict[str, float]) -> "FrequencyTable":
        total = float(sum(counts.values()))
        if total <= 0:
            raise DataError("frequency counts sum to zero")
        return cls({s: c / total for s, c in counts.items() if c > 0})


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic category transition probabilities.

    Rows with no observed transition are all-zero.
    """

    probs: np.ndarray
    categories: tuple[str, ...]

    def __post_init__(self):
        k = len(self.categories)
        if self.probs.shape != (k, k):
            raise DataError("transition matrix shape does not match categories")
        if (self.probs < 0).any():
            raise DataError("transition probabilities must be >= 0")
        sums = self.probs.sum(axis=1)
        bad = [i for i, s in enumerate(sums) if s > 0 and abs(s - 1.0) > PROB_TOL]
        if bad:
            raise DataError(f"non-stochastic transition rows: {bad}")


# ---------------------------------------------------------------------------
# loaders / writers


def _infer_format(path: str | Path, explicit: str | None) -> str:
    if explicit is not None:
        if explicit not in ("csv", "jsonl"):
            raise DataError(f"unknown runs format: {explicit!r}")
        return explicit
    suffix = Path(path).suffix.lower()
    return "jsonl" if suffix in (".jsonl", ".json") else "csv"


def load_runs(path: str | Path, format: str | None = None) -> RunBank:
    """Load a run bank from CSV (participant,position,exemplar,irt_seconds)
    or JSONL (one run object per line). Duplicates within a run are kept."""
    fmt = _infer_format(path, format)
    if fmt == "csv":
        runs = _load_runs_csv(path)
    else:
        runs = _load_runs_jsonl(path)
    if not runs:
        raise DataError(f"{path}: no runs found")
    return RunBank.from_runs(runs)


def _load_runs_csv(path: str | Path) -> list[FluencyRun]:
    items: dict[str, list[str]] = {}
    irts: dict[str, list[float | None]] = {}
    order: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if [h.strip() for h in header] != RUNS_CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(RUNS_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 3:
                raise DataError(f"{path}:{lineno}: expected at least 3 fields")
            participant = row[0].strip()
            if not participant:
                raise DataError(f"{path}:{lineno}: empty participant id")
            try:
                position = int(row[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad position {row[1]!r}") from None
            exemplar = normalize_surface(row[2])
            if not exemplar:
                raise DataError(f"{path}:{lineno}: empty exemplar field")
            if participant not in items:
                items[participant] = []
                irts[participant] = []
                order.append(participant)
            expected = len(items[participant]) + 1
            if position != expected:
                raise DataError(
                    f"{path}:{lineno}: participant {participant!r} position "
                    f"{position}, expected {expected} (1-based contiguous)"
                )
            items[participant].append(exemplar)
            raw_irt = row[3].strip() if len(row) > 3 else ""
            if position == 1:
                if raw_irt:
                    raise DataError(
                        f"{path}:{lineno}: irt_seconds must be blank at position 1"
                    )
            else:
                try:
                    irts[participant].append(float(raw_irt) if raw_irt else None)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad irt {raw_irt!r}") from None
    runs = []
    for participant in order:
        run_irts = irts[participant]
        if any(v is None for v in run_irts):
            if any(v is not None for v in run_irts):
                raise DataError(
                    f"{path}: participant {participant!r} has a partial irt column"
                )
            final_irts = None
        else:
            final_irts = tuple(run_irts) if run_irts else None
        runs.append(
            FluencyRun(
                participant=participant,
                items=tuple(items[participant]),
                irts=final_irts,
            )
        )
    return runs


def _load_runs_jsonl(path: str | Path) -> list[FluencyRun]:
    runs = []
    seen: set[str] = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: bad JSON: {exc}") from None
            try:
                participant = str(record["participant"])
                raw_items = record["items"]
            except (KeyError, TypeError):
                raise DataError(
                    f"{path}:{lineno}: run objects need participant and items"
                ) from None
            if participant in seen:
                raise DataError(f"{path}:{lineno}: duplicate participant {participant!r}")
            seen.add(participant)
            run_items = tuple(normalize_surface(str(s)) for s in raw_items)
            if any(not s for s in run_items):
                raise DataError(f"{path}:{lineno}: empty exemplar in items")
            raw_irts = record.get("irts")
            run_irts = None if raw_irts is None else tuple(float(v) for v in raw_irts)
            try:
                runs.append(FluencyRun(participant, run_items, run_irts))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return runs


def save_runs(runs: RunBank | Sequence[FluencyRun], path: str | Path,
              format: str | None = None) -> None:
    """Write runs so that load_runs round-trips the contents exactly."""
    run_list = list(runs.runs) if isinstance(runs, RunBank) else list(runs)
    fmt = _infer_format(path, format)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RUNS_CSV_HEADER)
            for run in run_list:
                for pos, item in enumerate(run.items, start=1):
                    irt = ""
                    if pos > 1 and run.irts is not None:
                        irt = repr(run.irts[pos - 2])
                    writer.writerow([run.participant, pos, item, irt])
    else:
        with open(path, "w") as fh:
            for run in run_list:
                record = {
                    "participant": run.participant,
                    "items": list(run.items),
                    "irts": None if run.irts is None else list(run.irts),
                }
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_scheme(path: str | Path) -> CategoryScheme:
    """Load a category scheme CSV: exemplar,categories with ';' separators.

    Duplicate exemplar rows are merged by union (warned)."""
    categories: list[str] = []
    cat_ids: dict[str, int] = {}
    membership: dict[str, tuple[int, ...]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if [h.strip() for h in header] != SCHEME_CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(SCHEME_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: expected exemplar,categories")
            exemplar = normalize_surface(row[0])
            if not exemplar:
                raise DataError(f"{path}:{lineno}: empty exemplar field")
            names = [normalize_surface(c) for c in row[1].split(";") if c.strip()]
            if not names:
                raise DataError(f"{path}:{lineno}: exemplar {exemplar!r} has no categories")
            ids = []
            for name in names:
                if name not in cat_ids:
                    cat_ids[name] = len(categories)
                    categories.append(name)
                if cat_ids[name] not in ids:
                    ids.append(cat_ids[name])
            if exemplar in membership:
                merged = list(membership[exemplar])
                extra = [i for i in ids if i not in merged]
                if extra:
                    logger.warning(
                        "%s:%d: duplicate rows for %r merged by union", path, lineno, exemplar
                    )
                membership[exemplar] = tuple(merged + extra)
            else:
                membership[exemplar] = tuple(ids)
    if not membership:
        raise DataError(f"{path}: no scheme rows found")
    return CategoryScheme(categories=tuple(categories), membership=membership)


def load_frequencies(path: str | Path) -> FrequencyTable:
    """Load raw exemplar counts (exemplar,count); normalization is internal."""
    counts: dict[str, float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if [h.strip() for h in header] != FREQ_CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(FREQ_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            exemplar = normalize_surface(row[0])
            if not exemplar:
                raise DataError(f"{path}:{lineno}: empty exemplar field")
            try:
                count = float(row[1])
            except (ValueError, IndexError):
                raise DataError(f"{path}:{lineno}: bad count") from None
            if count <= 0:
                raise DataError(f"{path}:{lineno}: count must be > 0")
            if exemplar in counts:
                logger.warning("%s:%d: duplicate counts for %r summed", path, lineno, exemplar)
            counts[exemplar] = counts.get(exemplar, 0.0) + count
    if not counts:
        raise DataError(f"{path}: no frequency rows found")
    return FrequencyTable.from_counts(counts)


# ---------------------------------------------------------------------------
# corpus statistics


def gold_frequencies(bank: RunBank) -> FrequencyTable:
    """Exemplar frequency of occurrence across all run tokens."""
    counts = Counter(item for run in bank.runs for item in run.items)
    return FrequencyTable.from_counts(counts)


def code_sequence(
    items: Sequence[str],
    scheme: CategoryScheme,
    coding: CategoryCoding = CategoryCoding.CHAINED,
) -> list[Hashable]:
    """Assign one category per exemplar.

    Chained coding keeps the previous exemplar's coded category when shared,
    otherwise falls back to the lowest-indexed category. Unmapped exemplars
    code as a singleton unknown token and break the chain.
    """
    coded: list[Hashable] = []
    prev: int | None = None
    for item in items:
        cats = scheme.membership.get(item)
        if cats is None:
            coded.append(("unmapped", item))
            prev = None
            continue
        if coding is CategoryCoding.FIRST_LISTED:
            code = cats[0]
        elif prev is not None and prev in cats:
            code = prev
        else:
            code = min(cats)
        coded.append(code)
        prev = code
    return coded


def category_transitions(
    bank: RunBank,
    scheme: CategoryScheme,
    coding: CategoryCoding = CategoryCoding.CHAINED,
) -> TransitionMatrix:
    """Estimate P(next category | current category) from coded run pairs.

    Unmapped exemplars are removed from a run before coding, so transitions
    bridge over them.
    """
    k = scheme.n_categories()
    counts = np.zeros((k, k), dtype=np.float64)
    unmapped: set[str] = set()
    for run in bank.runs:
        mapped_items = []
        for item in run.items:
            if scheme.is_mapped(item):
                mapped_items.append(item)
            else:
                unmapped.add(item)
        coded = code_sequence(mapped_items, scheme, coding)
        for a, b in zip(coded, coded[1:]):
            counts[a, b] += 1.0
    if unmapped:
        logger.warning(
            "%d exemplars without scheme membership skipped in transition "
            "estimation (e.g. %s)",
            len(unmapped),
            sorted(unmapped)[:5],
        )
    if counts.sum() == 0:
        raise DataError("no codable transitions in bank")
    probs = np.zeros_like(counts)
    row_sums = counts.sum(axis=1)
    nonzero = row_sums > 0
    probs[nonzero] = counts[nonzero] / row_sums[nonzero, None]
    return TransitionMatrix(probs=probs, categories=scheme.categories)


def count_switches(items: Sequence[str], scheme: CategoryScheme) -> int:
    """A switch is a consecutive pair with disjoint category memberships."""
    return sum(
        1
        for a, b in zip(items, items[1:])
        if scheme.member_set(a).isdisjoint(scheme.member_set(b))
    )


def run_statistics(
    runs: Sequence[Sequence[str]], scheme: CategoryScheme
) -> dict[str, float]:
    """Pooled average patch length and switch percentage over sequences.

    Unmapped exemplars count as their own singleton category (always a
    switch against anything else) and are warned about.
    """
    if not runs or any(len(r) == 0 for r in runs):
        raise DataError("run_statistics requires nonempty sequences")
    unmapped = {item for run in runs for item in run if not scheme.is_mapped(item)}
    if unmapped:
        logger.warning(
            "%d exemplars without scheme membership treated as singleton "
            "categories in run statistics",
            len(unmapped),
        )
    total_tokens = 0
    total_transitions = 0
    total_switches = 0
    total_segments = 0
    for run in runs:
        switches = count_switches(run, scheme)
        total_tokens += len(run)
        total_transitions += len(run) - 1
        total_switches += switches
        total_segments += switches + 1
    pct_switch = (
        100.0 * total_switches / total_transitions if total_transitions else 0.0
    )
    return {
        "avg_run_length": total_tokens / total_segments,
        "pct_switch": pct_switch,
    }

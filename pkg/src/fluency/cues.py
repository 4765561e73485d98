"""Next-exemplar distributions from cue-weighted semantic networks.

The production model scores each candidate as a product of three cues,

    score(x) = local(x)^beta_l * global(x)^beta_g * subcat(x)^beta_c

where local(x) is the network edge weight from the current exemplar,
global(x) the candidate's frequency under the global node, and subcat(x)
the transition probability between the coded categories of the current and
candidate exemplars (0^0 is taken as 1). Scores are normalized over the
candidate set so sampling and likelihoods are well defined. Externally
supplied distributions (a language-model pathway) plug into the same
provider protocol and can be reweighted by the global cue.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import (
    PROB_TOL,
    CategoryCoding,
    CategoryScheme,
    FluencyRun,
    FrequencyTable,
    TransitionMatrix,
    code_sequence,
    normalize_surface,
)
from .errors import DataError, DeadEndError
from .network import SemanticNetwork

logger = logging.getLogger(__name__)

DEFAULT_FLOOR_LOGP = math.log(1e-10)

# exemplars missing from the global table when reweighting get the minimum
# observed frequency scaled by this factor
GLOBAL_FLOOR_SCALE = 1e-2


@dataclass(frozen=True)
class CueWeights:
    """Exponents combining the local, global, and subcategory cues."""

    beta_local: float = 1.0
    beta_global: float = 1.0
    beta_subcat: float = 0.0

    def __post_init__(self):
        for name in ("beta_local", "beta_global", "beta_subcat"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise DataError(f"{name} must be finite and >= 0, got {value}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.beta_local, self.beta_global, self.beta_subcat)


class NextDistribution:
    """Normalized distribution over candidate next exemplars.

    Support entries are unique with strictly positive probability; the
    support order is deterministic (node id order for network models).
    """

    __slots__ = ("exemplars", "probs")

    def __init__(self, exemplars: Sequence[str], probs: np.ndarray, *,
                 _validate: bool = True):
        self.exemplars = tuple(exemplars)
        self.probs = np.asarray(probs, dtype=np.float64)
        if _validate:
            if len(self.exemplars) != self.probs.size or not self.exemplars:
                raise DataError("distribution support and probabilities disagree")
            if len(set(self.exemplars)) != len(self.exemplars):
                raise DataError("duplicate exemplars in distribution support")
            if (self.probs <= 0).any():
                raise DataError("distribution probabilities must be > 0")
            total = float(self.probs.sum())
            if abs(total - 1.0) > PROB_TOL:
                raise DataError(f"distribution sums to {total}, expected 1")

    @classmethod
    def from_scores(cls, exemplars: Sequence[str], scores: np.ndarray) -> "NextDistribution":
        scores = np.asarray(scores, dtype=np.float64)
        keep = scores > 0
        total = float(scores.sum())
        if not keep.any() or total <= 0:
            raise DeadEndError("all candidate scores are zero")
        exemplars = [e for e, k in zip(exemplars, keep) if k]
        return cls(exemplars, scores[keep] / total, _validate=False)

    def __len__(self) -> int:
        return len(self.exemplars)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.exemplars, self.probs.tolist()))

    def prob_of(self, exemplar: str) -> float:
        try:
            return float(self.probs[self.exemplars.index(exemplar)])
        except ValueError:
            return 0.0

    def argmax(self) -> str:
        """Most probable exemplar; ties resolve to the earliest support entry
        (lowest exemplar id for network models)."""
        return self.exemplars[int(np.argmax(self.probs))]

    def entropy(self) -> float:
        """Shannon entropy in nats."""
        return float(-(self.probs * np.log(self.probs)).sum())

    def sample(self, rng: np.random.Generator) -> str:
        return self.exemplars[int(rng.choice(self.probs.size, p=self.probs))]

    def restrict(self, excluded: set[str] | frozenset[str]) -> "NextDistribution":
        """Drop excluded exemplars and renormalize (ratios preserved)."""
        if not excluded:
            return self
        keep = np.asarray([e not in excluded for e in self.exemplars], dtype=bool)
        if not keep.any():
            raise DeadEndError("all support exemplars excluded")
        probs = self.probs[keep]
        exemplars = [e for e, k in zip(self.exemplars, keep) if k]
        return NextDistribution(exemplars, probs / probs.sum(), _validate=False)


class DistributionProvider(Protocol):
    """Anything that maps a produced prefix to a next-exemplar distribution."""

    def distribution(
        self, prefix: Sequence[str], excluded: frozenset[str] = frozenset()
    ) -> NextDistribution: ...


def _subcat_factor_matrix(
    trans: TransitionMatrix, scheme: CategoryScheme, lexicon
) -> np.ndarray:
    """factors[code, node] = max transition prob from `code` into any of the
    node's categories; unmapped nodes get 0 (no category evidence)."""
    k = len(trans.categories)
    n = len(lexicon)
    factors = np.zeros((k, n), dtype=np.float64)
    for node_id, surface in enumerate(lexicon):
        cats = scheme.membership.get(surface)
        if not cats:
            continue
        factors[:, node_id] = trans.probs[:, list(cats)].max(axis=1)
    return factors


def next_distribution(
    net: SemanticNetwork,
    weights: CueWeights,
    current: str | None = None,
    excluded: Sequence[str] | frozenset[str] = frozenset(),
    transitions: TransitionMatrix | None = None,
    scheme: CategoryScheme | None = None,
    coding: CategoryCoding = CategoryCoding.CHAINED,
    current_code: int | None = None,
    _subcat_factors: np.ndarray | None = None,
) -> NextDistribution:
    """Cue-product distribution over non-excluded network nodes.

    With no current exemplar (sequence start) only the global term applies.
    ``current_code`` lets sequence-aware callers supply the chained category
    of the current exemplar; otherwise it is coded in isolation.
    Raises DeadEndError when every candidate scores zero.
    """
    beta_l, beta_g, beta_c = weights.as_tuple()
    if beta_c > 0 and (transitions is None or scheme is None):
        raise DataError("beta_subcat > 0 requires a transition matrix and scheme")
    if beta_g > 0 and net.global_freq is None:
        raise DataError("beta_global > 0 but the network has no global node")

    n = net.n_nodes
    scores = np.ones(n, dtype=np.float64)
    if beta_g > 0:
        scores *= np.power(net.global_vector, beta_g)
    if current is not None:
        cur_id = net.lexicon.id_of(current)
        if beta_l > 0:
            scores = scores * np.power(net.weight_matrix[cur_id], beta_l)
        elif beta_l == 0:
            # 0^0 = 1: absent edges contribute a neutral factor
            pass
        if beta_c > 0:
            factors = _subcat_factors
            if factors is None:
                factors = _subcat_factor_matrix(transitions, scheme, net.lexicon)
            if current_code is None:
                coded = code_sequence([current], scheme, coding)[0]
                current_code = coded if isinstance(coded, int) else None
            if current_code is not None:
                scores = scores * np.power(factors[current_code], beta_c)
            # unmapped current: no category evidence, subcat term neutral

    if excluded:
        mask = np.asarray([s not in excluded for s in net.lexicon], dtype=bool)
        scores = scores * mask
    return NextDistribution.from_scores(net.lexicon.surfaces, scores)


class CueModel:
    """Network-backed provider with the dead-end fallback baked in.

    When every cue product is zero the model falls back to the global-only
    distribution, then to uniform over non-excluded nodes, so generation
    never halts mid-run while candidates remain.
    """

    def __init__(
        self,
        net: SemanticNetwork,
        weights: CueWeights,
        transitions: TransitionMatrix | None = None,
        scheme: CategoryScheme | None = None,
        coding: CategoryCoding = CategoryCoding.CHAINED,
    ):
        if weights.beta_subcat > 0 and (transitions is None or scheme is None):
            raise DataError("beta_subcat > 0 requires a transition matrix and scheme")
        if weights.beta_global > 0 and net.global_freq is None:
            raise DataError("beta_global > 0 but the network has no global node")
        self.net = net
        self.weights = weights
        self.transitions = transitions
        self.scheme = scheme
        self.coding = coding
        self._subcat_factors = (
            _subcat_factor_matrix(transitions, scheme, net.lexicon)
            if transitions is not None and scheme is not None
            else None
        )

    def _chained_code(self, prefix: Sequence[str]) -> int | None:
        if self.scheme is None or not prefix:
            return None
        coded = code_sequence(prefix, self.scheme, self.coding)[-1]
        return coded if isinstance(coded, int) else None

    def _fallback(self, excluded: frozenset[str]) -> NextDistribution:
        surfaces = self.net.lexicon.surfaces
        if self.net.global_freq is not None:
            scores = np.array(self.net.global_vector, copy=True)
        else:
            scores = np.ones(len(surfaces), dtype=np.float64)
        if excluded:
            scores *= np.asarray([s not in excluded for s in surfaces], dtype=bool)
        if scores.sum() <= 0:
            scores = np.asarray([s not in excluded for s in surfaces], dtype=np.float64)
        if scores.sum() <= 0:
            raise DeadEndError("every network node is excluded")
        return NextDistribution.from_scores(surfaces, scores)

    def distribution(
        self, prefix: Sequence[str], excluded: frozenset[str] = frozenset()
    ) -> NextDistribution:
        current = prefix[-1] if prefix else None
        if current is not None and current not in self.net.lexicon:
            # no state for this exemplar; likelihood callers floor this
            raise DeadEndError(f"exemplar not in network: {current!r}")
        current_code = (
            self._chained_code(prefix) if self.weights.beta_subcat > 0 else None
        )
        try:
            return next_distribution(
                self.net,
                self.weights,
                current=current,
                excluded=excluded,
                transitions=self.transitions,
                scheme=self.scheme,
                coding=self.coding,
                current_code=current_code,
                _subcat_factors=self._subcat_factors,
            )
        except DeadEndError:
            return self._fallback(excluded)


def reweight_external(
    dist: NextDistribution,
    global_freq: FrequencyTable | dict[str, float],
    beta_local: float,
    beta_global: float,
) -> NextDistribution:
    """Reweight an externally supplied distribution by the global cue:
    p'(x) proportional to p(x)^beta_l * global(x)^beta_g over dist support.

    Support exemplars missing from the frequency table get a floor of the
    minimum observed frequency scaled by GLOBAL_FLOOR_SCALE.
    """
    weights = global_freq.weights if isinstance(global_freq, FrequencyTable) else global_freq
    if not weights:
        raise DataError("empty global frequency table")
    floor = min(weights.values()) * GLOBAL_FLOOR_SCALE
    g = np.asarray([weights.get(e, floor) for e in dist.exemplars], dtype=np.float64)
    scores = np.power(dist.probs, beta_local) * np.power(g, beta_global)
    try:
        return NextDistribution.from_scores(dist.exemplars, scores)
    except DeadEndError:
        raise DataError("reweighted support is empty") from None


@dataclass(frozen=True)
class ExternalRecord:
    prefix_id: str
    prefix: tuple[str, ...]
    dist: NextDistribution


class ExternalDistributions:
    """Prefix-conditioned distributions loaded from a JSONL prediction file.

    Candidate masses may sum below 1 (truncated beam mass); they are
    renormalized on load and the shortfall is logged.
    """

    def __init__(self, records: Sequence[ExternalRecord]):
        if not records:
            raise DataError("no external distribution records")
        self.records = tuple(records)
        self.by_id = {r.prefix_id: r for r in self.records}
        self.by_prefix: dict[tuple[str, ...], ExternalRecord] = {}
        for r in self.records:
            self.by_prefix.setdefault(r.prefix, r)

    def __len__(self) -> int:
        return len(self.records)


def load_external(path: str | Path) -> ExternalDistributions:
    records: list[ExternalRecord] = []
    seen_ids: set[str] = set()
    total_shortfall = 0.0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                prefix_id = str(obj["prefix_id"])
                prefix = tuple(normalize_surface(str(s)) for s in obj["prefix"])
                candidates = obj["candidates"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad external record: {exc}") from None
            if prefix_id in seen_ids:
                raise DataError(f"{path}:{lineno}: duplicate prefix id {prefix_id!r}")
            seen_ids.add(prefix_id)
            if not candidates:
                logger.warning("%s:%d: record %r has no candidates, skipped",
                               path, lineno, prefix_id)
                continue
            merged: dict[str, float] = {}
            for cand in candidates:
                surface = normalize_surface(str(cand["exemplar"]))
                prob = float(cand["prob"])
                if not surface:
                    raise DataError(f"{path}:{lineno}: empty candidate exemplar")
                if not (0 < prob <= 1):
                    raise DataError(
                        f"{path}:{lineno}: candidate probability {prob} out of (0, 1]"
                    )
                merged[surface] = merged.get(surface, 0.0) + prob
            mass = sum(merged.values())
            if mass < 1.0 - PROB_TOL:
                total_shortfall += 1.0 - mass
            exemplars = sorted(merged)
            probs = np.asarray([merged[e] / mass for e in exemplars])
            records.append(
                ExternalRecord(prefix_id, prefix, NextDistribution(exemplars, probs))
            )
    if total_shortfall > 0:
        logger.info(
            "renormalized %d external records; total truncated mass %.4f",
            len(records),
            total_shortfall,
        )
    return ExternalDistributions(records)


class ExternalModel:
    """Provider over externally supplied distributions.

    Lookup is by exact prefix; when the exact prefix is absent (free
    generation wandering off recorded prefixes) the model pools all records
    sharing the longest matching suffix, which degrades gracefully toward a
    Markov approximation of the source model. Optional global-cue
    reweighting applies before exclusion.
    """

    def __init__(
        self,
        dists: ExternalDistributions,
        global_freq: FrequencyTable | dict[str, float] | None = None,
        beta_local: float = 1.0,
        beta_global: float = 0.0,
    ):
        self.dists = dists
        self.global_freq = global_freq
        self.beta_local = beta_local
        self.beta_global = beta_global
        self._max_prefix_len = max(len(r.prefix) for r in dists.records)
        if beta_global > 0 and global_freq is None:
            raise DataError("beta_global > 0 requires a global frequency table")

    def _lookup(self, prefix: tuple[str, ...]) -> list[ExternalRecord]:
        exact = self.dists.by_prefix.get(prefix)
        if exact is not None:
            return [exact]
        for k in range(min(len(prefix), self._max_prefix_len), -1, -1):
            suffix = prefix[len(prefix) - k:]
            matches = [
                r
                for r in self.dists.records
                if len(r.prefix) >= k and r.prefix[len(r.prefix) - k:] == suffix
            ]
            if matches:
                return matches
        return []

    def distribution(
        self, prefix: Sequence[str], excluded: frozenset[str] = frozenset()
    ) -> NextDistribution:
        matches = self._lookup(tuple(prefix))
        if not matches:
            raise DeadEndError(f"no external record matches prefix {tuple(prefix)!r}")
        if len(matches) == 1:
            dist = matches[0].dist
        else:
            pooled: dict[str, float] = {}
            for record in sorted(matches, key=lambda r: r.prefix_id):
                for e, p in zip(record.dist.exemplars, record.dist.probs):
                    pooled[e] = pooled.get(e, 0.0) + float(p)
            exemplars = sorted(pooled)
            probs = np.asarray([pooled[e] for e in exemplars])
            dist = NextDistribution(exemplars, probs / probs.sum(), _validate=False)
        if self.beta_global > 0 or self.beta_local != 1.0:
            dist = reweight_external(
                dist, self.global_freq, self.beta_local, self.beta_global
            )
        return dist.restrict(excluded) if excluded else dist


def sequence_loglik(
    model: DistributionProvider,
    run: FluencyRun | Sequence[str],
    floor_logp: float = DEFAULT_FLOOR_LOGP,
    exclude_repeats: bool = True,
) -> float:
    """Sum of log P(x_{n+1} | context) over a run's transitions.

    Transitions whose realized item falls outside the model's support (or is
    excluded as a repeat) contribute ``floor_logp``.
    """
    items = run.items if isinstance(run, FluencyRun) else tuple(run)
    if len(items) < 2:
        raise DataError("sequence_loglik needs a run of at least 2 items")
    total = 0.0
    for n in range(1, len(items)):
        prefix = items[:n]
        excluded = frozenset(prefix) if exclude_repeats else frozenset()
        try:
            dist = model.distribution(prefix, excluded)
        except DeadEndError:
            total += floor_logp
            continue
        p = dist.prob_of(items[n])
        total += math.log(p) if p > 0 else floor_logp
    return total


def distribution_switch_mass(
    dist: NextDistribution, current: str, scheme: CategoryScheme
) -> float:
    """Probability mass on candidates whose categories are disjoint from the
    current exemplar's."""
    current_set = scheme.member_set(current)
    return float(
        sum(
            p
            for e, p in zip(dist.exemplars, dist.probs)
            if current_set.isdisjoint(scheme.member_set(e))
        )
    )


def switch_mass(
    model: DistributionProvider,
    current: str,
    scheme: CategoryScheme,
    excluded: frozenset[str] = frozenset(),
) -> float:
    """Total probability of switching out of the current exemplar's
    categories under the model's next distribution."""
    dist = model.distribution((current,), excluded)
    return distribution_switch_mass(dist, current, scheme)

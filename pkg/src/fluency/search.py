"""Sequence generation: greedy, beam, temperature sampling, random walks.

All searches consume the same provider protocol (prefix -> next
distribution). Randomized searches derive an independent seeded stream per
sequence from (master seed, sequence index), so banks of generations are
reproducible regardless of worker scheduling.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import RunBank
from .cues import DistributionProvider, NextDistribution
from .errors import DataError, DeadEndError
from .network import SemanticNetwork

logger = logging.getLogger(__name__)

WALK_STEP_CAP_FACTOR = 200


@dataclass(frozen=True)
class FixedLength:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DataError("fixed length must be >= 1")

    def draw(self, rng: np.random.Generator) -> int:
        return self.n


@dataclass(frozen=True)
class EmpiricalLength:
    """Target lengths drawn from an observed run-length distribution."""

    lengths: tuple[int, ...]

    def __post_init__(self):
        if not self.lengths or any(n < 1 for n in self.lengths):
            raise DataError("empirical lengths must be nonempty and >= 1")

    @classmethod
    def from_bank(cls, bank: RunBank) -> "EmpiricalLength":
        return cls(bank.lengths())

    def draw(self, rng: np.random.Generator) -> int:
        return int(self.lengths[int(rng.integers(len(self.lengths)))])


LengthPolicy = FixedLength | EmpiricalLength


@dataclass(frozen=True)
class GenerationConfig:
    length_policy: LengthPolicy = FixedLength(10)
    seed: int = 0
    temperature: float = 1.0
    beam_width: int = 1
    exclude_repeats: bool = True

    def __post_init__(self):
        if self.beam_width < 1:
            raise DataError("beam_width must be >= 1")
        if not (self.temperature > 0):
            raise DataError("temperature must be > 0 (math.inf for uniform)")


def sequence_rng(seed: int, index: int) -> np.random.Generator:
    """Independent per-sequence stream derived from the master seed."""
    return np.random.default_rng([seed, index])


def _target_length(config: GenerationConfig, index: int) -> int:
    return config.length_policy.draw(sequence_rng(config.seed, index))


def _excluded(config: GenerationConfig, prefix: tuple[str, ...]) -> frozenset[str]:
    return frozenset(prefix) if config.exclude_repeats else frozenset()


def generate_greedy(
    model: DistributionProvider, config: GenerationConfig, index: int = 0
) -> tuple[str, ...]:
    """Pick the most probable exemplar at every step (ties break to the
    lowest exemplar id). The seed only influences the target length."""
    length = _target_length(config, index)
    seq: tuple[str, ...] = ()
    while len(seq) < length:
        try:
            dist = model.distribution(seq, _excluded(config, seq))
        except DeadEndError as exc:
            raise DeadEndError(str(exc), partial=seq) from None
        seq = seq + (dist.argmax(),)
    return seq


def generate_beam(
    model: DistributionProvider, config: GenerationConfig, index: int = 0
) -> tuple[str, ...]:
    """Beam search over joint log-probability (start term included).

    Width 1 reproduces greedy exactly; ties at every stage resolve in
    support order so results are deterministic.
    """
    length = _target_length(config, index)
    beams: list[tuple[float, tuple[str, ...]]] = [(0.0, ())]
    for _step in range(length):
        candidates: list[tuple[float, tuple[str, ...]]] = []
        for logp, seq in beams:
            try:
                dist = model.distribution(seq, _excluded(config, seq))
            except DeadEndError:
                continue
            for exemplar, p in zip(dist.exemplars, dist.probs):
                candidates.append((logp + math.log(p), seq + (exemplar,)))
        if not candidates:
            best = beams[0][1] if beams else ()
            raise DeadEndError("all beams dead-ended", partial=best)
        # stable sort keeps support (id) order among equal log-probabilities
        candidates.sort(key=lambda c: -c[0])
        beams = candidates[: config.beam_width]
    return beams[0][1]


def joint_logprob(
    model: DistributionProvider, seq: Sequence[str], exclude_repeats: bool = True
) -> float:
    """Joint log-probability of a sequence including its start term."""
    total = 0.0
    prefix: tuple[str, ...] = ()
    for item in seq:
        excluded = frozenset(prefix) if exclude_repeats else frozenset()
        dist = model.distribution(prefix, excluded)
        p = dist.prob_of(item)
        if p <= 0:
            return -math.inf
        total += math.log(p)
        prefix = prefix + (item,)
    return total


def _apply_temperature(dist: NextDistribution, tau: float) -> np.ndarray:
    if math.isinf(tau):
        return np.full(len(dist), 1.0 / len(dist))
    # p^(1/tau) computed in log space so extreme temperatures stay finite
    logp = np.log(dist.probs)
    scaled = (logp - logp.max()) / tau
    weights = np.exp(scaled)
    return weights / weights.sum()


def generate_sampled(
    model: DistributionProvider, config: GenerationConfig, index: int = 0
) -> tuple[str, ...]:
    """Sample each step from p_i^(1/tau) renormalized; tau=inf is uniform
    over the support."""
    rng = sequence_rng(config.seed, index)
    length = config.length_policy.draw(rng)
    seq: tuple[str, ...] = ()
    while len(seq) < length:
        try:
            dist = model.distribution(seq, _excluded(config, seq))
        except DeadEndError as exc:
            raise DeadEndError(str(exc), partial=seq) from None
        probs = _apply_temperature(dist, config.temperature)
        choice = dist.exemplars[int(rng.choice(len(dist), p=probs))]
        seq = seq + (choice,)
    return seq


@dataclass(frozen=True)
class RawWalk:
    """Uncensored node sequence of a random walk (repeats allowed)."""

    steps: tuple[str, ...]
    truncated: bool = False


def random_walk(
    net: SemanticNetwork,
    start: str,
    steps: int,
    seed: int | np.random.Generator = 0,
) -> RawWalk:
    """Walk of ``steps`` visits starting at ``start``, each move uniform over
    outgoing edges (weights ignored). Truncates with a flag at a node with
    no outgoing edge."""
    if steps < 1:
        raise DataError("walk needs steps >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    current = net.lexicon.id_of(start)
    visited = [current]
    while len(visited) < steps:
        out_ids, _weights = net.out_edges(current)
        if out_ids.size == 0:
            logger.warning(
                "random walk stuck at %r with no outgoing edges; truncated",
                net.lexicon.surface_of(current),
            )
            return RawWalk(
                steps=tuple(net.lexicon.surface_of(i) for i in visited),
                truncated=True,
            )
        current = int(out_ids[int(rng.integers(out_ids.size))])
        visited.append(current)
    return RawWalk(steps=tuple(net.lexicon.surface_of(i) for i in visited))


def censor_repeats(walk: RawWalk | Sequence[str]) -> tuple[str, ...]:
    """First occurrences in visit order."""
    steps = walk.steps if isinstance(walk, RawWalk) else tuple(walk)
    if not steps:
        raise DataError("cannot censor an empty walk")
    seen: set[str] = set()
    out: list[str] = []
    for item in steps:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return tuple(out)


def walk_irt(walk: RawWalk | Sequence[str]) -> dict[str, int]:
    """First-revisit cycle length per exemplar: index of the second visit
    minus index of the first. Exemplars visited once are absent."""
    steps = walk.steps if isinstance(walk, RawWalk) else tuple(walk)
    if not steps:
        raise DataError("cannot compute IRTs of an empty walk")
    first: dict[str, int] = {}
    irts: dict[str, int] = {}
    for idx, item in enumerate(steps):
        if item not in first:
            first[item] = idx
        elif item not in irts:
            irts[item] = idx - first[item]
    return irts


def generate_walk(
    net: SemanticNetwork, config: GenerationConfig, index: int = 0
) -> tuple[str, ...]:
    """Random-walk generation: walk until the target number of unique items
    (or a hard step cap), censor repeats, truncate. The start node is drawn
    uniformly, matching the walk's indifference to weights."""
    rng = sequence_rng(config.seed, index)
    length = config.length_policy.draw(rng)
    length = min(length, net.n_nodes)
    start = net.lexicon.surface_of(int(rng.integers(net.n_nodes)))
    cap = WALK_STEP_CAP_FACTOR * length
    walk_steps: list[str] = [start]
    unique: set[str] = {start}
    current = net.lexicon.id_of(start)
    while len(unique) < length and len(walk_steps) < cap:
        out_ids, _weights = net.out_edges(current)
        if out_ids.size == 0:
            break
        current = int(out_ids[int(rng.integers(out_ids.size))])
        surface = net.lexicon.surface_of(current)
        walk_steps.append(surface)
        unique.add(surface)
    return censor_repeats(RawWalk(tuple(walk_steps)))[:length]


def generate_bank(
    generator,
    config: GenerationConfig,
    n: int,
    jobs: int = 1,
) -> list[tuple[str, ...]]:
    """Generate ``n`` sequences with per-index seeding, ordered by index.

    ``generator`` is a callable (config, index) -> sequence. Mid-run dead
    ends fall back to the partial sequence with a warning.
    """

    def one(index: int) -> tuple[str, ...]:
        try:
            return generator(config, index)
        except DeadEndError as exc:
            if exc.partial:
                logger.warning("sequence %d truncated at a dead end", index)
                return exc.partial
            raise

    if jobs <= 1:
        return [one(i) for i in range(n)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, range(n)))

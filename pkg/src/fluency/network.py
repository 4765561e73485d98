"""Semantic network construction.

Networks come from two sources: pairwise cosine similarity between word
vectors (weighted, pruned below a threshold) or free-association norms
(unweighted). Either kind can carry a distinguished global node holding a
frequency distribution over exemplars. Networks are immutable once built.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import FrequencyTable, Lexicon, normalize_surface
from .errors import DataError

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.05

NORMS_CSV_HEADER = ["cue", "target", "strength"]


@dataclass(frozen=True)
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray]


@dataclass(frozen=True)
class AssociationNorms:
    """Directed cue -> target pairs; strengths are kept but unused."""

    edges: tuple[tuple[str, str, float | None], ...]


@dataclass(frozen=True)
class SemanticNetwork:
    """Directed weighted graph over exemplars.

    ``adjacency[i]`` is a pair of parallel arrays (neighbor ids sorted
    ascending, weights in (0, 1]). ``global_freq`` is the distribution held
    by the distinguished global node, normalized over network nodes.
    """

    lexicon: Lexicon
    adjacency: tuple[tuple[np.ndarray, np.ndarray], ...]
    epsilon: float
    global_freq: dict[str, float] | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.lexicon)

    def out_edges(self, node_id: int) -> tuple[np.ndarray, np.ndarray]:
        return self.adjacency[node_id]

    @cached_property
    def weight_matrix(self) -> np.ndarray:
        w = np.zeros((self.n_nodes, self.n_nodes), dtype=np.float64)
        for i, (ids, weights) in enumerate(self.adjacency):
            w[i, ids] = weights
        w.setflags(write=False)
        return w

    @cached_property
    def global_vector(self) -> np.ndarray | None:
        if self.global_freq is None:
            return None
        vec = np.zeros(self.n_nodes, dtype=np.float64)
        for surface, prob in self.global_freq.items():
            vec[self.lexicon.id_of(surface)] = prob
        vec.setflags(write=False)
        return vec


def network_from_weights(
    surfaces: Sequence[str],
    weights: np.ndarray,
    epsilon: float = 0.0,
    global_freq: dict[str, float] | None = None,
) -> SemanticNetwork:
    """Build a network directly from a dense weight matrix (synthetic
    instances and snapshots); zero entries mean no edge."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(surfaces), len(surfaces)):
        raise DataError("weight matrix shape does not match surfaces")
    if (weights < 0).any() or (weights > 1).any():
        raise DataError("edge weights must lie in [0, 1]")
    if np.diagonal(weights).any():
        raise DataError("self-edges are not allowed")
    net = SemanticNetwork(
        lexicon=Lexicon(surfaces),
        adjacency=_adjacency_from_matrix(weights),
        epsilon=float(epsilon),
    )
    if global_freq is not None:
        net = attach_global(net, FrequencyTable(dict(global_freq)))
    return net


def load_embeddings(path: str | Path, vocab: set[str] | None = None) -> EmbeddingTable:
    """Read whitespace-separated `token v1 .. vD` vectors.

    ``vocab``, when given, restricts loading to the listed single words
    (callers pass the constituent words of their lexicon). Zero-norm rows
    are rejected with a warning.
    """
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                if not line.strip():
                    continue
                raise DataError(f"{path}:{lineno}: expected token followed by values")
            token = normalize_surface(parts[0])
            if vocab is not None and token not in vocab:
                continue
            try:
                vec = np.asarray([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric vector value") from None
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise DataError(
                    f"{path}:{lineno}: vector length {vec.size}, expected {dim}"
                )
            if not np.linalg.norm(vec) > 0:
                logger.warning("%s:%d: zero vector for %r rejected", path, lineno, token)
                continue
            vectors[token] = vec
    if not vectors:
        raise DataError(f"{path}: no usable vectors loaded")
    return EmbeddingTable(dim=int(dim), vectors=vectors)


def load_norms(path: str | Path) -> AssociationNorms:
    """Read cue,target,strength CSV; strength optional. Self-edges dropped,
    duplicate pairs merged keeping the max strength."""
    merged: dict[tuple[str, str], float | None] = {}
    with open(path, newline="") as fh:
        import csv

        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if [h.strip() for h in header][:2] != NORMS_CSV_HEADER[:2]:
            raise DataError(f"{path}: expected header cue,target[,strength]")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: expected cue,target")
            cue = normalize_surface(row[0])
            target = normalize_surface(row[1])
            if not cue or not target:
                raise DataError(f"{path}:{lineno}: empty cue or target")
            if cue == target:
                logger.warning("%s:%d: self-edge %r dropped", path, lineno, cue)
                continue
            strength: float | None = None
            if len(row) > 2 and row[2].strip():
                try:
                    strength = float(row[2])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad strength {row[2]!r}") from None
            key = (cue, target)
            if key in merged:
                old = merged[key]
                if strength is not None and (old is None or strength > old):
                    merged[key] = strength
            else:
                merged[key] = strength
    if not merged:
        raise DataError(f"{path}: no association edges found")
    edges = tuple((c, t, s) for (c, t), s in merged.items())
    return AssociationNorms(edges=edges)


def resolve_vectors(
    emb: EmbeddingTable, lexicon: Lexicon
) -> tuple[list[str], np.ndarray, list[str]]:
    """Map exemplars to vectors; multiword exemplars take the mean of their
    word vectors. Returns (kept surfaces, matrix, dropped surfaces)."""
    kept: list[str] = []
    rows: list[np.ndarray] = []
    dropped: list[str] = []
    for surface in lexicon:
        words = surface.split(" ")
        word_vecs = [emb.vectors.get(w) for w in words]
        if any(v is None for v in word_vecs):
            dropped.append(surface)
            continue
        vec = word_vecs[0] if len(word_vecs) == 1 else np.mean(word_vecs, axis=0)
        if not np.linalg.norm(vec) > 0:
            dropped.append(surface)
            continue
        kept.append(surface)
        rows.append(vec)
    if not kept:
        raise DataError("no lexicon exemplar has a resolvable vector")
    return kept, np.vstack(rows), dropped


def _adjacency_from_matrix(weights: np.ndarray) -> tuple:
    adjacency = []
    for i in range(weights.shape[0]):
        ids = np.nonzero(weights[i])[0].astype(np.int64)
        row_w = weights[i, ids].astype(np.float64)
        ids.setflags(write=False)
        row_w.setflags(write=False)
        adjacency.append((ids, row_w))
    return tuple(adjacency)


def build_similarity_network(
    emb: EmbeddingTable, lexicon: Lexicon, epsilon: float = DEFAULT_EPSILON
) -> SemanticNetwork:
    """All-pairs cosine similarity graph with edges below epsilon pruned.

    Negative cosines are clamped to zero (pruned); weights both directions
    are equal. Exemplars with no resolvable vector are dropped with a
    warning listing them.
    """
    if not (0 <= epsilon < 1):
        raise DataError(f"epsilon must be in [0, 1), got {epsilon}")
    kept, matrix, dropped = resolve_vectors(emb, lexicon)
    if dropped:
        logger.warning(
            "%d exemplars dropped (no vector): %s",
            len(dropped),
            ", ".join(dropped[:10]) + ("..." if len(dropped) > 10 else ""),
        )
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    unit = matrix / norms
    cos = unit @ unit.T
    np.clip(cos, 0.0, 1.0, out=cos)
    np.fill_diagonal(cos, 0.0)
    cos[cos < max(epsilon, 0.0)] = 0.0
    return SemanticNetwork(
        lexicon=Lexicon(kept),
        adjacency=_adjacency_from_matrix(cos),
        epsilon=float(epsilon),
    )


def build_association_network(
    norms: AssociationNorms, lexicon: Lexicon
) -> SemanticNetwork:
    """Directed unweighted graph restricted to lexicon tokens; every retained
    edge has weight 1 and no pruning threshold applies."""
    n = len(lexicon)
    weights = np.zeros((n, n), dtype=np.float64)
    hit = False
    for cue, target, _strength in norms.edges:
        i = lexicon.get_id(cue)
        j = lexicon.get_id(target)
        if i is None or j is None:
            continue
        weights[i, j] = 1.0
        hit = True
    if not hit:
        raise DataError("association norms share no edges with the lexicon")
    return SemanticNetwork(
        lexicon=Lexicon(list(lexicon)),
        adjacency=_adjacency_from_matrix(weights),
        epsilon=0.0,
    )


def attach_global(net: SemanticNetwork, freq: FrequencyTable) -> SemanticNetwork:
    """Attach the global node: freq restricted to network nodes and
    renormalized. Entries for non-nodes are dropped with a warning."""
    covered = {s: w for s, w in freq.weights.items() if s in net.lexicon}
    dropped = len(freq.weights) - len(covered)
    if dropped:
        logger.warning("%d frequency entries not in network dropped", dropped)
    if not covered:
        raise DataError("frequency table covers no network node")
    total = sum(covered.values())
    global_freq = {s: w / total for s, w in covered.items()}
    return replace(net, global_freq=global_freq)


def save_network(net: SemanticNetwork, path: str | Path) -> None:
    """Write a JSON snapshot that round-trips bit-exactly."""
    edges = []
    for src, (ids, weights) in enumerate(net.adjacency):
        for dst, w in zip(ids.tolist(), weights.tolist()):
            edges.append([src, dst, w])
    snapshot = {
        "epsilon": net.epsilon,
        "nodes": list(net.lexicon),
        "edges": edges,
        "global": net.global_freq,
    }
    with open(path, "w") as fh:
        json.dump(snapshot, fh, sort_keys=True)
        fh.write("\n")


def load_network(path: str | Path) -> SemanticNetwork:
    with open(path) as fh:
        try:
            snapshot = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: bad network snapshot: {exc}") from None
    try:
        nodes = snapshot["nodes"]
        edges = snapshot["edges"]
        epsilon = float(snapshot["epsilon"])
        global_freq = snapshot.get("global")
    except (KeyError, TypeError):
        raise DataError(f"{path}: snapshot missing epsilon/nodes/edges") from None
    n = len(nodes)
    weights = np.zeros((n, n), dtype=np.float64)
    for src, dst, w in edges:
        weights[src, dst] = w
    net = SemanticNetwork(
        lexicon=Lexicon(nodes),
        adjacency=_adjacency_from_matrix(weights),
        epsilon=epsilon,
        global_freq=dict(global_freq) if global_freq is not None else None,
    )
    return net

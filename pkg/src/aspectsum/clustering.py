"""DBSCAN over cosine distance, plus the two places the pipeline uses it."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import Argument, AspectTaxonomy, EvidenceCluster, aspect_symbol
from .embedding import EmbeddingProvider, cosine_distance_matrix, embed_batch

NOISE = -1

EPS_ASPECT = 0.5
EPS_EVIDENCE = 0.21


@dataclass(frozen=True)
class ClusteringConfig:
    eps: float
    min_samples: int = 1

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")


@dataclass(frozen=True)
class ClusterLabeling:
    labels: tuple[int, ...]

    @property
    def n_clusters(self) -> int:
        return len({lab for lab in self.labels if lab != NOISE})

    def groups(self) -> list[list[int]]:
        """Member indices per cluster id, noise excluded."""
        out: list[list[int]] = [[] for _ in range(self.n_clusters)]
        for i, lab in enumerate(self.labels):
            if lab != NOISE:
                out[lab].append(i)
        return out


def dbscan_distances(dist: np.ndarray, config: ClusteringConfig) -> ClusterLabeling:
    """DBSCAN given a precomputed distance matrix.

    A point is core when at least ``min_samples`` points (itself included)
    lie within ``eps`` (inclusive). Cluster ids are assigned in order of the
    lowest-index member, so the output does not depend on traversal details.
    """
    n = dist.shape[0]
    if n == 0:
        return ClusterLabeling(())
    neighbors = [np.flatnonzero(row <= config.eps) for row in dist]
    core = np.array([len(nb) >= config.min_samples for nb in neighbors])

    labels = np.full(n, NOISE)
    next_id = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = next_id
        queue = deque([i])
        while queue:
            p = queue.popleft()
            for q in neighbors[p]:
                if labels[q] == NOISE:
                    labels[q] = next_id
                    if core[q]:
                        queue.append(q)
        next_id += 1

    # renumber by first appearance; border points may otherwise carry a later core's id first
    remap: dict[int, int] = {}
    out = []
    for lab in labels.tolist():
        if lab == NOISE:
            out.append(NOISE)
            continue
        if lab not in remap:
            remap[lab] = len(remap)
        out.append(remap[lab])
    return ClusterLabeling(tuple(out))


def dbscan(points: np.ndarray | Sequence[np.ndarray], config: ClusteringConfig) -> ClusterLabeling:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return ClusterLabeling(())
    return dbscan_distances(cosine_distance_matrix(pts), config)


def _labels_with_singleton_noise(labeling: ClusterLabeling) -> list[int]:
    """Turn each noise point into its own trailing cluster."""
    labels = list(labeling.labels)
    next_id = labeling.n_clusters
    for i, lab in enumerate(labels):
        if lab == NOISE:
            labels[i] = next_id
            next_id += 1
    return labels


def cluster_aspects(
    taxonomy: AspectTaxonomy,
    provider: EmbeddingProvider,
    eps: float = EPS_ASPECT,
    min_samples: int = 1,
) -> AspectTaxonomy:
    """Merge raw aspect strings whose embeddings fall within ``eps``.

    Expects an unclustered taxonomy (one symbol per raw string). Each cluster
    gets one symbol whose label is its most frequent raw string, ties going to
    the lexicographically smallest.
    """
    if not len(taxonomy):
        raise ValueError("taxonomy has no aspects to cluster")
    if not taxonomy.is_identity():
        raise ValueError("cluster_aspects expects one symbol per raw aspect")
    raws = list(taxonomy.aspects)
    raw_counts = {raw: taxonomy.count_of(taxonomy.symbol_of[raw]) for raw in raws}

    labeling = dbscan(embed_batch(raws, provider), ClusteringConfig(eps, min_samples))
    labels = _labels_with_singleton_noise(labeling)

    n_groups = max(labels) + 1
    members: list[list[str]] = [[] for _ in range(n_groups)]
    for raw, lab in zip(raws, labels):
        members[lab].append(raw)

    aspects = []
    symbol_of: dict[str, str] = {}
    counts: dict[str, int] = {}
    for idx, group in enumerate(members):
        label = min(group, key=lambda r: (-raw_counts[r], r))
        sym = aspect_symbol(idx)
        aspects.append(label)
        counts[sym] = sum(raw_counts[r] for r in group)
        for raw in group:
            symbol_of[raw] = sym
    return AspectTaxonomy(tuple(aspects), symbol_of, counts)


def assign_aspects(arguments: Sequence[Argument], taxonomy: AspectTaxonomy) -> list[Argument]:
    out = []
    for arg in arguments:
        try:
            sym = taxonomy.symbol_of[arg.aspect_raw]
        except KeyError:
            raise ValueError(f"aspect {arg.aspect_raw!r} is not in the taxonomy") from None
        out.append(Argument(arg.review_id, arg.aspect_raw, arg.sentiment, arg.evidence, sym, arg.original_evidence))
    return out


def cluster_evidence(
    arguments: Sequence[Argument],
    provider: EmbeddingProvider,
    eps: float = EPS_EVIDENCE,
    min_samples: int = 1,
) -> list[EvidenceCluster]:
    """Group arguments whose evidence embeddings fall within ``eps``.

    Members keep input order; noise points (only possible with
    ``min_samples > 1``) become singleton clusters.
    """
    if not arguments:
        return []
    if any(a.aspect_id is None for a in arguments):
        raise ValueError("arguments need aspect_id before evidence clustering")
    vectors = embed_batch([a.evidence for a in arguments], provider)
    labels = _labels_with_singleton_noise(dbscan(vectors, ClusteringConfig(eps, min_samples)))
    groups: dict[int, list[Argument]] = {}
    for arg, lab in zip(arguments, labels):
        groups.setdefault(lab, []).append(arg)
    return [EvidenceCluster(cid, tuple(groups[cid])) for cid in sorted(groups)]

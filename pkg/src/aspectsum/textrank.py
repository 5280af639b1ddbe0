"""Representative-evidence selection with weighted TextRank."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import Argument, EvidenceCluster
from .embedding import EmbeddingProvider, embed_batch

log = logging.getLogger(__name__)

# scores within this of the maximum count as tied; resolved by member order
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class RankConfig:
    damping: float = 0.85
    tolerance: float = 1e-6
    max_iter: int = 200

    def __post_init__(self):
        if not 0 < self.damping < 1:
            raise ValueError("damping must be in (0, 1)")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class SimilarityGraph:
    texts: tuple[str, ...]
    embeddings: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.texts)


@dataclass(frozen=True)
class RankResult:
    scores: np.ndarray
    converged: bool
    iterations: int


def similarity_weights(embeddings: np.ndarray) -> np.ndarray:
    """Complete-graph weights: cosine similarity clamped at 0, zero diagonal."""
    w = np.clip(embeddings @ embeddings.T, 0.0, 1.0)
    w = (w + w.T) / 2
    np.fill_diagonal(w, 0.0)
    return w


def build_similarity_graph(texts: Sequence[str], provider: EmbeddingProvider) -> SimilarityGraph:
    if not texts:
        raise ValueError("similarity graph needs at least one text")
    emb = embed_batch(texts, provider)
    return SimilarityGraph(tuple(texts), emb, similarity_weights(emb))


def transition_matrix(weights: np.ndarray) -> np.ndarray:
    """``M[i, j]`` is the share of node j's score passed to node i.

    Nodes without outgoing weight spread evenly over all other nodes.
    """
    w = np.asarray(weights, dtype=float)
    n = w.shape[0]
    out = w.sum(axis=1)
    m = np.zeros((n, n))
    for j in range(n):
        if out[j] > 0:
            m[:, j] = w[j, :] / out[j]
        elif n > 1:
            m[:, j] = 1.0 / (n - 1)
            m[j, j] = 0.0
    return m


def weighted_pagerank(graph: SimilarityGraph | np.ndarray, config: RankConfig = RankConfig()) -> RankResult:
    """Iterate ``s_i = (1 - d) + d * sum_j M[i, j] s_j`` from all ones.

    Stops when the max-norm change drops below ``config.tolerance``. Scores
    are the unnormalised TextRank form, so they do not sum to one.
    """
    weights = graph.weights if isinstance(graph, SimilarityGraph) else np.asarray(graph, dtype=float)
    n = weights.shape[0]
    if n == 0:
        raise ValueError("graph is empty")
    m = transition_matrix(weights)
    d = config.damping
    scores = np.ones(n)
    for it in range(1, config.max_iter + 1):
        new = (1.0 - d) + d * (m @ scores)
        delta = np.max(np.abs(new - scores))
        scores = new
        if delta < config.tolerance:
            return RankResult(scores, True, it)
    log.warning("pagerank did not converge in %d iterations", config.max_iter)
    return RankResult(scores, False, config.max_iter)


def rank_cluster(
    cluster: EvidenceCluster, provider: EmbeddingProvider, config: RankConfig = RankConfig()
) -> tuple[str, RankResult | None]:
    evidence = [m.source_evidence for m in cluster.members]
    if len(evidence) == 1:
        return evidence[0], None
    result = weighted_pagerank(build_similarity_graph(evidence, provider), config)
    best = float(result.scores.max())
    idx = int(np.flatnonzero(result.scores >= best - TIE_TOLERANCE)[0])
    return evidence[idx], result


def select_representative(
    cluster: EvidenceCluster, provider: EmbeddingProvider, config: RankConfig = RankConfig()
) -> str:
    """Highest-ranked member evidence; earliest member wins ties."""
    return rank_cluster(cluster, provider, config)[0]


def rewrite_cluster(cluster: EvidenceCluster) -> EvidenceCluster:
    """Replace every member's evidence with the representative, keeping the original."""
    if cluster.representative is None:
        raise ValueError(f"cluster {cluster.cluster_id} has no representative")
    members = tuple(
        Argument(
            m.review_id,
            m.aspect_raw,
            m.sentiment,
            cluster.representative,
            m.aspect_id,
            m.source_evidence,
        )
        for m in cluster.members
    )
    return cluster.with_(members=members)


def choose_representatives(
    clusters: Sequence[EvidenceCluster], provider: EmbeddingProvider, config: RankConfig = RankConfig()
) -> tuple[list[EvidenceCluster], list[int]]:
    """Pick and substitute representatives for every cluster.

    Returns rewritten clusters and the ids whose ranking hit ``max_iter``.
    """
    out = []
    unconverged = []
    for cluster in clusters:
        rep, result = rank_cluster(cluster, provider, config)
        if result is not None and not result.converged:
            unconverged.append(cluster.cluster_id)
        out.append(rewrite_cluster(cluster.with_(representative=rep)))
    return out, unconverged

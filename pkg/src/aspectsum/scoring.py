"""Support/contradiction relations, argument and cluster scores, summary assembly."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .domain import EvidenceCluster, Sentiment, Summary, SummaryItem

log = logging.getLogger(__name__)

DEFAULT_TOP_N = 8


class RelationKind(str, Enum):
    SUPPORT = "support"
    CONTRADICTION = "contradiction"


@dataclass(frozen=True)
class RelationEdge:
    source: int
    target: int
    kind: RelationKind


def polarity(s: Sentiment) -> float:
    return 1.0 if s is Sentiment.GOOD else -1.0


def _require_aspects(cluster: EvidenceCluster) -> None:
    if any(m.aspect_id is None for m in cluster.members):
        raise ValueError(f"cluster {cluster.cluster_id} has members without aspect_id")


def build_relations(cluster: EvidenceCluster) -> list[RelationEdge]:
    """One edge per unordered pair of members sharing an aspect."""
    _require_aspects(cluster)
    members = cluster.members
    edges = []
    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            if members[i].aspect_id != members[j].aspect_id:
                continue
            kind = (
                RelationKind.SUPPORT
                if members[i].sentiment == members[j].sentiment
                else RelationKind.CONTRADICTION
            )
            edges.append(RelationEdge(i, j, kind))
    return edges


def argument_score(i: int, cluster: EvidenceCluster) -> int:
    """Sum of polarity products between member ``i`` and its same-aspect peers."""
    _require_aspects(cluster)
    me = cluster.members[i]
    total = 0.0
    for j, other in enumerate(cluster.members):
        if j != i and other.aspect_id == me.aspect_id:
            total += polarity(me.sentiment) * polarity(other.sentiment)
    return int(total)


def argument_scores(cluster: EvidenceCluster) -> list[int]:
    """All member scores in O(n) via per-aspect polarity sums."""
    _require_aspects(cluster)
    sums: dict[str | None, int] = {}
    for m in cluster.members:
        sums[m.aspect_id] = sums.get(m.aspect_id, 0) + int(polarity(m.sentiment))
    # s_i * (S_a - s_i) = s_i * S_a - 1
    return [int(polarity(m.sentiment)) * sums[m.aspect_id] - 1 for m in cluster.members]


def cluster_score(cluster: EvidenceCluster) -> int:
    return max(argument_scores(cluster))


def score_clusters(clusters: Sequence[EvidenceCluster]) -> list[EvidenceCluster]:
    return [c.with_(score=cluster_score(c)) for c in clusters]


def _rank_key(c: EvidenceCluster):
    if c.score is None:
        raise ValueError(f"cluster {c.cluster_id} has not been scored")
    return (-c.score, -len(c.members), c.representative or "", c.cluster_id)


def rank_clusters(clusters: Sequence[EvidenceCluster]) -> list[EvidenceCluster]:
    """Score descending, then larger clusters, then representative text."""
    return sorted(clusters, key=_rank_key)


def _dominant_aspect(cluster: EvidenceCluster) -> str | None:
    """Aspect of the best-scoring member (earliest on ties)."""
    scores = argument_scores(cluster)
    return cluster.members[scores.index(max(scores))].aspect_id


def render_sentence(evidence: str) -> str:
    text = " ".join(evidence.split())
    return text if text.endswith((".", "!", "?")) else text + "."


@dataclass(frozen=True)
class SummaryResult:
    summary: Summary
    warnings: tuple[str, ...]


def assemble_summary(ranked: Sequence[EvidenceCluster], top_n: int = DEFAULT_TOP_N) -> SummaryResult:
    """Take representatives in rank order, skipping repeated text, up to ``top_n``.

    Clusters with a negative score only make it in when fewer than ``top_n``
    non-negative ones exist; that case, and any shortfall, is reported in
    ``warnings``.
    """
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    warnings: list[str] = []
    if not ranked:
        warnings.append("no evidence clusters; summary is empty")
        log.warning(warnings[-1])
        return SummaryResult(Summary(), tuple(warnings))

    items: list[SummaryItem] = []
    taken: set[str] = set()
    for c in ranked:
        if len(items) >= top_n:
            break
        if c.representative is None or c.score is None:
            raise ValueError(f"cluster {c.cluster_id} lacks representative or score")
        if c.representative in taken:
            continue
        taken.add(c.representative)
        items.append(
            SummaryItem(c.representative, c.cluster_id, _dominant_aspect(c), c.score, tuple(c.review_ids))
        )

    if any(item.score < 0 for item in items):
        warnings.append("negative-score clusters admitted to fill the budget")
    if len(items) < top_n:
        warnings.append(f"only {len(items)} unique evidence pieces available for top_n={top_n}")
    text = " ".join(render_sentence(item.evidence) for item in items)
    return SummaryResult(Summary(tuple(items), text), tuple(warnings))

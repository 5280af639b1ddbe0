"""Summary evaluation: ROUGE-N, ROUGE-L and sentence-level diversity."""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass
from typing import Any, NamedTuple

from .clustering import EPS_ASPECT, ClusteringConfig, dbscan
from .embedding import EmbeddingProvider, embed_batch, tokenize

log = logging.getLogger(__name__)

_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


def _prf(overlap: int, n_cand: int, n_ref: int) -> PRF:
    if overlap == 0 or n_cand == 0 or n_ref == 0:
        return PRF(0.0, 0.0, 0.0)
    p = overlap / n_cand
    r = overlap / n_ref
    return PRF(p, r, 2 * p * r / (p + r))


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int = 2) -> PRF:
    """Clipped n-gram overlap between one candidate and one reference."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand, ref = tokenize(candidate), tokenize(reference)
    if len(cand) < n or len(ref) < n:
        log.warning("rouge-%d: text shorter than %d tokens, scoring 0", n, n)
        return PRF(0.0, 0.0, 0.0)
    c, r = _ngrams(cand, n), _ngrams(ref, n)
    overlap = sum((c & r).values())
    return _prf(overlap, sum(c.values()), sum(r.values()))


def lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> PRF:
    """Whole-text longest-common-subsequence ROUGE."""
    cand, ref = tokenize(candidate), tokenize(reference)
    return _prf(lcs_length(cand, ref), len(cand), len(ref))


def segment_sentences(text: str) -> list[str]:
    """Split after ``.``, ``!`` or ``?`` followed by whitespace; drop empties."""
    return [s.strip() for s in _SENTENCE_END.split(text) if s.strip()]


def diversity_counts(
    sentences: list[str], provider: EmbeddingProvider, eps: float = EPS_ASPECT
) -> tuple[int, int]:
    """(cluster count, sentence count) for a segmented summary."""
    if not sentences:
        raise ValueError("diversity is undefined for an empty summary")
    labeling = dbscan(embed_batch(sentences, provider), ClusteringConfig(eps, 1))
    return labeling.n_clusters, len(sentences)


def diversity(summary_text: str, provider: EmbeddingProvider, eps: float = EPS_ASPECT) -> float:
    """Number of semantic clusters among the summary's sentences over sentence count."""
    k, n = diversity_counts(segment_sentences(summary_text), provider, eps)
    return k / n


@dataclass(frozen=True)
class MetricReport:
    rouge2_f1: float | None
    rougeL_f1: float | None
    diversity: float | None
    sentence_count: int
    cluster_count: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "rouge2_f1": self.rouge2_f1,
            "rougeL_f1": self.rougeL_f1,
            "diversity": self.diversity,
            "sentence_count": self.sentence_count,
            "cluster_count": self.cluster_count,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> MetricReport:
        return cls(d["rouge2_f1"], d["rougeL_f1"], d["diversity"], d["sentence_count"], d["cluster_count"])


def evaluate_summary(
    summary_text: str,
    reference: str | None,
    provider: EmbeddingProvider,
    eps: float = EPS_ASPECT,
) -> MetricReport:
    """ROUGE fields are None without a reference; diversity is None for an empty summary."""
    sentences = segment_sentences(summary_text)
    if sentences:
        k, n = diversity_counts(sentences, provider, eps)
        div: float | None = k / n
    else:
        k = n = 0
        div = None
    r2 = rl = None
    if reference is not None:
        r2 = rouge_n(summary_text, reference, 2).f1
        rl = rouge_l(summary_text, reference).f1
    return MetricReport(r2, rl, div, n, k)

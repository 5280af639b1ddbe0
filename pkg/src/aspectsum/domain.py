"""Core value types shared by every pipeline stage.

All types are frozen dataclasses with a ``to_dict``/``from_dict`` pair; the
on-disk encoding is one JSON object per line using the field names below.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from .errors import EmptyCorpusError

log = logging.getLogger(__name__)


class Sentiment(str, Enum):
    GOOD = "good"
    BAD = "bad"


@dataclass(frozen=True)
class Review:
    review_id: str
    product_id: str
    text: str
    category: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "review_id": self.review_id,
            "product_id": self.product_id,
            "text": self.text,
            "category": self.category,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Review:
        for key in ("review_id", "product_id", "text"):
            if not isinstance(d.get(key), str):
                raise ValueError(f"review field {key!r} missing or not a string")
        category = d.get("category")
        if category is not None and not isinstance(category, str):
            raise ValueError("review field 'category' must be a string")
        return cls(d["review_id"], d["product_id"], d["text"], category)


@dataclass(frozen=True)
class Argument:
    """One filled-in review argument scheme: aspect, sentiment, evidence.

    ``aspect_id`` is empty until aspect unification. ``original_evidence``
    is set once the evidence has been replaced by a cluster representative.
    """

    review_id: str
    aspect_raw: str
    sentiment: Sentiment
    evidence: str
    aspect_id: str | None = None
    original_evidence: str | None = None

    def __post_init__(self):
        if not self.evidence.strip():
            raise ValueError("argument evidence must be non-empty")

    @property
    def source_evidence(self) -> str:
        return self.original_evidence if self.original_evidence is not None else self.evidence

    def to_dict(self) -> dict[str, Any]:
        return {
            "review_id": self.review_id,
            "aspect_raw": self.aspect_raw,
            "aspect_id": self.aspect_id,
            "sentiment": self.sentiment.value,
            "evidence": self.evidence,
            "original_evidence": self.original_evidence,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Argument:
        return cls(
            review_id=d["review_id"],
            aspect_raw=d["aspect_raw"],
            sentiment=Sentiment(d["sentiment"]),
            evidence=d["evidence"],
            aspect_id=d.get("aspect_id"),
            original_evidence=d.get("original_evidence"),
        )


def aspect_symbol(index: int) -> str:
    """Canonical symbol for the ``index``-th (0-based) aspect: A1, A2, ..."""
    return f"A{index + 1}"


@dataclass(frozen=True)
class AspectTaxonomy:
    """Canonical aspects plus the raw-string mapping onto them.

    ``aspects[i]`` is the label of symbol ``aspect_symbol(i)``. Before aspect
    clustering every raw string is its own symbol.
    """

    aspects: tuple[str, ...] = ()
    symbol_of: Mapping[str, str] = field(default_factory=dict)
    counts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        symbols = {aspect_symbol(i) for i in range(len(self.aspects))}
        for raw, sym in self.symbol_of.items():
            if sym not in symbols:
                raise ValueError(f"raw aspect {raw!r} maps to unknown symbol {sym!r}")
        for sym, n in self.counts.items():
            if sym not in symbols or n < 0:
                raise ValueError(f"bad count entry {sym!r}: {n!r}")

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> AspectTaxonomy:
        """Identity taxonomy: each distinct label becomes its own symbol, counts zero."""
        aspects: list[str] = []
        for label in labels:
            if label not in aspects:
                aspects.append(label)
        symbols = [aspect_symbol(i) for i in range(len(aspects))]
        return cls(
            tuple(aspects),
            dict(zip(aspects, symbols)),
            {s: 0 for s in symbols},
        )

    def __len__(self) -> int:
        return len(self.aspects)

    @property
    def symbols(self) -> list[str]:
        return [aspect_symbol(i) for i in range(len(self.aspects))]

    def label_of(self, symbol: str) -> str:
        return self.aspects[int(symbol[1:]) - 1]

    def count_of(self, symbol: str) -> int:
        return self.counts.get(symbol, 0)

    def most_mentioned(self, k: int | None = None) -> list[str]:
        """Labels ordered by count descending; ties keep first-seen order."""
        order = sorted(range(len(self.aspects)), key=lambda i: -self.count_of(aspect_symbol(i)))
        labels = [self.aspects[i] for i in order]
        return labels if k is None else labels[:k]

    def is_identity(self) -> bool:
        return len(self.symbol_of) == len(self.aspects) and all(
            self.symbol_of.get(label) == aspect_symbol(i) for i, label in enumerate(self.aspects)
        )

    def with_occurrence(self, raw: str) -> AspectTaxonomy:
        """Count one occurrence of ``raw``, appending it as a new aspect if unseen."""
        aspects = self.aspects
        symbol_of = dict(self.symbol_of)
        if raw not in symbol_of:
            aspects = aspects + (raw,)
            symbol_of[raw] = aspect_symbol(len(aspects) - 1)
        counts = dict(self.counts)
        sym = symbol_of[raw]
        counts[sym] = counts.get(sym, 0) + 1
        return AspectTaxonomy(aspects, symbol_of, counts)

    def to_dict(self) -> dict[str, Any]:
        return {
            "aspects": list(self.aspects),
            "symbol_of": dict(self.symbol_of),
            "counts": {s: self.counts.get(s, 0) for s in self.symbols},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> AspectTaxonomy:
        return cls(tuple(d["aspects"]), dict(d["symbol_of"]), dict(d["counts"]))


@dataclass(frozen=True)
class EvidenceCluster:
    cluster_id: int
    members: tuple[Argument, ...]
    representative: str | None = None
    score: int | None = None

    def __post_init__(self):
        if not self.members:
            raise ValueError("evidence cluster must have at least one member")

    @property
    def review_ids(self) -> list[str]:
        """Distinct member review ids in first-seen order."""
        return list(dict.fromkeys(m.review_id for m in self.members))

    def with_(self, **changes: Any) -> EvidenceCluster:
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "cluster_id": self.cluster_id,
            "members": [m.to_dict() for m in self.members],
            "representative": self.representative,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> EvidenceCluster:
        return cls(
            cluster_id=int(d["cluster_id"]),
            members=tuple(Argument.from_dict(m) for m in d["members"]),
            representative=d.get("representative"),
            score=d.get("score"),
        )


@dataclass(frozen=True)
class SummaryItem:
    evidence: str
    cluster_id: int
    aspect_id: str | None
    score: int
    source_review_ids: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "evidence": self.evidence,
            "cluster_id": self.cluster_id,
            "aspect_id": self.aspect_id,
            "score": self.score,
            "source_review_ids": list(self.source_review_ids),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SummaryItem:
        return cls(
            d["evidence"],
            int(d["cluster_id"]),
            d.get("aspect_id"),
            int(d["score"]),
            tuple(d["source_review_ids"]),
        )


@dataclass(frozen=True)
class Summary:
    items: tuple[SummaryItem, ...] = ()
    text: str = ""

    def __post_init__(self):
        texts = [item.evidence for item in self.items]
        if len(set(texts)) != len(texts):
            raise ValueError("summary evidence must be pairwise distinct")

    def to_dict(self) -> dict[str, Any]:
        return {"items": [i.to_dict() for i in self.items], "text": self.text}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Summary:
        return cls(tuple(SummaryItem.from_dict(i) for i in d["items"]), d["text"])


@dataclass(frozen=True)
class DroppedRecord:
    review_id: str
    reason: str


def validate_corpus(reviews: Iterable[Review]) -> tuple[list[Review], list[DroppedRecord]]:
    """Drop reviews with blank text or an already-seen id.

    Raises EmptyCorpusError when nothing survives.
    """
    kept: list[Review] = []
    dropped: list[DroppedRecord] = []
    seen: set[str] = set()
    for review in reviews:
        if review.review_id in seen:
            dropped.append(DroppedRecord(review.review_id, "duplicate id"))
        elif not review.text.strip():
            dropped.append(DroppedRecord(review.review_id, "empty text"))
        else:
            seen.add(review.review_id)
            kept.append(review)
    for d in dropped:
        log.warning("dropped review %s: %s", d.review_id, d.reason)
    if not kept:
        raise EmptyCorpusError("empty corpus")
    return kept, dropped


# -- line-delimited JSON -----------------------------------------------------


def dumps_record(obj: Mapping[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(", ", ": "))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path: str | os.PathLike, records: Iterable[Any]) -> None:
    lines = [dumps_record(r if isinstance(r, Mapping) else r.to_dict()) for r in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def iter_jsonl(path: str | os.PathLike) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)

"""Aspect induction and argument extraction through an LLM.

The review argument scheme is rendered into a prompt together with the
currently most mentioned aspects; the model answers with a JSON list of
``{aspect, sentiment, evidence}`` records.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Any, Sequence

from .domain import Argument, AspectTaxonomy, Review, Sentiment
from .errors import BackendError, ExtractionFailure, SkipThresholdExceeded
from .llm import LlmClient

log = logging.getLogger(__name__)

DEFAULT_PROMPT_ASPECTS = 20
DEFAULT_SKIP_THRESHOLD = 0.10


@dataclass(frozen=True)
class RasTemplate:
    claim_pattern: str = "{A} of this product is {S}"
    major_premise_pattern: str = "{X} is a sign that {A} is {S}"
    minor_premise_pattern: str = "The user observes {X} about {A}"

    def render(self, aspect: str = "A", sentiment: str = "S", evidence: str = "X") -> str:
        """Scheme text; the defaults leave the A/S/X placeholders for the model to fill."""
        values = {"A": aspect, "S": sentiment, "X": evidence}
        return "\n".join(
            [
                "Claim: " + self.claim_pattern.format(**values),
                "Major Premise: " + self.major_premise_pattern.format(**values),
                "Minor Premise: " + self.minor_premise_pattern.format(**values),
            ]
        )


@dataclass(frozen=True)
class RawArgument:
    aspect: str
    sentiment_label: str
    evidence: str


PROMPT_NOTES = (
    "1. Identify the aspects mentioned in the review. Then provide a new scheme with the "
    "relevant evidence for each identified aspect.",
    "2. The most mentioned aspects are {aspects}.",
    "3. Only generate a new aspect when there is no matching one above.",
    "4. Do NOT provide scheme having aspect wasn't mentioned in the text.",
    "5. Do NOT include too much details in the evidence.",
)

JSON_INSTRUCTION = (
    "Please return the values in JSON format:\n"
    '[{"aspect": "the property / feature of the product", '
    '"sentiment": "positive/negative", '
    '"evidence": "support from the argument"}, ...]'
)


def build_extraction_prompt(
    review: Review,
    template: RasTemplate,
    taxonomy: AspectTaxonomy,
    max_aspects: int = DEFAULT_PROMPT_ASPECTS,
) -> str:
    if not len(taxonomy):
        raise ValueError("taxonomy must contain at least one aspect")
    aspects = ", ".join(taxonomy.most_mentioned(max_aspects))
    notes = "\n".join(note.format(aspects=aspects) for note in PROMPT_NOTES)
    return (
        "Fill the scheme with the provided review.\n\n"
        f"{template.render()}\n\n"
        f"Note:\n{notes}\n\n"
        f"{JSON_INSTRUCTION}\n\n"
        f"Review: {review.text.strip()}\n"
    )


def build_induction_prompt(category: str) -> str:
    return (
        f'List the critical aspects of a product in the category "{category}": the key '
        "evaluation factors that most influence a customer's purchase decision.\n"
        'Return only a JSON list of short lowercase strings, e.g. ["price", "quality"].\n'
    )


_FENCE_RE = re.compile(r"^\s*```[a-zA-Z]*\s*\n?(.*?)\n?```\s*$", re.DOTALL)


def _load_json_payload(text: str) -> Any:
    """Parse ``text`` as JSON, tolerating code fences and chatter around a list."""
    m = _FENCE_RE.match(text)
    if m:
        text = m.group(1)
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    start, end = text.find("["), text.rfind("]")
    if start != -1 and end > start:
        try:
            return json.loads(text[start : end + 1])
        except json.JSONDecodeError:
            pass
    raise ExtractionFailure(f"response is not valid JSON: {text[:80]!r}")


def normalize_sentiment(label: str) -> Sentiment:
    norm = label.strip().lower()
    if norm == "positive":
        return Sentiment.GOOD
    if norm == "negative":
        return Sentiment.BAD
    raise ValueError(f"unsupported sentiment label {label!r}")


def _parse_records(text: str) -> tuple[list[RawArgument], int]:
    payload = _load_json_payload(text)
    if isinstance(payload, dict):
        payload = [payload]
    if not isinstance(payload, list):
        raise ExtractionFailure(f"expected a JSON list, got {type(payload).__name__}")
    out = []
    rejected = 0
    for rec in payload:
        fields = [rec.get(k) for k in ("aspect", "sentiment", "evidence")] if isinstance(rec, dict) else []
        if len(fields) != 3 or not all(isinstance(f, str) and f.strip() for f in fields):
            rejected += 1
            continue
        aspect, label, evidence = (f.strip() for f in fields)
        try:
            normalize_sentiment(label)
        except ValueError:
            rejected += 1
            continue
        out.append(RawArgument(aspect, label, evidence))
    if rejected:
        log.info("rejected %d malformed argument record(s)", rejected)
    return out, rejected


def parse_llm_response(text: str) -> list[RawArgument]:
    """Well-formed records from a model answer; raises ExtractionFailure if unparseable."""
    return _parse_records(text)[0]


def parse_aspect_list(text: str) -> list[str]:
    payload = _load_json_payload(text)
    if not isinstance(payload, list):
        raise ExtractionFailure("aspect list response is not a JSON list")
    aspects = []
    for item in payload:
        if isinstance(item, str) and item.strip() and item.strip() not in aspects:
            aspects.append(item.strip())
    return aspects


def induce_initial_aspects(category: str, client: LlmClient) -> AspectTaxonomy:
    """Ask the model for the category's critical aspects; all counts start at zero."""
    if not category or not category.strip():
        raise ValueError("category must be non-empty")
    response = client.complete(build_induction_prompt(category.strip()))
    try:
        aspects = parse_aspect_list(response)
    except ExtractionFailure as exc:
        raise BackendError(f"aspect induction for {category!r}: {exc}") from exc
    if not aspects:
        raise BackendError(f"aspect induction for {category!r} returned no aspects")
    return AspectTaxonomy.from_labels(aspects)


@dataclass(frozen=True)
class SkipRecord:
    review_id: str
    reason: str

    def to_dict(self) -> dict[str, str]:
        return {"review_id": self.review_id, "reason": self.reason}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SkipRecord:
        return cls(d["review_id"], d["reason"])


@dataclass(frozen=True)
class ExtractionResult:
    arguments: list[Argument]
    taxonomy: AspectTaxonomy
    skipped: list[SkipRecord]
    rejected_records: int = 0


def extract_arguments(
    corpus: Sequence[Review],
    template: RasTemplate,
    taxonomy: AspectTaxonomy,
    client: LlmClient,
    *,
    max_prompt_aspects: int = DEFAULT_PROMPT_ASPECTS,
    skip_threshold: float = DEFAULT_SKIP_THRESHOLD,
) -> ExtractionResult:
    """One model call per review, in review_id order.

    New raw aspects are appended to the taxonomy as they appear, so later
    prompts see updated counts. Reviews whose call fails or whose answer is
    unparseable are skipped; if the skipped fraction exceeds
    ``skip_threshold`` the whole extraction aborts.
    """
    arguments: list[Argument] = []
    skipped: list[SkipRecord] = []
    rejected = 0
    reviews = sorted(corpus, key=lambda r: r.review_id)
    for review in reviews:
        prompt = build_extraction_prompt(review, template, taxonomy, max_prompt_aspects)
        try:
            raw_args, n_bad = _parse_records(client.complete(prompt, review_id=review.review_id))
        except BackendError as exc:
            skipped.append(SkipRecord(review.review_id, f"backend error: {exc}"))
            continue
        except ExtractionFailure as exc:
            skipped.append(SkipRecord(review.review_id, f"unparseable response: {exc}"))
            continue
        rejected += n_bad
        for raw in raw_args:
            taxonomy = taxonomy.with_occurrence(raw.aspect)
            arguments.append(
                Argument(review.review_id, raw.aspect, normalize_sentiment(raw.sentiment_label), raw.evidence)
            )
    for s in skipped:
        log.warning("skipped review %s: %s", s.review_id, s.reason)
    if reviews and len(skipped) / len(reviews) > skip_threshold:
        raise SkipThresholdExceeded(
            f"{len(skipped)} of {len(reviews)} reviews failed extraction "
            f"(threshold {skip_threshold:.0%})",
            skipped=skipped,
        )
    return ExtractionResult(arguments, taxonomy, skipped, rejected)

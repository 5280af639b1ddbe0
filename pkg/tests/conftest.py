import json
from pathlib import Path

import pytest

from aspectsum.config import PipelineConfig

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN_REVIEWS = FIXTURES / "reviews_golden.jsonl"
GOLDEN_RULES = FIXTURES / "mock_rules_golden.jsonl"
GOLDEN_REFERENCES = FIXTURES / "references_golden.jsonl"


@pytest.fixture
def golden_config(tmp_path):
    def make(**overrides):
        values = dict(
            input=str(GOLDEN_REVIEWS),
            seed_fixtures=str(GOLDEN_RULES),
            references=str(GOLDEN_REFERENCES),
            out_dir=str(tmp_path / "out"),
            backoff=0.0,
        )
        values.update(overrides)
        return PipelineConfig(**values)

    return make


def write_skip_fixture(directory: Path, n_reviews: int, n_failures: int) -> tuple[Path, Path]:
    """Single-product corpus whose first ``n_failures`` reviews get unparseable answers."""
    reviews = directory / "reviews.jsonl"
    rules = directory / "rules.jsonl"
    with open(reviews, "w") as r, open(rules, "w") as m:
        m.write(json.dumps({"match": "critical aspects", "response": '["quality", "price"]'}) + "\n")
        for i in range(n_reviews):
            rid = f"r{i:02d}"
            r.write(json.dumps({"review_id": rid, "product_id": "p1", "text": f"Review number {i}.", "category": "gadgets"}) + "\n")
            if i < n_failures:
                resp = "I am unable to comply."
            else:
                resp = json.dumps([{"aspect": "quality", "sentiment": "positive", "evidence": f"works well {i}"}])
            m.write(json.dumps({"match": rid, "response": resp}) + "\n")
    return reviews, rules

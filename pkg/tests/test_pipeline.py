import json
from pathlib import Path

import pytest

from aspectsum.cli import main
from aspectsum.domain import Review, Summary, SummaryItem
from aspectsum.errors import ConfigError, DataError
from aspectsum.llm import LlmClient, MockBackend, ResponseCache
from aspectsum.metrics import MetricReport
from aspectsum.pipeline import (
    STAGES,
    emit_report,
    group_by_product,
    load_reviews,
    run_pipeline,
    safe_name,
)

from conftest import GOLDEN_REFERENCES, GOLDEN_REVIEWS, GOLDEN_RULES, write_skip_fixture


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines))
    return path


REC = '{{"review_id": "{}", "product_id": "{}", "text": "fine"}}'


class TestLoadReviews:
    def test_two_good_lines(self, tmp_path):
        path = write_lines(tmp_path / "r.jsonl", [REC.format("a", "p"), REC.format("b", "p")])
        assert [r.review_id for r in load_reviews(path)] == ["a", "b"]

    def test_malformed_line_skipped_with_warning(self, tmp_path, caplog):
        path = write_lines(tmp_path / "r.jsonl", [REC.format("a", "p"), '{"review_id": "b", "text"', REC.format("c", "p")])
        assert [r.review_id for r in load_reviews(path)] == ["a", "c"]
        assert "line 2" in caplog.text

    def test_missing_field_is_malformed(self, tmp_path):
        path = write_lines(tmp_path / "r.jsonl", [REC.format("a", "p"), '{"review_id": "b", "product_id": "p"}'])
        assert len(load_reviews(path)) == 1

    def test_grouping_by_product(self, tmp_path):
        path = write_lines(tmp_path / "r.jsonl", [REC.format("a", "q"), REC.format("b", "p"), REC.format("c", "q")])
        groups = group_by_product(load_reviews(path))
        assert list(groups) == ["p", "q"]
        assert [r.review_id for r in groups["q"]] == ["a", "c"]

    def test_unreadable_or_empty(self, tmp_path):
        with pytest.raises(DataError):
            load_reviews(tmp_path / "absent.jsonl")
        with pytest.raises(DataError):
            load_reviews(write_lines(tmp_path / "bad.jsonl", ["nope"]))


def test_safe_name():
    assert safe_name("a/b c") == "a_b_c"
    assert safe_name("..") != ".."


class TestEmitReport:
    def test_writes_four_files(self, tmp_path):
        item = SummaryItem("runs small", 0, "A1", 2, ("r1", "r2"))
        summary = Summary((item,), "runs small.")
        metrics = MetricReport(0.5, 0.5, 1.0, 1, 1)
        paths = emit_report(tmp_path / "p", "p", summary, metrics, {"status": "ok"})
        assert sorted(p.name for p in paths) == ["manifest.json", "metrics.json", "summary.json", "summary.txt"]
        assert (tmp_path / "p" / "summary.txt").read_text() == "runs small.\n"
        doc = json.loads((tmp_path / "p" / "summary.json").read_text())
        assert doc["items"][0]["source_review_ids"] == ["r1", "r2"]

    def test_empty_summary(self, tmp_path):
        emit_report(tmp_path, "p", Summary((), ""), None, {})
        assert (tmp_path / "summary.txt").read_text() == ""
        assert json.loads((tmp_path / "summary.json").read_text())["items"] == []


def test_outputs_carry_provenance(golden_config):
    cfg = golden_config()
    result = run_pipeline(cfg)
    reviews = {r.review_id: r for r in load_reviews(GOLDEN_REVIEWS)}
    for pid, res in result.products.items():
        assert res.summary.items
        for item in res.summary.items:
            assert item.source_review_ids
            assert all(reviews[rid].product_id == pid for rid in item.source_review_ids)
        stages = [a["stage"] for a in result.manifest["products"][pid]["stages"]]
        assert stages == list(STAGES)
        extract_dir = Path(cfg.out_dir) / safe_name(pid) / "stages" / "02-extract"
        args = [json.loads(l) for l in (extract_dir / "arguments.jsonl").read_text().splitlines()]
        assert all(a["review_id"] in reviews for a in args)


def test_controversial_evidence_absent_from_shoe_summary(golden_config):
    res = run_pipeline(golden_config()).products["shoe-01"]
    assert "wide" not in res.summary.text
    assert len(res.summary.items) == 8


def read_outputs(out_dir):
    return {
        p.relative_to(out_dir).as_posix(): p.read_bytes()
        for p in sorted(Path(out_dir).rglob("*"))
        if p.is_file() and p.name != "manifest.json"
    }


def test_two_runs_byte_identical(golden_config, tmp_path):
    run_pipeline(golden_config(out_dir=str(tmp_path / "a")))
    run_pipeline(golden_config(out_dir=str(tmp_path / "b")))
    assert read_outputs(tmp_path / "a") == read_outputs(tmp_path / "b")


def executed(result, pid="shoe-01"):
    return [a.stage for a in result.products[pid].artifacts if a.executed]


class TestIncremental:
    def test_rerun_executes_nothing(self, golden_config):
        cfg = golden_config()
        run_pipeline(cfg)
        assert executed(run_pipeline(cfg)) == []

    def test_top_n_change_reruns_only_tail(self, golden_config):
        cfg = golden_config()
        run_pipeline(cfg)
        assert executed(run_pipeline(cfg.replace(top_n=3))) == ["summarize", "evaluate"]

    def test_eps_evidence_change_reruns_from_clustering(self, golden_config):
        cfg = golden_config()
        run_pipeline(cfg)
        assert executed(run_pipeline(cfg.replace(eps_evidence=0.9))) == list(STAGES[3:])

    def test_identical_stage_output_cuts_off_downstream(self, golden_config):
        # a slightly wider radius that yields the same clusters re-runs only that stage
        cfg = golden_config()
        run_pipeline(cfg)
        assert executed(run_pipeline(cfg.replace(eps_evidence=0.3))) == ["cluster-evidence"]

    def test_tampered_artifact_is_rebuilt(self, golden_config):
        cfg = golden_config()
        run_pipeline(cfg)
        victim = Path(cfg.out_dir) / "shoe-01" / "stages" / "04-cluster-evidence" / "clusters.jsonl"
        victim.write_text("")
        assert executed(run_pipeline(cfg))[0] == "cluster-evidence"

    def test_until_stops_early(self, golden_config):
        res = run_pipeline(golden_config(), until="extract")
        assert executed(res) == ["induce", "extract"]
        assert res.products["shoe-01"].summary is None

    def test_unknown_stage(self, golden_config):
        with pytest.raises(ConfigError):
            run_pipeline(golden_config(), until="bake")


def test_warm_cache_no_backend_calls(golden_config, tmp_path):
    cache = str(tmp_path / "cache")
    cold = run_pipeline(golden_config(cache_dir=cache, out_dir=str(tmp_path / "cold")))
    backend = MockBackend.from_file(GOLDEN_RULES)
    client = LlmClient(backend, ResponseCache(cache), backoff=0)
    warm = run_pipeline(golden_config(cache_dir=cache, out_dir=str(tmp_path / "warm")), client=client)
    assert backend.calls == 0
    assert read_outputs(tmp_path / "cold") == read_outputs(tmp_path / "warm")
    assert cold.products.keys() == warm.products.keys()


def test_manifest_records_skip(golden_config):
    result = run_pipeline(golden_config())
    skipped = result.manifest["products"]["shoe-01"]["skipped_reviews"]
    assert [s["review_id"] for s in skipped] == ["s08"]
    assert skipped[0]["reason"].startswith("unparseable response")


# -- CLI ----------------------------------------------------------------------------


def golden_args(out_dir, *extra):
    return [
        "--input", str(GOLDEN_REVIEWS),
        "--seed-fixtures", str(GOLDEN_RULES),
        "--references", str(GOLDEN_REFERENCES),
        "--out-dir", str(out_dir),
        *extra,
    ]


class TestCli:
    def test_run_success(self, tmp_path, capsys):
        assert main(["run", *golden_args(tmp_path / "o")]) == 0
        assert "shoe-01: ran induce" in capsys.readouterr().out
        assert (tmp_path / "o" / "shoe-01" / "summary.txt").exists()
        assert (tmp_path / "o" / "manifest.json").exists()

    def test_stage_subcommands_chain(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["induce-aspects", *golden_args(out)]) == 0
        assert main(["extract", *golden_args(out)]) == 0
        assert main(["unify-aspects", *golden_args(out)]) == 0
        assert main(["cluster-evidence", *golden_args(out)]) == 0
        capsys.readouterr()
        assert main(["summarize", *golden_args(out)]) == 0
        assert "shoe-01: ran select-representatives, score, summarize" in capsys.readouterr().out

    def test_invalid_config_exit_1(self, tmp_path):
        assert main(["run", *golden_args(tmp_path, "--top-n", "0")]) == 1
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("wibble = 3\n")
        assert main(["run", *golden_args(tmp_path, "--config", str(cfg))]) == 1

    def test_mock_without_fixtures_exit_1(self, tmp_path):
        assert main(["run", "--input", str(GOLDEN_REVIEWS), "--out-dir", str(tmp_path)]) == 1

    def test_unreadable_input_exit_2(self, tmp_path):
        assert main(["run", *golden_args(tmp_path, "--input", str(tmp_path / "missing.jsonl"))]) == 2

    def test_backend_failure_exit_3(self, tmp_path):
        rules = tmp_path / "rules.jsonl"
        rules.write_text('{"match": "critical aspects", "error": "service unavailable"}\n')
        cfg = tmp_path / "c.cfg"
        cfg.write_text("backoff = 0\n")
        argv = ["run", *golden_args(tmp_path / "o", "--seed-fixtures", str(rules), "--config", str(cfg))]
        assert main(argv) == 3
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["products"]["shoe-01"]["status"] == "failed"

    def test_skip_threshold_exit_4(self, tmp_path):
        reviews, rules = write_skip_fixture(tmp_path, 10, 2)
        argv = ["run", "--input", str(reviews), "--seed-fixtures", str(rules), "--out-dir", str(tmp_path / "o")]
        assert main(argv) == 4
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert len(manifest["products"]["p1"]["skipped_reviews"]) == 2

    def test_evaluate_files(self, tmp_path, capsys):
        cand = tmp_path / "c.txt"
        ref = tmp_path / "r.txt"
        cand.write_text("the cat sat on the mat")
        ref.write_text("the cat lay on the mat")
        assert main(["evaluate", "--candidate", str(cand), "--reference", str(ref)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["rouge2_f1"] == pytest.approx(0.6)
        assert report["rougeL_f1"] == pytest.approx(5 / 6)
        assert report["diversity"] == 1.0
        out = tmp_path / "m.json"
        assert main(["evaluate", "--candidate", str(cand), "--output", str(out)]) == 0
        assert json.loads(out.read_text())["rouge2_f1"] is None

    def test_evaluate_runs_pipeline(self, tmp_path):
        assert main(["evaluate", *golden_args(tmp_path / "o")]) == 0
        metrics = json.loads((tmp_path / "o" / "tray-01" / "metrics.json").read_text())
        assert 0 < metrics["rouge2_f1"] <= 1

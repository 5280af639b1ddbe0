"""Staged, hash-gated pipeline over one review file.

Each product runs the stages below in order. A stage writes its outputs to
its own directory and is skipped on rerun when its input key (upstream
content hashes plus the config values it reads) matches the previous
manifest and its outputs are untouched.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import shutil
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from . import __version__
from .clustering import assign_aspects, cluster_aspects, cluster_evidence
from .config import PipelineConfig
from .domain import (
    Argument,
    AspectTaxonomy,
    DroppedRecord,
    EvidenceCluster,
    Review,
    Summary,
    atomic_write_text,
    dumps_record,
    iter_jsonl,
    validate_corpus,
    write_jsonl,
)
from .embedding import EmbeddingProvider, HashedLocalEmbedder, RemoteEmbedder
from .errors import ConfigError, DataError, PipelineError, SkipThresholdExceeded
from .extraction import (
    ExtractionResult,
    RasTemplate,
    SkipRecord,
    extract_arguments,
    induce_initial_aspects,
)
from .llm import LlmClient, MockBackend, RemoteBackend, ResponseCache
from .metrics import MetricReport, evaluate_summary
from .scoring import assemble_summary, rank_clusters, score_clusters
from .textrank import RankConfig, choose_representatives

log = logging.getLogger(__name__)

STAGES = (
    "induce",
    "extract",
    "unify-aspects",
    "cluster-evidence",
    "select-representatives",
    "score",
    "summarize",
    "evaluate",
)

MANIFEST = "manifest.json"


# -- input -------------------------------------------------------------------


def parse_review_lines(lines: Iterable[str]) -> tuple[list[Review], list[str]]:
    reviews: list[Review] = []
    problems: list[str] = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict):
                raise ValueError("record is not a JSON object")
            reviews.append(Review.from_dict(rec))
        except ValueError as exc:
            problems.append(f"line {lineno}: {exc}")
    return reviews, problems


def read_reviews(path: str | Path) -> tuple[list[Review], list[str]]:
    """Valid reviews plus one problem string per malformed line.

    Raises DataError when the file is unreadable or holds no valid review.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            reviews, problems = parse_review_lines(fh)
    except OSError as exc:
        raise DataError(f"cannot read reviews from {path}: {exc}") from exc
    for p in problems:
        log.warning("%s: skipped malformed review %s", path, p)
    if not reviews:
        raise DataError(f"no valid reviews in {path}")
    return reviews, problems


def load_reviews(path: str | Path) -> list[Review]:
    """Read line-delimited review records, skipping malformed lines with a warning."""
    return read_reviews(path)[0]


def group_by_product(reviews: Iterable[Review]) -> dict[str, list[Review]]:
    groups: dict[str, list[Review]] = {}
    for r in reviews:
        groups.setdefault(r.product_id, []).append(r)
    return {pid: groups[pid] for pid in sorted(groups)}


def load_references(path: str | Path) -> dict[str, str]:
    refs = {}
    try:
        for rec in iter_jsonl(path):
            refs[str(rec["product_id"])] = str(rec["reference"])
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read references from {path}: {exc}") from exc
    return refs


# -- construction from config -------------------------------------------------


def build_client(config: PipelineConfig) -> LlmClient:
    if config.backend == "mock":
        if not config.seed_fixtures:
            raise ConfigError("mock backend needs --seed-fixtures")
        backend: Any = MockBackend.from_file(config.seed_fixtures, model=config.model)
    else:
        backend = RemoteBackend(
            config.endpoint or "", config.model, api_key_env=config.api_key_env, timeout=config.timeout
        )
    cache = ResponseCache(config.cache_dir) if config.cache_dir else None
    return LlmClient(backend, cache, retries=config.retries, backoff=config.backoff)


def build_provider(config: PipelineConfig) -> EmbeddingProvider:
    if config.embedder == "hashed-local":
        return HashedLocalEmbedder(config.embedding_dim)
    if not config.embedding_endpoint or not config.embedding_model:
        raise ConfigError("remote embedder needs embedding_endpoint and embedding_model")
    return RemoteEmbedder(
        config.embedding_endpoint,
        config.embedding_model,
        api_key_env=config.embedding_api_key_env,
        batch_size=config.embedding_batch_size,
        timeout=config.timeout,
        retries=config.retries,
        backoff=config.backoff,
    )


def _backend_identity(config: PipelineConfig) -> dict[str, Any]:
    ident: dict[str, Any] = {"backend": config.backend, "model": config.model}
    if config.backend == "mock" and config.seed_fixtures:
        ident["fixtures_sha256"] = file_sha256(config.seed_fixtures)
    else:
        ident["endpoint"] = config.endpoint
    return ident


def _embedder_identity(config: PipelineConfig) -> dict[str, Any]:
    if config.embedder == "hashed-local":
        return {"embedder": "hashed-local", "dim": config.embedding_dim}
    return {"embedder": "remote", "model": config.embedding_model, "endpoint": config.embedding_endpoint}


# -- hashing and artifacts ------------------------------------------------------


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dir_sha256(path: Path) -> str:
    h = hashlib.sha256()
    for f in sorted(p for p in path.rglob("*") if p.is_file()):
        h.update(f.relative_to(path).as_posix().encode("utf-8") + b"\0")
        h.update(hashlib.sha256(f.read_bytes()).digest())
    return h.hexdigest()


@dataclass
class StageArtifact:
    stage: str
    path: str
    content_hash: str
    upstream_hashes: dict[str, str]
    input_key: str
    executed: bool

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def safe_name(product_id: str) -> str:
    name = re.sub(r"[^A-Za-z0-9._-]", "_", product_id)
    return name if name.strip(".") else "_" + name


# -- per-product run -------------------------------------------------------------


@dataclass
class ProductResult:
    product_id: str
    summary: Summary | None = None
    summary_warnings: list[str] = field(default_factory=list)
    metrics: MetricReport | None = None
    artifacts: list[StageArtifact] = field(default_factory=list)
    skipped_reviews: list[SkipRecord] = field(default_factory=list)
    pagerank_unconverged: list[int] = field(default_factory=list)
    status: str = "ok"
    error: str | None = None

    def manifest_record(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "error": self.error,
            "stages": [a.to_dict() for a in self.artifacts],
            "skipped_reviews": [s.to_dict() for s in self.skipped_reviews],
            "pagerank_unconverged": list(self.pagerank_unconverged),
            "warnings": list(self.summary_warnings),
        }


def _read_taxonomy(path: Path) -> AspectTaxonomy:
    return AspectTaxonomy.from_dict(next(iter_jsonl(path)))


def _read_arguments(path: Path) -> list[Argument]:
    return [Argument.from_dict(d) for d in iter_jsonl(path)]


def _read_clusters(path: Path) -> list[EvidenceCluster]:
    return [EvidenceCluster.from_dict(d) for d in iter_jsonl(path)]


class ProductRun:
    def __init__(
        self,
        product_id: str,
        reviews: list[Review],
        config: PipelineConfig,
        out_dir: Path,
        previous: dict[str, Any],
        client_factory: Callable[[], LlmClient],
        provider_factory: Callable[[], EmbeddingProvider],
        reference: str | None,
    ):
        self.product_id = product_id
        self.reviews = reviews
        self.config = config
        self.out_dir = out_dir
        self.product_dir = out_dir / safe_name(product_id)
        self.previous = {s["stage"]: s for s in previous.get("stages", [])}
        self._client_factory = client_factory
        self._provider_factory = provider_factory
        self.reference = reference
        self.result = ProductResult(product_id)
        self.hashes: dict[str, str] = {}

    def stage_dir(self, stage: str) -> Path:
        return self.product_dir / "stages" / f"{STAGES.index(stage) + 1:02d}-{stage}"

    def _gate(self, stage: str, upstream: dict[str, str], params: dict[str, Any], body: Callable[[Path], None]):
        key = sha256_text(
            json.dumps(
                {"stage": stage, "version": __version__, "upstream": upstream, "params": params},
                sort_keys=True,
            )
        )
        sdir = self.stage_dir(stage)
        prev = self.previous.get(stage)
        fresh = (
            prev is not None
            and prev.get("input_key") == key
            and sdir.is_dir()
            and dir_sha256(sdir) == prev.get("content_hash")
        )
        if not fresh:
            if sdir.exists():
                shutil.rmtree(sdir)
            sdir.mkdir(parents=True)
            log.info("%s: running %s", self.product_id, stage)
            try:
                body(sdir)
            except PipelineError as exc:
                if exc.stage is None:
                    exc.stage = stage
                raise
            except Exception as exc:
                raise PipelineError(f"{type(exc).__name__}: {exc}", stage=stage) from exc
        else:
            log.info("%s: %s up to date", self.product_id, stage)
        content = dir_sha256(sdir)
        self.hashes[stage] = content
        self.result.artifacts.append(
            StageArtifact(stage, sdir.relative_to(self.out_dir).as_posix(), content, upstream, key, not fresh)
        )
        return sdir

    # stage bodies ---------------------------------------------------------

    def category(self) -> str:
        for r in self.reviews:
            if r.category and r.category.strip():
                return r.category.strip()
        log.warning("%s: no category on any review, inducing aspects from the product id", self.product_id)
        return self.product_id

    def run(self, until: str = "evaluate") -> ProductResult:
        cfg = self.config
        last = STAGES.index(until)
        corpus_hash = sha256_text("\n".join(dumps_record(r.to_dict()) for r in sorted(self.reviews, key=lambda r: r.review_id)))
        backend_id = _backend_identity(cfg)
        embedder_id = _embedder_identity(cfg)

        def induce(d: Path):
            taxonomy = induce_initial_aspects(self.category(), self._client_factory())
            write_jsonl(d / "taxonomy.jsonl", [taxonomy])

        s = self._gate("induce", {}, {"category": self.category(), **backend_id}, induce)
        if last < 1:
            return self.result

        def extract(d: Path):
            taxonomy = _read_taxonomy(s / "taxonomy.jsonl")
            try:
                res: ExtractionResult = extract_arguments(
                    self.reviews,
                    RasTemplate(),
                    taxonomy,
                    self._client_factory(),
                    max_prompt_aspects=cfg.max_prompt_aspects,
                    skip_threshold=cfg.skip_threshold,
                )
            except SkipThresholdExceeded as exc:
                self.result.skipped_reviews = exc.skipped
                write_jsonl(d / "skipped.jsonl", self.result.skipped_reviews)
                raise
            write_jsonl(d / "arguments.jsonl", res.arguments)
            write_jsonl(d / "taxonomy.jsonl", [res.taxonomy])
            write_jsonl(d / "skipped.jsonl", res.skipped)

        s = self._gate(
            "extract",
            {"corpus": corpus_hash, "induce": self.hashes["induce"]},
            {**backend_id, "max_prompt_aspects": cfg.max_prompt_aspects, "skip_threshold": cfg.skip_threshold},
            extract,
        )
        self.result.skipped_reviews = [SkipRecord.from_dict(r) for r in iter_jsonl(s / "skipped.jsonl")]
        if last < 2:
            return self.result

        src = s

        def unify(d: Path):
            taxonomy = _read_taxonomy(src / "taxonomy.jsonl")
            arguments = _read_arguments(src / "arguments.jsonl")
            if arguments:
                taxonomy = cluster_aspects(taxonomy, self._provider_factory(), cfg.eps_aspect, cfg.min_samples)
                arguments = assign_aspects(arguments, taxonomy)
            write_jsonl(d / "taxonomy.jsonl", [taxonomy])
            write_jsonl(d / "arguments.jsonl", arguments)

        s = self._gate(
            "unify-aspects",
            {"extract": self.hashes["extract"]},
            {"eps_aspect": cfg.eps_aspect, "min_samples": cfg.min_samples, **embedder_id},
            unify,
        )
        if last < 3:
            return self.result

        src_u = s

        def cluster(d: Path):
            arguments = _read_arguments(src_u / "arguments.jsonl")
            clusters = cluster_evidence(arguments, self._provider_factory(), cfg.eps_evidence, cfg.min_samples)
            write_jsonl(d / "clusters.jsonl", clusters)

        s = self._gate(
            "cluster-evidence",
            {"unify-aspects": self.hashes["unify-aspects"]},
            {"eps_evidence": cfg.eps_evidence, "min_samples": cfg.min_samples, **embedder_id},
            cluster,
        )
        if last < 4:
            return self.result

        src_c = s

        def select(d: Path):
            clusters = _read_clusters(src_c / "clusters.jsonl")
            rank_cfg = RankConfig(cfg.damping, cfg.tolerance, cfg.max_iter)
            rewritten, unconverged = choose_representatives(clusters, self._provider_factory(), rank_cfg)
            write_jsonl(d / "clusters.jsonl", rewritten)
            write_jsonl(d / "pagerank_unconverged.jsonl", [{"cluster_id": c} for c in unconverged])

        s = self._gate(
            "select-representatives",
            {"cluster-evidence": self.hashes["cluster-evidence"]},
            {"damping": cfg.damping, "tolerance": cfg.tolerance, "max_iter": cfg.max_iter, **embedder_id},
            select,
        )
        self.result.pagerank_unconverged = [r["cluster_id"] for r in iter_jsonl(s / "pagerank_unconverged.jsonl")]
        if last < 5:
            return self.result

        src_s = s

        def score(d: Path):
            ranked = rank_clusters(score_clusters(_read_clusters(src_s / "clusters.jsonl")))
            write_jsonl(d / "clusters.jsonl", ranked)

        s = self._gate("score", {"select-representatives": self.hashes["select-representatives"]}, {}, score)
        if last < 6:
            return self.result

        src_r = s

        def summarize(d: Path):
            res = assemble_summary(_read_clusters(src_r / "clusters.jsonl"), cfg.top_n)
            doc = {"product_id": self.product_id, **res.summary.to_dict(), "warnings": list(res.warnings)}
            atomic_write_text(d / "summary.json", json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n")

        s = self._gate("summarize", {"score": self.hashes["score"]}, {"top_n": cfg.top_n}, summarize)
        doc = json.loads((s / "summary.json").read_text(encoding="utf-8"))
        self.result.summary = Summary.from_dict(doc)
        self.result.summary_warnings = list(doc.get("warnings", []))
        if last < 7:
            return self.result

        src_m = s
        reference = self.reference

        def evaluate(d: Path):
            summary = Summary.from_dict(json.loads((src_m / "summary.json").read_text(encoding="utf-8")))
            report = evaluate_summary(summary.text, reference, self._provider_factory(), cfg.eps_aspect)
            doc = {"product_id": self.product_id, **report.to_dict()}
            atomic_write_text(d / "metrics.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")

        s = self._gate(
            "evaluate",
            {"summarize": self.hashes["summarize"], "reference": sha256_text(reference or "")},
            {"eps": cfg.eps_aspect, "has_reference": reference is not None, **embedder_id},
            evaluate,
        )
        self.result.metrics = MetricReport.from_dict(json.loads((s / "metrics.json").read_text(encoding="utf-8")))
        return self.result


# -- reporting -------------------------------------------------------------------


def summary_document(product_id: str, summary: Summary, warnings: Iterable[str]) -> dict[str, Any]:
    return {"product_id": product_id, **summary.to_dict(), "warnings": list(warnings)}


def emit_report(
    product_dir: str | Path,
    product_id: str,
    summary: Summary,
    metrics: MetricReport | None,
    manifest: dict[str, Any],
    warnings: Iterable[str] = (),
) -> list[Path]:
    """Write summary.txt, summary.json, metrics.json and manifest.json into ``product_dir``."""
    d = Path(product_dir)
    try:
        d.mkdir(parents=True, exist_ok=True)
        paths = [d / "summary.txt", d / "summary.json", d / "metrics.json", d / MANIFEST]
        atomic_write_text(paths[0], summary.text + "\n" if summary.text else "")
        doc = summary_document(product_id, summary, warnings)
        atomic_write_text(paths[1], json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n")
        mdoc = {"product_id": product_id, **(metrics.to_dict() if metrics else {})}
        atomic_write_text(paths[2], json.dumps(mdoc, indent=2, sort_keys=True) + "\n")
        atomic_write_text(paths[3], json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write report to {d}: {exc}") from exc
    return paths


@dataclass
class RunResult:
    products: dict[str, ProductResult]
    manifest: dict[str, Any]
    out_dir: Path


def _load_previous_manifest(out_dir: Path) -> dict[str, Any]:
    try:
        return json.loads((out_dir / MANIFEST).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return {}


def run_pipeline(
    config: PipelineConfig,
    *,
    until: str = "evaluate",
    client: LlmClient | None = None,
    provider: EmbeddingProvider | None = None,
) -> RunResult:
    """Run every product through the stages up to ``until``.

    ``client`` and ``provider`` override the ones built from ``config``;
    they are otherwise constructed lazily, only when a stage actually runs.
    """
    if until not in STAGES:
        raise ConfigError(f"unknown stage {until!r}")
    if not config.input:
        raise ConfigError("no input review file given")
    out_dir = Path(config.out_dir)

    reviews, input_problems = read_reviews(config.input)
    corpus, dropped = validate_corpus(reviews)
    references = load_references(config.references) if config.references else {}

    cache: dict[str, Any] = {}

    def client_factory() -> LlmClient:
        if "client" not in cache:
            cache["client"] = client or build_client(config)
        return cache["client"]

    def provider_factory() -> EmbeddingProvider:
        if "provider" not in cache:
            cache["provider"] = provider or build_provider(config)
        return cache["provider"]

    previous = _load_previous_manifest(out_dir).get("products", {})
    manifest: dict[str, Any] = {
        "version": __version__,
        "input": {
            "path": str(config.input),
            "sha256": file_sha256(config.input),
            "malformed_lines": input_problems,
            "dropped_reviews": [{"review_id": d.review_id, "reason": d.reason} for d in dropped],
        },
        "until": until,
        "products": {},
    }
    results: dict[str, ProductResult] = {}
    out_dir.mkdir(parents=True, exist_ok=True)

    for pid, group in group_by_product(corpus).items():
        run = ProductRun(
            pid, group, config, out_dir, previous.get(pid, {}), client_factory, provider_factory, references.get(pid)
        )
        try:
            res = run.run(until)
        except PipelineError as exc:
            run.result.status = "failed"
            run.result.error = str(exc)
            manifest["products"][pid] = run.result.manifest_record()
            _write_manifest(out_dir, manifest)
            raise
        results[pid] = res
        record = res.manifest_record()
        manifest["products"][pid] = record
        if res.summary is not None:
            emit_report(run.product_dir, pid, res.summary, res.metrics, record, res.summary_warnings)

    _write_manifest(out_dir, manifest)
    return RunResult(results, manifest, out_dir)


def _write_manifest(out_dir: Path, manifest: dict[str, Any]) -> None:
    atomic_write_text(out_dir / MANIFEST, json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


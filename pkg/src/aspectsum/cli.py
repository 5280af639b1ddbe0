"""Command line for the aspect-centric review summarization pipeline.

Stage subcommands run the pipeline up to and including that stage, reusing
any up-to-date upstream artifacts in ``--out-dir``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .embedding import HashedLocalEmbedder
from .errors import ConfigError, PipelineError
from .metrics import evaluate_summary
from .pipeline import build_provider, run_pipeline

log = logging.getLogger("aspectsum")

SUBCOMMAND_STAGE = {
    "induce-aspects": "induce",
    "extract": "extract",
    "unify-aspects": "unify-aspects",
    "cluster-evidence": "cluster-evidence",
    "summarize": "summarize",
    "run": "evaluate",
}

# flag dest -> config key; None values are left to the file/defaults
_OVERRIDES = (
    "input",
    "out_dir",
    "backend",
    "embedder",
    "eps_aspect",
    "eps_evidence",
    "min_samples",
    "top_n",
    "cache_dir",
    "seed_fixtures",
    "references",
    "model",
    "endpoint",
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="line-delimited JSON review file")
    p.add_argument("--out-dir", help="directory for stage artifacts and reports")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--backend", choices=["remote", "mock"])
    p.add_argument("--embedder", choices=["remote", "hashed-local"])
    p.add_argument("--eps-aspect", type=float)
    p.add_argument("--eps-evidence", type=float)
    p.add_argument("--min-samples", type=int)
    p.add_argument("--top-n", type=int)
    p.add_argument("--cache-dir")
    p.add_argument("--seed-fixtures", help="mock backend rule file (JSONL of {match, response})")
    p.add_argument("--references", help="JSONL of {product_id, reference} for ROUGE")
    p.add_argument("--model")
    p.add_argument("--endpoint")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aspectsum", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_STAGE:
        _add_common(sub.add_parser(name, help=f"run the pipeline through {SUBCOMMAND_STAGE[name]}"))
    ev = sub.add_parser("evaluate", help="score a candidate summary, or run the pipeline through evaluation")
    _add_common(ev)
    ev.add_argument("--candidate", help="candidate summary text file")
    ev.add_argument("--reference", help="reference summary text file")
    ev.add_argument("--output", help="write the metric report here instead of stdout")
    return parser


def _config_from_args(args: argparse.Namespace):
    overrides = {key: getattr(args, key, None) for key in _OVERRIDES}
    return load_config(args.config, overrides)


def _evaluate_files(args: argparse.Namespace, config) -> int:
    try:
        candidate = Path(args.candidate).read_text(encoding="utf-8")
        reference = Path(args.reference).read_text(encoding="utf-8") if args.reference else None
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    provider = build_provider(config) if config.embedder == "remote" else HashedLocalEmbedder(config.embedding_dim)
    report = evaluate_summary(candidate, reference, provider, config.eps_aspect)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _config_from_args(args)
        if args.command == "evaluate" and args.candidate:
            return _evaluate_files(args, config)
        until = SUBCOMMAND_STAGE.get(args.command, "evaluate")
        result = run_pipeline(config, until=until)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return exc.exit_code
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    for pid, res in result.products.items():
        executed = [a.stage for a in res.artifacts if a.executed]
        print(f"{pid}: ran {', '.join(executed) or 'nothing (up to date)'}")
    print(f"manifest: {result.out_dir / 'manifest.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``specpilot`` command line.

Exit codes: 0 success, 1 domain failure (no specs, missing artifacts, ...),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

from specpilot.corpus import generate_corpus
from specpilot.errors import SpecPilotError
from specpilot.exec_harness import FixedClock, LocalExecutor, RemoteCiExecutor, default_registry, system_clock
from specpilot.generator import RemoteBackend, TemplateBackend
from specpilot.orchestrator import Deps, RunConfig, rerender_reports, run_batch
from specpilot.retrieval import build_index, load_corpus, write_corpus
from specpilot.review import approve, decision, diff_blocks, unchanged_fraction
from specpilot.script_dsl import ParseError, parse_script
from specpilot.spec_model import serialize_spec

REMOTE_URL_ENV = "SPECPILOT_REMOTE_URL"

CONFIG_KEYS = {
    "max_iterations": int,
    "retrieve_k": int,
    "tau_coverage": float,
    "tau_semantic": float,
    "backend": str,
    "seed": int,
    "output_root": str,
    "clock": str,
    "jobs": int,
    "suite_manual": int,
    "suite_automated": int,
    "corpus_dir": str,
    "regression_dir": str,
    "remote_url": str,
    "remote_timeout_s": float,
    "ci_url": str,
}

DEFAULTS: dict[str, Any] = {
    "output_root": "out",
    "regression_dir": "regression",
    "remote_timeout_s": 120.0,
}


class UsageError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"specpilot: {msg}", file=sys.stderr)


def load_config(path: str | None, overrides: dict[str, Any]) -> dict[str, Any]:
    """Merge defaults, the JSON config file, then non-None flag overrides."""
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError(f"config {path} must hold a JSON object")
        for key, value in raw.items():
            if key not in CONFIG_KEYS:
                raise UsageError(f"unknown config key {key!r}")
            typ = CONFIG_KEYS[key]
            accepted = (float, int) if typ is float else (typ,)
            if value is not None and (isinstance(value, bool) or not isinstance(value, accepted)):
                raise UsageError(f"config key {key!r} must be {typ.__name__}")
            cfg[key] = value
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _run_config(cfg: dict[str, Any]) -> RunConfig:
    clock = FixedClock(cfg["clock"]) if cfg.get("clock") else system_clock
    kwargs = {
        k: cfg[k]
        for k in (
            "max_iterations", "retrieve_k", "tau_coverage", "tau_semantic", "backend",
            "seed", "output_root", "jobs", "suite_manual", "suite_automated",
        )
        if k in cfg
    }
    if kwargs.get("backend", "template") not in ("template", "remote"):
        raise UsageError("backend must be 'template' or 'remote'")
    try:
        return RunConfig(clock=clock, **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# -- subcommands -------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = load_config(
        args.config,
        {
            "seed": args.seed,
            "backend": args.backend,
            "corpus_dir": args.corpus,
            "output_root": args.output,
            "max_iterations": args.max_iterations,
            "jobs": args.jobs,
            "clock": args.clock,
        },
    )
    config = _run_config(cfg)
    registry = default_registry()
    if config.backend == "remote":
        url = cfg.get("remote_url") or os.environ.get(REMOTE_URL_ENV)
        if not url:
            raise UsageError(f"remote backend needs remote_url or ${REMOTE_URL_ENV}")
        backend = RemoteBackend(url, cfg["remote_timeout_s"])
    else:
        backend = TemplateBackend(registry)
    executor = RemoteCiExecutor(cfg["ci_url"]) if cfg.get("ci_url") else LocalExecutor(registry, config.clock)
    pairs = load_corpus(cfg["corpus_dir"]) if cfg.get("corpus_dir") else []
    deps = Deps(build_index(pairs), executor, registry, backend)

    summary = run_batch(args.input, config, deps)
    run_dir = config.output_root / "runs" / summary.run_id
    for skipped in summary.skipped:
        _err(f"skipped {skipped.path}: {skipped.reason}")
    if not summary.results:
        _err("no specifications found")
        print(f"run {summary.run_id}: 0 specifications; reports in {run_dir}")
        return 1
    totals = ", ".join(f"{v}={n}" for v, n in summary.totals.items())
    print(f"run {summary.run_id}: {len(summary.results)} specifications ({totals})")
    print(f"artifacts: {run_dir}")
    return 0


def cmd_corpus(args) -> int:
    specs, pairs = generate_corpus(args.seed, args.count, args.areas)
    out = Path(args.out)
    spec_dir = out / "specs"
    spec_dir.mkdir(parents=True, exist_ok=True)
    for spec in specs:
        (spec_dir / f"{spec.key}.json").write_text(serialize_spec(spec), encoding="utf-8")
    write_corpus(out / "corpus", pairs)
    print(f"wrote {len(specs)} specifications to {spec_dir}")
    print(f"wrote {len(pairs)} historical pairs to {out / 'corpus'}")
    return 0


def _read_script(path: str):
    try:
        return parse_script(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise SpecPilotError(f"cannot read {path}: {exc}") from exc
    except ParseError as exc:
        raise SpecPilotError(f"{path}: {exc}") from exc


def cmd_review(args) -> int:
    if args.action == "diff":
        diff = diff_blocks(_read_script(args.generated), _read_script(args.refactored))
        print(diff.render())
        print(f"unchanged fraction: {unchanged_fraction(diff):.3f}")
        return 0
    cfg = load_config(args.config, {"output_root": args.output, "regression_dir": args.regression})
    clock = FixedClock(cfg["clock"]) if cfg.get("clock") else system_clock
    entry = approve(
        cfg["regression_dir"],
        cfg["output_root"],
        args.spec,
        args.run,
        decision(args.action, args.reviewer, clock),
        args.script,
    )
    where = f" -> {Path(cfg['regression_dir']) / entry['promoted']}" if entry["promoted"] else ""
    print(f"{entry['decision']} {entry['spec_key']} (run {entry['run_id']}) by {entry['reviewer']}{where}")
    return 0


def cmd_report(args) -> int:
    cfg = load_config(args.config, {"output_root": args.output})
    summary = rerender_reports(cfg["output_root"], args.run)
    print(f"re-rendered {len(summary.results) + 1} report(s) for run {summary.run_id}")
    return 0


# -- parser ------------------------------------------------------------------


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specpilot",
        description="Generate, evaluate and review test scripts from test specifications.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    gen = sub.add_parser("generate", help="run the generation loop over a folder of specs")
    gen.add_argument("--input", required=True, help="folder of spec JSON files")
    gen.add_argument("--config", help="JSON config file")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--backend", choices=("template", "remote"))
    gen.add_argument("--corpus", help="historical pair folder (<KEY>.json + <KEY>.ats)")
    gen.add_argument("--output", help="output root (default: out)")
    gen.add_argument("--max-iterations", type=_positive_int)
    gen.add_argument("--jobs", type=_positive_int, help="specs processed in parallel (default 1)")
    gen.add_argument("--clock", help="fixed ISO-8601 UTC time for reproducible runs")
    gen.set_defaults(func=cmd_generate)

    cor = sub.add_parser("corpus", help="write a synthetic spec corpus and historical pairs")
    cor.add_argument("--seed", type=int, required=True)
    cor.add_argument("--out", required=True)
    cor.add_argument("--count", type=_positive_int, default=61)
    cor.add_argument("--areas", type=_positive_int, default=6)
    cor.set_defaults(func=cmd_corpus)

    rev = sub.add_parser("review", help="diff scripts or record a review decision")
    rsub = rev.add_subparsers(dest="action", required=True, metavar="ACTION")
    rdiff = rsub.add_parser("diff", help="semantic-block diff and unchanged fraction")
    rdiff.add_argument("--generated", required=True)
    rdiff.add_argument("--refactored", required=True)
    rdiff.set_defaults(func=cmd_review)
    for verb in ("accept", "refactor", "rewrite"):
        p = rsub.add_parser(verb, help=f"record a '{verb}' decision")
        p.add_argument("--spec", required=True)
        p.add_argument("--run", required=True)
        p.add_argument("--reviewer", required=True)
        p.add_argument("--script", help="script to promote instead of the run's final script")
        p.add_argument("--config")
        p.add_argument("--output", help="output root holding the run")
        p.add_argument("--regression", help="regression suite directory")
        p.set_defaults(func=cmd_review)

    rep = sub.add_parser("report", help="re-render a run's reports from its trace")
    rep.add_argument("--run", required=True)
    rep.add_argument("--config")
    rep.add_argument("--output")
    rep.set_defaults(func=cmd_report)
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        _err(str(exc))
        return 2
    except SpecPilotError as exc:
        _err(str(exc))
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()

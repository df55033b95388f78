"""Bounded generate/execute/evaluate loop, batch runs, and the on-disk artifact trace.

Artifact layout for one run::

    <output_root>/runs/<run_id>/
      trace.jsonl
      report_manager.md
      <SPEC_KEY>/
        iteration_<n>/script.ats
        iteration_<n>/execution.log.jsonl   (absent when not executed)
        iteration_<n>/evaluation.json
        final/script.ats
        report_engineer.md
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from specpilot.errors import SpecPilotError, TransportError
from specpilot.evaluator import EvaluationMatrix, Thresholds, evaluate
from specpilot.exec_harness import (
    ApiDef,
    CiExecutor,
    Clock,
    ExecutionLog,
    LocalExecutor,
    default_registry,
    iso,
    system_clock,
)
from specpilot.generator import GenerationBackend, GenerationRequest, TemplateBackend, repair
from specpilot.reporting import engineer_report, manager_report
from specpilot.retrieval import CorpusIndex, build_index, retrieve
from specpilot.script_dsl import ParseError, parse_script, render_script
from specpilot.spec_model import (
    SkippedFile,
    SpecDocument,
    has_errors,
    load_spec_batch,
    spec_from_dict,
    spec_to_dict,
    validate_spec,
)

log = logging.getLogger(__name__)

VERDICTS = ("pass", "revise", "fail_syntax", "not_executed")
STOP_REASONS = ("accepted_candidate", "iteration_limit", "ci_unavailable", "backend_error")


class RunExistsError(SpecPilotError):
    pass


class RunNotFound(SpecPilotError):
    pass


@dataclass
class RunConfig:
    max_iterations: int = 3
    retrieve_k: int = 3
    tau_coverage: float = 0.8
    tau_semantic: float = 0.8
    backend: str = "template"
    seed: int = 0
    output_root: Path = Path("out")
    clock: Clock = system_clock
    jobs: int = 1
    suite_manual: int | None = None
    suite_automated: int | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.retrieve_k < 1:
            raise ValueError("retrieve_k must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        self.output_root = Path(self.output_root)

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.tau_coverage, self.tau_semantic)

    def trace_dict(self) -> dict[str, Any]:
        return {
            "max_iterations": self.max_iterations,
            "retrieve_k": self.retrieve_k,
            "tau_coverage": self.tau_coverage,
            "tau_semantic": self.tau_semantic,
            "backend": self.backend,
            "seed": self.seed,
            "suite_manual": self.suite_manual,
            "suite_automated": self.suite_automated,
        }


@dataclass(frozen=True)
class ContinuationDecision:
    stop: bool
    reason: str | None = None

    def __str__(self) -> str:
        return f"stop({self.reason})" if self.stop else "continue"


CONTINUE = ContinuationDecision(False)


def decide_continue(
    iteration: int, max_iterations: int, ci_available: bool, verdict: str
) -> ContinuationDecision:
    if iteration < 1:
        raise ValueError("iteration must be >= 1")
    if verdict == "pass":
        return ContinuationDecision(True, "accepted_candidate")
    if not ci_available:
        return ContinuationDecision(True, "ci_unavailable")
    if iteration >= max_iterations:
        return ContinuationDecision(True, "iteration_limit")
    return CONTINUE


@dataclass
class IterationRecord:
    number: int
    script_text: str
    log: ExecutionLog | None
    matrix: EvaluationMatrix
    source: str  # backend | repair | regenerate
    note: str = ""


@dataclass
class SpecRunResult:
    spec: SpecDocument
    iterations: list[IterationRecord]
    stop_reason: str
    best_iteration: int
    events: list[dict[str, Any]] = field(default_factory=list, repr=False)

    @property
    def spec_key(self) -> str:
        return self.spec.key

    @property
    def best(self) -> IterationRecord:
        return self.iterations[self.best_iteration - 1]

    @property
    def final_verdict(self) -> str:
        return self.best.matrix.verdict

    @property
    def final_script(self) -> str:
        return self.best.script_text


@dataclass
class RunSummary:
    run_id: str
    results: list[SpecRunResult]
    skipped: list[SkippedFile]
    suite_manual: int | None = None
    suite_automated: int | None = None

    @property
    def totals(self) -> dict[str, int]:
        counts = Counter(r.final_verdict for r in self.results)
        return {v: counts.get(v, 0) for v in VERDICTS}


@dataclass
class Deps:
    index: CorpusIndex = field(default_factory=lambda: build_index([]))
    executor: CiExecutor = field(default_factory=LocalExecutor)
    registry: dict[str, ApiDef] = field(default_factory=default_registry)
    backend: GenerationBackend | None = None


def select_best(iterations: list[IterationRecord]) -> int:
    """1-based number of the best iteration.

    Ranked by pass verdict, semantic, coverage, then executability and
    improvement so a repaired script beats an otherwise equal earlier one;
    remaining ties go to the earliest iteration.
    """
    best = max(
        iterations,
        key=lambda it: (
            it.matrix.verdict == "pass",
            it.matrix.semantic,
            it.matrix.coverage,
            it.matrix.executability,
            it.matrix.improvement,
            -it.number,
        ),
    )
    return best.number


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def run_spec(
    spec: SpecDocument,
    index: CorpusIndex,
    config: RunConfig,
    executor: CiExecutor,
    registry: dict[str, ApiDef],
    backend: GenerationBackend | None = None,
) -> SpecRunResult:
    backend = backend or TemplateBackend(registry)
    key = spec.key
    events: list[dict[str, Any]] = [{"event": "spec_start", "spec": spec_to_dict(spec)}]
    retrieved = tuple(retrieve(index, spec, config.retrieve_k))
    events.append(
        {
            "event": "retrieved",
            "spec_key": key,
            "pairs": [[p.key, round(score, 6)] for p, score in retrieved],
        }
    )

    iterations: list[IterationRecord] = []
    findings: tuple = ()
    stop_reason = "iteration_limit"
    for n in range(1, config.max_iterations + 1):
        request = GenerationRequest(spec, retrieved, findings, n)
        note = ""
        source = "backend"
        text = None
        try:
            if n > 1:
                text = _revise(iterations[-1], findings, registry)
                source = "repair"
                if text is None:
                    source = "regenerate"
                    text = backend.generate(request)
            else:
                text = backend.generate(request)
        except TransportError as exc:
            note = f"backend error: {exc}"
            text = ""
        events.append(
            {"event": "generated", "spec_key": key, "iteration": n, "source": source,
             "script_sha256": _digest(text), "note": note}
        )

        exec_log = None
        ci_available = executor.availability()
        if note:
            # nothing to run: the backend produced no candidate
            pass
        elif not ci_available:
            events.append({"event": "execution_skipped", "spec_key": key, "iteration": n,
                           "reason": "ci_unavailable"})
        else:
            try:
                parse_script(text)
            except ParseError:
                events.append({"event": "execution_skipped", "spec_key": key, "iteration": n,
                               "reason": "syntax_error"})
            else:
                try:
                    exec_log = executor.execute(text, spec.ci_config)
                except TransportError as exc:
                    ci_available = False
                    events.append({"event": "execution_skipped", "spec_key": key,
                                   "iteration": n, "reason": f"ci_unavailable: {exc}"})
                else:
                    events.append(
                        {"event": "executed", "spec_key": key, "iteration": n,
                         "entries": len(exec_log.entries),
                         "started_at": exec_log.started_at,
                         "finished_at": exec_log.finished_at}
                    )

        matrix = evaluate(spec, text, exec_log, registry, config.thresholds)
        iterations.append(IterationRecord(n, text, exec_log, matrix, source, note))
        events.append({"event": "evaluated", "spec_key": key, "iteration": n,
                       "matrix": matrix.to_dict()})

        if note:
            decision = ContinuationDecision(True, "backend_error")
        else:
            decision = decide_continue(n, config.max_iterations, ci_available, matrix.verdict)
        events.append({"event": "decision", "spec_key": key, "iteration": n,
                       "decision": "stop" if decision.stop else "continue",
                       "reason": decision.reason})
        if decision.stop:
            stop_reason = decision.reason
            break
        findings = matrix.findings

    best = select_best(iterations)
    result = SpecRunResult(spec, iterations, stop_reason, best, events)
    events.append({"event": "spec_end", "spec_key": key, "iterations": len(iterations),
                   "best_iteration": best, "final_verdict": result.final_verdict,
                   "stop_reason": stop_reason})
    return result


def _revise(prev: IterationRecord, findings, registry) -> str | None:
    """Repair the previous script; ``None`` when repair has nothing to change."""
    try:
        script = parse_script(prev.script_text)
    except ParseError:
        return None
    repaired = render_script(repair(script, findings, registry))
    if repaired == render_script(script):
        return None
    return repaired


# -- batch runs --------------------------------------------------------------


def make_run_id(clock: Clock, seed: int) -> str:
    return clock().strftime("%Y%m%dT%H%M%SZ") + f"-s{seed}"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _json(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def _persist_spec(run_dir: Path, result: SpecRunResult) -> None:
    spec_dir = run_dir / result.spec_key
    for it in result.iterations:
        it_dir = spec_dir / f"iteration_{it.number}"
        _write(it_dir / "script.ats", it.script_text)
        if it.log is not None:
            _write(it_dir / "execution.log.jsonl", it.log.to_jsonl())
        _write(it_dir / "evaluation.json", _json(it.matrix.to_dict()))
    _write(spec_dir / "final" / "script.ats", result.final_script)
    _write(spec_dir / "report_engineer.md", engineer_report(result))


def run_batch(input_folder: str | Path, config: RunConfig, deps: Deps | None = None) -> RunSummary:
    """Run every valid spec in *input_folder* and write the run's artifact tree."""
    deps = deps or Deps()
    docs, skipped = load_spec_batch(input_folder)
    runnable = []
    for doc in docs:
        findings = validate_spec(doc)
        if has_errors(findings):
            errors = [f for f in findings if f.level == "error"]
            codes = ", ".join(f.code for f in errors)
            skipped.append(SkippedFile(f"{doc.key}", f"validation errors: {codes}"))
        else:
            runnable.append(doc)

    run_id = make_run_id(config.clock, config.seed)
    run_dir = config.output_root / "runs" / run_id
    if run_dir.exists():
        raise RunExistsError(f"run directory {run_dir} already exists")
    run_dir.mkdir(parents=True)
    log.info("run %s: %d spec(s), %d skipped", run_id, len(runnable), len(skipped))

    def unit(doc: SpecDocument) -> SpecRunResult:
        return run_spec(doc, deps.index, config, deps.executor, deps.registry, deps.backend)

    if config.jobs > 1 and len(runnable) > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(unit, runnable))
    else:
        results = [unit(doc) for doc in runnable]

    summary = RunSummary(run_id, results, skipped, config.suite_manual, config.suite_automated)

    events: list[dict[str, Any]] = [
        {"event": "run_start", "run_id": run_id, "at": iso(config.clock()),
         "config": config.trace_dict()}
    ]
    events += [{"event": "input_skipped", "file": s.path, "reason": s.reason} for s in skipped]
    for result in results:
        events += result.events
        _persist_spec(run_dir, result)
    events.append({"event": "run_end", "run_id": run_id, "totals": summary.totals})
    _write(
        run_dir / "trace.jsonl",
        "".join(json.dumps(e, ensure_ascii=False) + "\n" for e in events),
    )
    _write(run_dir / "report_manager.md", manager_report(summary))
    return summary


# -- reloading a finished run ------------------------------------------------


def read_trace(run_dir: Path) -> list[dict[str, Any]]:
    path = run_dir / "trace.jsonl"
    if not path.exists():
        raise RunNotFound(f"no trace at {path}")
    return [json.loads(line) for line in path.read_text(encoding="utf-8").split("\n") if line]


def load_run(output_root: str | Path, run_id: str) -> RunSummary:
    """Rebuild a ``RunSummary`` from a run's trace and artifact files."""
    run_dir = Path(output_root) / "runs" / run_id
    events = read_trace(run_dir)
    start = events[0]
    cfg = start.get("config", {})
    skipped = [SkippedFile(e["file"], e["reason"]) for e in events if e["event"] == "input_skipped"]
    results: list[SpecRunResult] = []
    current: dict[str, Any] = {}
    for e in events:
        kind = e["event"]
        if kind == "spec_start":
            current = {"spec": spec_from_dict(e["spec"]), "iterations": [], "sources": {}, "notes": {}}
        elif kind == "generated":
            current["sources"][e["iteration"]] = e["source"]
            current["notes"][e["iteration"]] = e.get("note", "")
        elif kind == "evaluated":
            n = e["iteration"]
            it_dir = run_dir / current["spec"].key / f"iteration_{n}"
            log_path = it_dir / "execution.log.jsonl"
            exec_log = None
            if log_path.exists():
                exec_log = ExecutionLog.from_jsonl(log_path.read_text(encoding="utf-8"))
            current["iterations"].append(
                IterationRecord(
                    n,
                    (it_dir / "script.ats").read_text(encoding="utf-8"),
                    exec_log,
                    EvaluationMatrix.from_dict(e["matrix"]),
                    current["sources"].get(n, "backend"),
                    current["notes"].get(n, ""),
                )
            )
        elif kind == "spec_end":
            results.append(
                SpecRunResult(
                    current["spec"], current["iterations"], e["stop_reason"], e["best_iteration"]
                )
            )
    return RunSummary(run_id, results, skipped, cfg.get("suite_manual"), cfg.get("suite_automated"))


def rerender_reports(output_root: str | Path, run_id: str) -> RunSummary:
    summary = load_run(output_root, run_id)
    run_dir = Path(output_root) / "runs" / run_id
    for result in summary.results:
        _write(run_dir / result.spec_key / "report_engineer.md", engineer_report(result))
    _write(run_dir / "report_manager.md", manager_report(summary))
    return summary

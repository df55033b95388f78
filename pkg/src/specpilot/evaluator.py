"""Five-dimension evaluation matrix for one candidate script."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from specpilot.exec_harness import ApiDef, ExecutionLog, check_api_names, default_registry
from specpilot.generator import nearest_api
from specpilot.retrieval import tokenize
from specpilot.script_dsl import (
    Assert,
    Call,
    Let,
    ParseError,
    TestScript,
    Var,
    parse_script,
    render_statement,
)
from specpilot.spec_model import SpecDocument

COVERAGE_MIN_SIMILARITY = 0.25
IMPROVEMENT_PENALTY = Fraction(1, 5)

FINDING_CODES = (
    "SYN-PARSE-ERROR",
    "L1-HARDCODED",
    "L2-NO-ASSERT",
    "L3-NO-TEARDOWN",
    "L4-UNKNOWN-API",
    "L5-DUPLICATE-STMT",
    "COV-MISSED-STEP",
    "SEM-FAILED-STEP",
)

_SEVERITY = {
    "SYN-PARSE-ERROR": "warn",
    "L1-HARDCODED": "info",
    "L2-NO-ASSERT": "warn",
    "L3-NO-TEARDOWN": "warn",
    "L4-UNKNOWN-API": "warn",
    "L5-DUPLICATE-STMT": "info",
    "COV-MISSED-STEP": "warn",
    "SEM-FAILED-STEP": "warn",
}


@dataclass(frozen=True)
class Thresholds:
    coverage: float = 0.8
    semantic: float = 0.8


@dataclass(frozen=True)
class Finding:
    code: str
    location: str
    message: str
    stmt: int | None = None
    subject: str | None = None

    @property
    def severity(self) -> str:
        return _SEVERITY[self.code]

    def to_dict(self) -> dict[str, Any]:
        return {
            "code": self.code,
            "severity": self.severity,
            "location": self.location,
            "stmt": self.stmt,
            "subject": self.subject,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Finding":
        return cls(d["code"], d["location"], d["message"], d.get("stmt"), d.get("subject"))


def _location_rank(location: str) -> tuple[int, int]:
    if location == "data":
        return (0, 0)
    if location == "setup":
        return (1, 0)
    if location.startswith("step "):
        return (2, int(location[5:]))
    if location == "teardown":
        return (3, 0)
    if location.startswith("spec step "):
        return (5, int(location[10:]))
    return (4, 0)


def sort_findings(findings) -> list[Finding]:
    return sorted(
        findings,
        key=lambda f: (_location_rank(f.location), f.code, f.stmt or 0, f.message),
    )


@dataclass(frozen=True)
class EvaluationMatrix:
    syntax: int
    executability: float
    coverage: float
    semantic: float
    improvement: float
    verdict: str  # pass | revise | fail_syntax | not_executed
    findings: tuple[Finding, ...] = ()
    step_map: dict[int, int | None] = field(default_factory=dict)

    def scores(self) -> dict[str, float]:
        return {
            "syntax": self.syntax,
            "executability": self.executability,
            "coverage": self.coverage,
            "semantic": self.semantic,
            "improvement": self.improvement,
        }

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = dict(self.scores())
        d["verdict"] = self.verdict
        d["findings"] = [f.to_dict() for f in self.findings]
        d["step_map"] = {str(k): v for k, v in self.step_map.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvaluationMatrix":
        return cls(
            syntax=d["syntax"],
            executability=d["executability"],
            coverage=d["coverage"],
            semantic=d["semantic"],
            improvement=d["improvement"],
            verdict=d["verdict"],
            findings=tuple(Finding.from_dict(f) for f in d["findings"]),
            step_map={int(k): v for k, v in d.get("step_map", {}).items()},
        )


# -- coverage ----------------------------------------------------------------


def jaccard(a, b) -> float:
    a, b = set(a), set(b)
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def _step_tokens(step) -> set[str]:
    names = " ".join(
        s.call.name for s in step.statements if isinstance(s, (Let, Call))
    )
    return set(tokenize(step.title)) | set(tokenize(names))


def match_steps(spec: SpecDocument, script: TestScript) -> dict[int, int | None]:
    """Greedy spec-step -> script-step assignment by token Jaccard similarity."""
    candidates = {s.number: _step_tokens(s) for s in script.steps}
    mapping: dict[int, int | None] = {}
    for spec_step in spec.steps:
        action = set(tokenize(spec_step.action))
        best, best_sim = None, -1.0
        for number in sorted(candidates):
            sim = jaccard(action, candidates[number])
            if sim >= COVERAGE_MIN_SIMILARITY and sim > best_sim:
                best, best_sim = number, sim
        mapping[spec_step.index] = best
        if best is not None:
            del candidates[best]
    return mapping


def _coverage_from_map(spec: SpecDocument, mapping) -> tuple[float, list[Finding]]:
    findings = [
        Finding(
            "COV-MISSED-STEP",
            f"spec step {s.index}",
            f"no script step implements spec step {s.index}: {s.action!r}",
            subject=s.action,
        )
        for s in spec.steps
        if mapping[s.index] is None
    ]
    matched = sum(1 for v in mapping.values() if v is not None)
    return matched / len(spec.steps), findings


def eval_coverage(spec: SpecDocument, script: TestScript) -> tuple[float, list[Finding]]:
    return _coverage_from_map(spec, match_steps(spec, script))


# -- semantic correctness ----------------------------------------------------


def eval_semantic(
    spec: SpecDocument,
    script: TestScript,
    log: ExecutionLog,
    mapping: dict[int, int | None] | None = None,
) -> tuple[float, list[Finding]]:
    mapping = match_steps(spec, script) if mapping is None else mapping
    steps = {s.number: s for s in script.steps}
    satisfied = 0
    findings = []
    for spec_step in spec.steps:
        number = mapping[spec_step.index]
        if number is None:
            continue
        block = steps[number]
        label = f"step {number}"
        outcomes = {e.stmt: e.outcome for e in log.for_block(label)}
        asserts = [i for i, s in enumerate(block.statements, 1) if isinstance(s, Assert)]
        if not asserts:
            reason = "has no assertion"
        elif all(outcomes.get(i) == "ok" for i in asserts):
            satisfied += 1
            continue
        else:
            failed = [i for i in asserts if outcomes.get(i) != "ok"]
            reason = "assertion(s) at statement " + ", ".join(map(str, failed)) + " did not pass"
        findings.append(
            Finding(
                "SEM-FAILED-STEP",
                label,
                f"spec step {spec_step.index} is covered by {label} but {reason}",
                subject=str(spec_step.index),
            )
        )
    return satisfied / len(spec.steps), findings


# -- improvement potential ---------------------------------------------------


def _same_literal(a, b) -> bool:
    return type(a) is type(b) and a == b


def eval_improvement(
    script: TestScript, registry: dict[str, ApiDef] | None = None
) -> tuple[float, list[Finding]]:
    registry = default_registry() if registry is None else registry
    findings: list[Finding] = []
    bound_values = [v for _, v in script.data]

    for step in script.steps:
        label = f"step {step.number}"
        for i, stmt in enumerate(step.statements, 1):
            if not isinstance(stmt, (Let, Call)):
                continue
            for arg in stmt.call.args:
                if isinstance(arg, Var) or isinstance(arg, bool):
                    continue
                if not any(_same_literal(arg, v) for v in bound_values):
                    findings.append(
                        Finding(
                            "L1-HARDCODED",
                            label,
                            f"literal {arg!r} in call to {stmt.call.name} is not bound in the data block",
                            stmt=i,
                            subject=repr(arg),
                        )
                    )
        if not any(isinstance(s, Assert) for s in step.statements):
            findings.append(Finding("L2-NO-ASSERT", label, f"{label} has no assertion"))

    if not script.teardown:
        findings.append(Finding("L3-NO-TEARDOWN", "script", "script has no teardown block"))

    for u in check_api_names(script, registry):
        message = u.message
        if u.expected_arity is None:
            hit = nearest_api(u.name, registry)
            message += f" (nearest: {hit[0]})" if hit else " (no registry API within edit distance 2)"
        findings.append(Finding("L4-UNKNOWN-API", u.block, message, stmt=u.stmt, subject=u.name))

    for label, stmts in script.blocks():
        if label == "data":
            continue
        for i in range(1, len(stmts)):
            if stmts[i] == stmts[i - 1] and type(stmts[i]) is type(stmts[i - 1]):
                findings.append(
                    Finding(
                        "L5-DUPLICATE-STMT",
                        label,
                        f"statement repeated: {render_statement(stmts[i])}",
                        stmt=i + 1,
                    )
                )

    score = max(Fraction(0), 1 - IMPROVEMENT_PENALTY * len(findings))
    return float(score), findings


# -- executability / verdict -------------------------------------------------


def eval_executability(script: TestScript, log: ExecutionLog) -> float:
    blocks = script.blocks()
    completed = 0
    for label, stmts in blocks:
        entries = log.for_block(label)
        if len(entries) == len(stmts) and all(e.outcome != "runtime_error" for e in entries):
            completed += 1
    return completed / len(blocks)


def evaluate(
    spec: SpecDocument,
    script_text: str,
    log: ExecutionLog | None,
    registry: dict[str, ApiDef] | None = None,
    thresholds: Thresholds = Thresholds(),
) -> EvaluationMatrix:
    registry = default_registry() if registry is None else registry
    try:
        script = parse_script(script_text)
    except ParseError as exc:
        finding = Finding("SYN-PARSE-ERROR", "script", f"parse error at line {exc.line}: {exc.message}", stmt=exc.line)
        return EvaluationMatrix(0, 0.0, 0.0, 0.0, 0.0, "fail_syntax", (finding,))

    mapping = match_steps(spec, script)
    coverage, findings = _coverage_from_map(spec, mapping)
    improvement, lint = eval_improvement(script, registry)
    findings += lint

    if log is None:
        return EvaluationMatrix(
            1, 0.0, coverage, 0.0, improvement, "not_executed",
            tuple(sort_findings(findings)), mapping,
        )

    executability = eval_executability(script, log)
    semantic, sem_findings = eval_semantic(spec, script, log, mapping)
    findings += sem_findings
    passed = (
        executability == 1.0
        and coverage >= thresholds.coverage
        and semantic >= thresholds.semantic
    )
    return EvaluationMatrix(
        1,
        executability,
        coverage,
        semantic,
        improvement,
        "pass" if passed else "revise",
        tuple(sort_findings(findings)),
        mapping,
    )

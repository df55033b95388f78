"""Candidate script generation, prompt assembly, and finding-driven repair."""

from __future__ import annotations

import re
import urllib.error
import urllib.request
from dataclasses import dataclass, replace
from typing import Protocol

from specpilot.errors import TransportError
from specpilot.exec_harness import ApiDef, default_registry
from specpilot.retrieval import HistoricalPair, tokenize
from specpilot.script_dsl import (
    GRAMMAR,
    Assert,
    Call,
    CallExpr,
    Comment,
    FieldRef,
    Let,
    StepBlock,
    TestScript,
    Var,
    parse_script,
    render_script,
    render_statement,
    variables_referenced,
)
from specpilot.spec_model import SpecDocument, serialize_spec

MAX_REPAIR_DISTANCE = 2
NO_ASSERT_NOTE = "no assertion: expected result is not checked"
UNRESOLVED_PREFIX = "unresolved: "

_ACTION_LITERAL_RE = re.compile(r'"([^"]*)"|\b(\d+)\b|\b([A-Z][A-Z0-9]+)\b')


@dataclass(frozen=True)
class GenerationRequest:
    spec: SpecDocument
    retrieved: tuple[tuple[HistoricalPair, float], ...] = ()
    prior_findings: tuple = ()
    iteration: int = 1

    def __post_init__(self):
        if self.iteration < 1:
            raise ValueError("iteration must be >= 1")
        scores = [s for _, s in self.retrieved]
        if scores != sorted(scores, reverse=True):
            raise ValueError("retrieved pairs must be sorted by descending score")


class GenerationBackend(Protocol):
    def generate(self, request: GenerationRequest) -> str: ...


# -- template backend --------------------------------------------------------


def _api_for_action(action: str, registry: dict[str, ApiDef]) -> str | None:
    words = set(tokenize(action))
    best, best_len = None, 0
    for name in registry:
        api_words = tokenize(name.replace("_", " "))
        if api_words and set(api_words) <= words and len(api_words) > best_len:
            best, best_len = name, len(api_words)
    return best


def _action_literals(action: str) -> list:
    out = []
    for m in _ACTION_LITERAL_RE.finditer(action):
        quoted, number, code = m.groups()
        if quoted is not None:
            out.append(quoted)
        elif number is not None:
            out.append(int(number))
        else:
            out.append(code)
    return out


def _stub_statements(
    number: int, action: str, data_names: list[str], registry: dict[str, ApiDef]
) -> tuple:
    api = _api_for_action(action, registry)
    if api is None:
        return (Comment(" ".join(action.split())),)
    params = registry[api].params
    pool: list = [Var(n) for n in data_names if n not in params] + _action_literals(action)
    args = []
    for p in params:
        if p in data_names:
            args.append(Var(p))
        elif pool:
            args.append(pool.pop(0))
    var = f"r{number}"
    return (
        Let(var, CallExpr(api, tuple(args))),
        Assert(FieldRef(var, "status"), "==", "OK"),
    )


def generate_template(
    request: GenerationRequest, registry: dict[str, ApiDef] | None = None
) -> str:
    """Adapt the best retrieved script to *request.spec*.

    The top-ranked pair's script is copied, re-keyed, re-bound to the spec's
    test data, and aligned to the spec's steps by index. Spec steps with no
    counterpart get a stub built from the registry API named in the action
    text, or a comment when no API is named. Without any retrieved pair the
    result is a skeleton of stub steps.
    """
    registry = default_registry() if registry is None else registry
    spec = request.spec
    if request.retrieved:
        base = parse_script(request.retrieved[0][0].script_text)
    else:
        base = None
    base_steps = base.steps if base else ()
    setup = base.setup if base else ()
    teardown = base.teardown if base else ()

    aligned = [s.statements for s in base_steps[: len(spec.steps)]]
    referenced = variables_referenced(
        [*setup, *teardown, *(st for stmts in aligned for st in stmts)]
    )

    data = list(base.data) if base else []
    names = [n for n, _ in data]
    for name, value in spec.test_data.items():
        if name in names:
            data[names.index(name)] = (name, value)
        else:
            data.append((name, value))
            names.append(name)
    data = [(n, v) for n, v in data if n in spec.test_data or n in referenced]
    data_names = [n for n, _ in data]

    steps = []
    for i, spec_step in enumerate(spec.steps, 1):
        if i <= len(aligned):
            stmts = aligned[i - 1]
        else:
            stmts = _stub_statements(i, spec_step.action, data_names, registry)
        steps.append(StepBlock(i, " ".join(spec_step.action.split()), tuple(stmts)))

    script = TestScript(
        header_key=spec.key,
        steps=tuple(steps),
        data=tuple(data),
        setup=setup,
        teardown=teardown,
    )
    return render_script(script)


class TemplateBackend:
    """Deterministic retrieval-and-adapt backend."""

    def __init__(self, registry: dict[str, ApiDef] | None = None):
        self.registry = default_registry() if registry is None else registry

    def generate(self, request: GenerationRequest) -> str:
        return generate_template(request, self.registry)


# -- prompt assembly / remote backend ----------------------------------------

INSTRUCTION = (
    "Write exactly one complete test script in the grammar above that implements "
    "every step of the specification, binds all test data in a data block, and "
    "asserts each expected result. Reply with the script only."
)


def _section(name: str) -> str:
    return f"=== {name} ==="


def assemble_prompt(request: GenerationRequest) -> str:
    parts = [_section("SPECIFICATION"), serialize_spec(request.spec).rstrip("\n"), ""]
    parts.append(_section("EXAMPLES"))
    for n, (pair, score) in enumerate(request.retrieved, 1):
        parts.append(f"--- EXAMPLE {n}: {pair.key} (score {score:.6f}, {pair.outcome_tag}) ---")
        parts.append(serialize_spec(pair.spec).rstrip("\n"))
        parts.append(pair.script_text.rstrip("\n"))
    parts.append("")
    parts.append(_section("GRAMMAR"))
    parts.append(GRAMMAR.rstrip("\n"))
    parts.append("")
    if request.prior_findings:
        parts.append(_section("FINDINGS"))
        for f in request.prior_findings:
            parts.append(f"- {f.code} @ {f.location}: {f.message}")
        parts.append("")
    parts.append(_section("INSTRUCTION"))
    parts.append(INSTRUCTION)
    return "\n".join(parts) + "\n"


class RemoteBackend:
    """Plain-text POST of the assembled prompt; the response body is the script."""

    def __init__(self, url: str, timeout_s: float = 120.0):
        self.url = url
        self.timeout_s = timeout_s

    def generate(self, request: GenerationRequest) -> str:
        req = urllib.request.Request(
            self.url,
            data=assemble_prompt(request).encode("utf-8"),
            headers={"Content-Type": "text/plain; charset=utf-8"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                return resp.read().decode("utf-8")
        except (urllib.error.URLError, OSError, UnicodeDecodeError) as exc:
            raise TransportError(f"generation backend at {self.url} failed: {exc}") from exc


# -- API name repair ---------------------------------------------------------


def levenshtein(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def nearest_api(name: str, registry: dict[str, ApiDef]) -> tuple[str, int] | None:
    ranked = sorted((levenshtein(name, api), api) for api in registry)
    if not ranked or ranked[0][0] > MAX_REPAIR_DISTANCE:
        return None
    dist, api = ranked[0]
    return api, dist


def _downgrade(stmt) -> Comment:
    return Comment(UNRESOLVED_PREFIX + render_statement(stmt))


def _fix_call(stmt, registry: dict[str, ApiDef]):
    call = stmt.call
    api = registry.get(call.name)
    if api is None:
        hit = nearest_api(call.name, registry)
        if hit is not None and registry[hit[0]].arity == len(call.args):
            new_call = replace(call, name=hit[0])
            return replace(stmt, call=new_call)
    elif api.arity == len(call.args):
        return stmt
    return _downgrade(stmt)


def repair(script: TestScript, findings, registry: dict[str, ApiDef] | None = None) -> TestScript:
    """Apply the deterministic fixes that the evaluator's findings call for.

    Handles unknown/mis-aritied API calls, assertion-less steps and a missing
    teardown; every other finding is left for a human. Re-applying the same
    findings to the result is a no-op.
    """
    registry = default_registry() if registry is None else registry
    setup = list(script.setup)
    teardown = list(script.teardown)
    steps = {s.number: list(s.statements) for s in script.steps}

    def block(label: str) -> list | None:
        if label == "setup":
            return setup
        if label == "teardown":
            return teardown
        if label.startswith("step "):
            return steps.get(int(label[5:]))
        return None

    for f in findings:
        if f.code == "L4-UNKNOWN-API":
            stmts = block(f.location)
            if stmts is None or not f.stmt or f.stmt > len(stmts):
                continue
            stmt = stmts[f.stmt - 1]
            if isinstance(stmt, (Let, Call)) and stmt.call.name == f.subject:
                stmts[f.stmt - 1] = _fix_call(stmt, registry)
        elif f.code == "L2-NO-ASSERT":
            stmts = block(f.location)
            if stmts is None or any(isinstance(s, Assert) for s in stmts):
                continue
            bound = [s.name for s in stmts if isinstance(s, Let)]
            if bound:
                stmts.append(Assert(FieldRef(bound[-1], "status"), "==", "OK"))
            elif stmts[-1] != Comment(NO_ASSERT_NOTE):
                stmts.append(Comment(NO_ASSERT_NOTE))
        elif f.code == "L3-NO-TEARDOWN":
            if not teardown:
                teardown.append(Call(CallExpr("reset_system")))

    return TestScript(
        header_key=script.header_key,
        steps=tuple(StepBlock(s.number, s.title, tuple(steps[s.number])) for s in script.steps),
        data=script.data,
        setup=tuple(setup),
        teardown=tuple(teardown),
    )

"""Sandboxed script execution against a simulated journey-planning system.

The local executor interprets a parsed ``TestScript`` statement by statement
and records one ``LogEntry`` per attempted statement. Assertion failures are
logged and execution continues; runtime errors abort the rest of the current
block and execution resumes at the next block. Every execution owns a fresh
``SutState``.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Protocol

from specpilot.errors import TransportError
from specpilot.script_dsl import (
    Assert,
    Call,
    CallExpr,
    Comment,
    FieldRef,
    Let,
    TestScript,
    Var,
    call_sites,
    parse_script,
    render_binding,
    render_statement,
)
from specpilot.spec_model import CiConfig

Clock = Callable[[], datetime]


def system_clock() -> datetime:
    return datetime.now(timezone.utc)


class FixedClock:
    """A clock that always reports the same instant (for reproducible artifacts)."""

    def __init__(self, instant: datetime | str):
        if isinstance(instant, str):
            instant = datetime.fromisoformat(instant.replace("Z", "+00:00"))
        if instant.tzinfo is None:
            instant = instant.replace(tzinfo=timezone.utc)
        self.instant = instant.astimezone(timezone.utc)

    def __call__(self) -> datetime:
        return self.instant


def iso(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# -- API registry ------------------------------------------------------------


@dataclass(frozen=True)
class ApiDef:
    params: tuple[str, ...]
    results: tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.params)


ApiRegistry = dict  # name -> ApiDef; treated as immutable


def default_registry() -> dict[str, ApiDef]:
    return {
        "reset_system": ApiDef((), ("status",)),
        "add_train": ApiDef(
            ("id", "origin", "dest", "dep_min", "arr_min"), ("status",)
        ),
        "cancel_train": ApiDef(("id",), ("status",)),
        "get_train": ApiDef(
            ("id",), ("status", "origin", "dest", "dep_min", "arr_min")
        ),
        "query_connection": ApiDef(
            ("origin", "dest"), ("status", "count", "earliest_dep", "latest_arr")
        ),
    }


@dataclass(frozen=True)
class UnknownApi:
    block: str
    stmt: int
    name: str
    arg_count: int
    expected_arity: int | None  # None when the name itself is unknown

    @property
    def message(self) -> str:
        if self.expected_arity is None:
            return f"unknown API {self.name!r}"
        return (
            f"API {self.name!r} called with {self.arg_count} argument(s), "
            f"expected {self.expected_arity}"
        )


def check_api_names(script: TestScript, registry: dict[str, ApiDef]) -> list[UnknownApi]:
    findings = []
    for label, i, call in call_sites(script):
        api = registry.get(call.name)
        if api is None:
            findings.append(UnknownApi(label, i, call.name, len(call.args), None))
        elif api.arity != len(call.args):
            findings.append(UnknownApi(label, i, call.name, len(call.args), api.arity))
    return findings


# -- simulated system under test ---------------------------------------------


@dataclass
class Train:
    origin: str
    dest: str
    dep_min: int
    arr_min: int
    cancelled: bool = False


@dataclass
class SutState:
    trains: dict[str, Train] = field(default_factory=dict)


_SUT_TYPES = {
    "reset_system": (),
    "add_train": (str, str, str, int, int),
    "cancel_train": (str,),
    "get_train": (str,),
    "query_connection": (str, str),
}


class _RuntimeFault(Exception):
    pass


def _sut_call(state: SutState, name: str, args: list) -> dict[str, Any]:
    types = _SUT_TYPES.get(name)
    if types is None:
        raise _RuntimeFault(f"unknown API {name!r}")
    if len(args) != len(types):
        raise _RuntimeFault(f"{name} expects {len(types)} argument(s), got {len(args)}")
    for pos, (arg, typ) in enumerate(zip(args, types), 1):
        if isinstance(arg, bool) or not isinstance(arg, typ):
            raise _RuntimeFault(f"{name} argument {pos} must be {typ.__name__}")

    if name == "reset_system":
        state.trains.clear()
        return {"status": "OK"}
    if name == "add_train":
        tid, origin, dest, dep, arr = args
        if dep >= arr or tid in state.trains:
            return {"status": "ERR"}
        state.trains[tid] = Train(origin, dest, dep, arr)
        return {"status": "OK"}
    if name == "cancel_train":
        train = state.trains.get(args[0])
        if train is None:
            return {"status": "NOT_FOUND"}
        train.cancelled = True
        return {"status": "OK"}
    if name == "get_train":
        train = state.trains.get(args[0])
        if train is None:
            return {"status": "NOT_FOUND"}
        return {
            "status": "OK",
            "origin": train.origin,
            "dest": train.dest,
            "dep_min": train.dep_min,
            "arr_min": train.arr_min,
        }
    # query_connection: direct trains only
    origin, dest = args
    hits = [
        t
        for t in state.trains.values()
        if not t.cancelled and t.origin == origin and t.dest == dest
    ]
    return {
        "status": "OK",
        "count": len(hits),
        "earliest_dep": min((t.dep_min for t in hits), default=0),
        "latest_arr": max((t.arr_min for t in hits), default=0),
    }


# -- execution log -----------------------------------------------------------


@dataclass(frozen=True)
class LogEntry:
    block: str
    stmt: int
    text: str
    outcome: str  # ok | assert_fail | runtime_error
    detail: str = ""
    values: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "block": self.block,
            "stmt": self.stmt,
            "text": self.text,
            "outcome": self.outcome,
            "detail": self.detail,
            "values": self.values,
        }


@dataclass(frozen=True)
class ExecutionLog:
    entries: tuple[LogEntry, ...]
    started_at: str | None = None
    finished_at: str | None = None

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(e.to_dict(), ensure_ascii=False, sort_keys=False) + "\n"
            for e in self.entries
        )

    @classmethod
    def from_jsonl(cls, text: str) -> "ExecutionLog":
        entries = []
        for line in text.split("\n"):
            if line.strip():
                d = json.loads(line)
                entries.append(
                    LogEntry(d["block"], d["stmt"], d["text"], d["outcome"], d["detail"], d["values"])
                )
        return cls(tuple(entries))

    def for_block(self, label: str) -> list[LogEntry]:
        return [e for e in self.entries if e.block == label]


_COMPARATORS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def _kind(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, str):
        return "str"
    return "result"


def _resolve(env: dict[str, Any], operand):
    if isinstance(operand, Var):
        if operand.name not in env:
            raise _RuntimeFault(f"unbound variable {operand.name!r}")
        return env[operand.name]
    if isinstance(operand, FieldRef):
        if operand.var not in env:
            raise _RuntimeFault(f"unbound variable {operand.var!r}")
        target = env[operand.var]
        if not isinstance(target, dict):
            raise _RuntimeFault(f"{operand.var!r} is not a call result")
        if operand.field not in target:
            raise _RuntimeFault(f"result {operand.var!r} has no field {operand.field!r}")
        return target[operand.field]
    return operand


def _invoke(state: SutState, env: dict[str, Any], call: CallExpr) -> dict[str, Any]:
    args = [_resolve(env, a) for a in call.args]
    for a in args:
        if isinstance(a, dict):
            raise _RuntimeFault(f"{call.name}: a call result cannot be passed as an argument")
    return _sut_call(state, call.name, args)


def _run_statement(state: SutState, env: dict[str, Any], stmt) -> tuple[str, str, dict]:
    if isinstance(stmt, Comment):
        return "ok", "comment", {}
    if isinstance(stmt, Let):
        result = _invoke(state, env, stmt.call)
        env[stmt.name] = result
        return "ok", "", dict(result)
    if isinstance(stmt, Call):
        result = _invoke(state, env, stmt.call)
        return "ok", "", dict(result)
    if isinstance(stmt, Assert):
        left = _resolve(env, stmt.left)
        right = _resolve(env, stmt.right)
        lk, rk = _kind(left), _kind(right)
        if lk != rk or lk == "result":
            raise _RuntimeFault(f"type mismatch in comparison ({lk} {stmt.op} {rk})")
        if lk == "bool" and stmt.op not in ("==", "!="):
            raise _RuntimeFault(f"operator {stmt.op} not defined on booleans")
        values = {"left": left, "right": right}
        if _COMPARATORS[stmt.op](left, right):
            return "ok", "", values
        return "assert_fail", f"expected {left!r} {stmt.op} {right!r}", values
    raise TypeError(f"not a statement: {stmt!r}")


def execute_script(
    script: TestScript,
    registry: dict[str, ApiDef] | None = None,
    clock: Clock = system_clock,
) -> ExecutionLog:
    """Run *script* against a fresh simulated system and return its log.

    API names are resolved against the simulated system's implementation;
    *registry* is only consulted to reject names it does not list.
    """
    registry = default_registry() if registry is None else registry
    started = iso(clock())
    state = SutState()
    env: dict[str, Any] = {}
    entries: list[LogEntry] = []

    for label, stmts in script.blocks():
        if label == "data":
            for i, (name, value) in enumerate(stmts, 1):
                env[name] = value
                entries.append(
                    LogEntry(label, i, render_binding(name, value), "ok", "", {name: value})
                )
            continue
        for i, stmt in enumerate(stmts, 1):
            text = render_statement(stmt)
            try:
                if isinstance(stmt, (Let, Call)) and stmt.call.name not in registry:
                    raise _RuntimeFault(f"unknown API {stmt.call.name!r}")
                outcome, detail, values = _run_statement(state, env, stmt)
            except _RuntimeFault as exc:
                entries.append(LogEntry(label, i, text, "runtime_error", str(exc), {}))
                break
            entries.append(LogEntry(label, i, text, outcome, detail, values))

    return ExecutionLog(tuple(entries), started, iso(clock()))


# -- executor contract -------------------------------------------------------


class CiExecutor(Protocol):
    def availability(self) -> bool: ...

    def execute(self, script_text: str, ci_config: CiConfig) -> ExecutionLog: ...


class LocalExecutor:
    """In-process sandbox executor; always available."""

    def __init__(self, registry: dict[str, ApiDef] | None = None, clock: Clock = system_clock):
        self.registry = default_registry() if registry is None else registry
        self.clock = clock

    def availability(self) -> bool:
        return True

    def execute(self, script_text: str, ci_config: CiConfig) -> ExecutionLog:
        return execute_script(parse_script(script_text), self.registry, self.clock)


class UnavailableExecutor:
    """Stands in for a CI system that is down; ``execute`` must never be reached."""

    def availability(self) -> bool:
        return False

    def execute(self, script_text: str, ci_config: CiConfig) -> ExecutionLog:
        raise TransportError("CI executor is unavailable")


class RemoteCiExecutor:
    """HTTP client for a CI job endpoint.

    ``GET {base_url}/health`` answers 200 when the CI system accepts jobs.
    ``POST {base_url}/job/{job}/run`` takes the script as a plain-text body and
    returns the execution log as JSON Lines. ``timeout_s`` from the spec's CI
    configuration bounds the request.
    """

    def __init__(self, base_url: str, health_timeout_s: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.health_timeout_s = health_timeout_s

    def availability(self) -> bool:
        try:
            with urllib.request.urlopen(
                self.base_url + "/health", timeout=self.health_timeout_s
            ) as resp:
                return resp.status == 200
        except (urllib.error.URLError, OSError):
            return False

    def execute(self, script_text: str, ci_config: CiConfig) -> ExecutionLog:
        req = urllib.request.Request(
            f"{self.base_url}/job/{ci_config.job}/run",
            data=script_text.encode("utf-8"),
            headers={"Content-Type": "text/plain; charset=utf-8"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=ci_config.timeout_s) as resp:
                body = resp.read().decode("utf-8")
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(f"CI job {ci_config.job!r} failed: {exc}") from exc
        try:
            return ExecutionLog.from_jsonl(body)
        except (ValueError, KeyError) as exc:
            raise TransportError(f"CI job {ci_config.job!r} returned a malformed log") from exc

"""Xray-style test specifications: parsing, validation, and batch loading.

A specification file holds one JSON object::

    {"key": "HAC-101", "summary": "...", "functional_area": "timetable",
     "story_points": 3, "clarity": "A",
     "ci_config": {"job": "systest", "timeout_s": 60},
     "test_data": {"origin": "HNV", "dest": "BER"},
     "steps": [{"index": 1, "action": "...", "expected": "..."}]}

Keys outside this set are kept verbatim in ``SpecDocument.extra`` so that a
parse/serialize round trip never loses information.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Union

from specpilot.errors import SpecPilotError

Literal = Union[str, int, bool]

KEY_PATTERN = re.compile(r"[A-Z]+-[0-9]+")
DATA_NAME_PATTERN = re.compile(r"[a-z][a-z0-9_]*")
STORY_POINT_RANGE = (3, 8)

_KNOWN_KEYS = (
    "key",
    "summary",
    "functional_area",
    "story_points",
    "clarity",
    "ci_config",
    "test_data",
    "steps",
)


class SpecParseError(SpecPilotError):
    """Base class for everything ``parse_spec`` can reject."""


class SpecSyntaxError(SpecParseError):
    def __init__(self, position: int, message: str):
        super().__init__(f"malformed JSON at offset {position}: {message}")
        self.position = position


class MissingField(SpecParseError):
    def __init__(self, name: str):
        super().__init__(f"missing required field {name!r}")
        self.name = name


class InvalidClarity(SpecParseError):
    def __init__(self, value: object):
        super().__init__(f"clarity must be one of A, B, C, D (got {value!r})")
        self.value = value


class BadStepIndices(SpecParseError):
    def __init__(self, indices: list):
        super().__init__(f"step indices must be 1..n in order (got {indices})")
        self.indices = indices


class SpecFormatError(SpecParseError):
    """A field is present but has the wrong type or shape."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


class InputFolderError(SpecPilotError):
    pass


class ClarityRating(str, Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"

    @property
    def meaning(self) -> str:
        return _CLARITY_MEANINGS[self]


_CLARITY_MEANINGS = {
    ClarityRating.A: "clear & complete",
    ClarityRating.B: "minor gaps",
    ClarityRating.C: "vague expectations",
    ClarityRating.D: "unclear or mixed actions",
}


@dataclass(frozen=True)
class CiConfig:
    job: str
    timeout_s: int


@dataclass(frozen=True)
class SpecStep:
    index: int
    action: str
    expected: str = ""


@dataclass(frozen=True)
class SpecDocument:
    key: str
    summary: str
    functional_area: str
    story_points: int
    clarity: ClarityRating
    ci_config: CiConfig
    test_data: dict[str, Literal]
    steps: tuple[SpecStep, ...]
    extra: dict[str, Any] = field(default_factory=dict)

    def indexable_text(self) -> str:
        parts = [self.summary]
        parts.extend(s.action for s in self.steps)
        parts.extend(s.expected for s in self.steps)
        return "\n".join(parts)


@dataclass(frozen=True)
class ValidationFinding:
    level: str  # "warning" | "error"
    code: str
    message: str
    location: str


@dataclass(frozen=True)
class SkippedFile:
    path: str
    reason: str


# -- parsing -----------------------------------------------------------------


def _no_duplicate_keys(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise SpecFormatError(k, "duplicate JSON key")
        out[k] = v
    return out


def _require(obj: dict, name: str, prefix: str = "") -> Any:
    if name not in obj:
        raise MissingField(prefix + name)
    return obj[name]


def _is_int(v: object) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _expect_str(value: object, location: str) -> str:
    if not isinstance(value, str):
        raise SpecFormatError(location, "expected a string")
    return value


def _expect_int(value: object, location: str) -> int:
    if not _is_int(value):
        raise SpecFormatError(location, "expected an integer")
    return value


def spec_from_dict(obj: Any) -> SpecDocument:
    if not isinstance(obj, dict):
        raise SpecFormatError("$", "expected a JSON object")

    key = _expect_str(_require(obj, "key"), "key")
    summary = _expect_str(_require(obj, "summary"), "summary")
    area = _expect_str(_require(obj, "functional_area"), "functional_area")
    story_points = _expect_int(_require(obj, "story_points"), "story_points")

    raw_clarity = _require(obj, "clarity")
    try:
        clarity = ClarityRating(raw_clarity)
    except (ValueError, TypeError):
        raise InvalidClarity(raw_clarity) from None

    raw_ci = _require(obj, "ci_config")
    if not isinstance(raw_ci, dict):
        raise SpecFormatError("ci_config", "expected an object")
    ci = CiConfig(
        job=_expect_str(_require(raw_ci, "job", "ci_config."), "ci_config.job"),
        timeout_s=_expect_int(
            _require(raw_ci, "timeout_s", "ci_config."), "ci_config.timeout_s"
        ),
    )

    raw_data = obj.get("test_data", {})
    if not isinstance(raw_data, dict):
        raise SpecFormatError("test_data", "expected an object")
    for name, value in raw_data.items():
        if not isinstance(value, (str, int, bool)):
            raise SpecFormatError(
                f"test_data.{name}", "values must be strings, integers or booleans"
            )

    raw_steps = _require(obj, "steps")
    if not isinstance(raw_steps, list):
        raise SpecFormatError("steps", "expected a list")
    if not raw_steps:
        raise SpecFormatError("steps", "at least one step is required")
    steps = []
    for pos, raw in enumerate(raw_steps):
        where = f"steps[{pos}]"
        if not isinstance(raw, dict):
            raise SpecFormatError(where, "expected an object")
        index = _expect_int(_require(raw, "index", where + "."), where + ".index")
        action = _expect_str(_require(raw, "action", where + "."), where + ".action")
        expected = _expect_str(raw.get("expected", ""), where + ".expected")
        if not action.strip():
            raise SpecFormatError(where + ".action", "must not be empty")
        steps.append(SpecStep(index, action, expected))
    indices = [s.index for s in steps]
    if indices != list(range(1, len(steps) + 1)):
        raise BadStepIndices(indices)

    extra = {k: v for k, v in obj.items() if k not in _KNOWN_KEYS}
    return SpecDocument(
        key=key,
        summary=summary,
        functional_area=area,
        story_points=story_points,
        clarity=clarity,
        ci_config=ci,
        test_data=dict(raw_data),
        steps=tuple(steps),
        extra=extra,
    )


def parse_spec(json_text: str) -> SpecDocument:
    try:
        obj = json.loads(json_text, object_pairs_hook=_no_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise SpecSyntaxError(exc.pos, exc.msg) from None
    return spec_from_dict(obj)


def spec_to_dict(doc: SpecDocument) -> dict[str, Any]:
    out: dict[str, Any] = {
        "key": doc.key,
        "summary": doc.summary,
        "functional_area": doc.functional_area,
        "story_points": doc.story_points,
        "clarity": doc.clarity.value,
        "ci_config": {"job": doc.ci_config.job, "timeout_s": doc.ci_config.timeout_s},
        "test_data": dict(doc.test_data),
        "steps": [
            {"index": s.index, "action": s.action, "expected": s.expected}
            for s in doc.steps
        ],
    }
    out.update(doc.extra)
    return out


def serialize_spec(doc: SpecDocument) -> str:
    """Canonical JSON text for *doc*; ``parse_spec`` inverts it exactly."""
    return json.dumps(spec_to_dict(doc), indent=2, ensure_ascii=False) + "\n"


# -- validation --------------------------------------------------------------


def validate_spec(doc: SpecDocument) -> list[ValidationFinding]:
    findings: list[ValidationFinding] = []

    def add(level, code, message, location):
        findings.append(ValidationFinding(level, code, message, location))

    if not KEY_PATTERN.fullmatch(doc.key):
        add("error", "E-KEY-PATTERN", f"key {doc.key!r} does not match [A-Z]+-[0-9]+", "key")
    if not doc.summary.strip():
        add("warning", "W-NO-SUMMARY", "summary is empty", "summary")
    lo, hi = STORY_POINT_RANGE
    if not lo <= doc.story_points <= hi:
        add(
            "warning",
            "W-SP-RANGE",
            f"story points {doc.story_points} outside nominal range {lo}-{hi}",
            "story_points",
        )
    if doc.ci_config.timeout_s < 1:
        add("error", "E-CI-TIMEOUT", "timeout_s must be at least 1", "ci_config.timeout_s")
    if not doc.ci_config.job.strip():
        add("error", "E-CI-JOB", "CI job name is empty", "ci_config.job")
    for name in doc.test_data:
        if not DATA_NAME_PATTERN.fullmatch(name):
            add(
                "error",
                "E-DATA-NAME",
                f"test data name {name!r} does not match [a-z][a-z0-9_]*",
                f"test_data.{name}",
            )
    for step in doc.steps:
        if not step.expected.strip():
            add(
                "warning",
                "W-NO-EXPECTED",
                f"step {step.index} has no expected result",
                f"steps[{step.index}].expected",
            )
    findings.sort(key=lambda f: (f.location, f.code))
    return findings


def has_errors(findings: list[ValidationFinding]) -> bool:
    return any(f.level == "error" for f in findings)


# -- batch loading -----------------------------------------------------------


def load_spec_batch(folder: str | Path) -> tuple[list[SpecDocument], list[SkippedFile]]:
    """Parse every ``*.json`` file in *folder*.

    Bad files never abort the batch; they are reported as ``SkippedFile``
    records. Documents come back sorted by key; the second file claiming an
    already-seen key is skipped.
    """
    folder = Path(folder)
    if not folder.is_dir():
        raise InputFolderError(f"input folder {str(folder)!r} does not exist")
    try:
        entries = sorted(p for p in folder.iterdir() if p.is_file())
    except OSError as exc:
        raise InputFolderError(f"cannot read input folder {str(folder)!r}: {exc}") from exc

    docs: dict[str, SpecDocument] = {}
    skipped: list[SkippedFile] = []
    for path in entries:
        if path.suffix != ".json":
            skipped.append(SkippedFile(path.name, "not a JSON file"))
            continue
        try:
            doc = parse_spec(path.read_text(encoding="utf-8"))
        except (SpecParseError, UnicodeDecodeError, OSError) as exc:
            skipped.append(SkippedFile(path.name, f"{type(exc).__name__}: {exc}"))
            continue
        if doc.key in docs:
            skipped.append(SkippedFile(path.name, f"duplicate key {doc.key}"))
            continue
        docs[doc.key] = doc
    return [docs[k] for k in sorted(docs)], skipped

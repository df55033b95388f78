"""Human review: semantic-block diffs and the approval gate into the regression suite.

Nothing in the generation pipeline calls ``approve``; the regression
directory changes only when a named reviewer records a decision.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from specpilot.errors import SpecPilotError
from specpilot.evaluator import jaccard
from specpilot.exec_harness import Clock, iso, system_clock
from specpilot.script_dsl import SemanticBlock, TestScript, semantic_blocks

DECISIONS = ("accept", "refactor", "rewrite")
MODIFIED_MIN_JACCARD = 0.5
REGISTRY_FILE = "registry.jsonl"

_registry_lock = threading.Lock()


class ArtifactNotFound(SpecPilotError):
    pass


class AlreadyDecided(SpecPilotError):
    pass


class InvalidDecision(SpecPilotError, ValueError):
    pass


# -- block diff --------------------------------------------------------------


@dataclass(frozen=True)
class DiffEntry:
    generated: str | None
    refactored: str | None
    status: str  # unchanged | modified | removed | added


@dataclass(frozen=True)
class BlockDiff:
    entries: tuple[DiffEntry, ...]

    def counts(self) -> dict[str, int]:
        out = {"unchanged": 0, "modified": 0, "removed": 0, "added": 0}
        for e in self.entries:
            out[e.status] += 1
        return out

    def render(self) -> str:
        width = max([len(e.generated or "-") for e in self.entries] + [9])
        lines = [f"{'generated':<{width}}  {'refactored':<{width}}  status"]
        for e in self.entries:
            lines.append(f"{e.generated or '-':<{width}}  {e.refactored or '-':<{width}}  {e.status}")
        return "\n".join(lines)


def _lcs_pairs(a: list, b: list) -> list[tuple[int, int]]:
    n, m = len(a), len(b)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                table[i][j] = table[i + 1][j + 1] + 1
            else:
                table[i][j] = max(table[i + 1][j], table[i][j + 1])
    pairs = []
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j]:
            pairs.append((i, j))
            i += 1
            j += 1
        elif table[i + 1][j] >= table[i][j + 1]:
            i += 1
        else:
            j += 1
    return pairs


def _key(block: SemanticBlock) -> tuple:
    return (block.kind, block.normalized_tokens)


def diff_blocks(generated: TestScript, refactored: TestScript) -> BlockDiff:
    """Align the two scripts block by block.

    Exact token-sequence matches (longest common subsequence) are unchanged.
    Leftover blocks of the same kind pair up in order as modified when their
    token sets overlap by Jaccard >= 0.5; the rest are removed or added.
    """
    gen = semantic_blocks(generated)
    ref = semantic_blocks(refactored)
    pairs: dict[int, tuple[int, str]] = {
        i: (j, "unchanged") for i, j in _lcs_pairs([_key(b) for b in gen], [_key(b) for b in ref])
    }
    used_ref = {j for j, _ in pairs.values()}

    last_j = -1
    for i, g in enumerate(gen):
        if i in pairs:
            last_j = pairs[i][0]
            continue
        for j in range(last_j + 1, len(ref)):
            if j in used_ref:
                # crossing an exact match would break source order
                break
            r = ref[j]
            if r.kind == g.kind and jaccard(g.normalized_tokens, r.normalized_tokens) >= MODIFIED_MIN_JACCARD:
                pairs[i] = (j, "modified")
                used_ref.add(j)
                last_j = j
                break

    keyed: list[tuple[tuple, DiffEntry]] = []
    for i, g in enumerate(gen):
        if i in pairs:
            j, status = pairs[i]
            keyed.append(((i, 0, j), DiffEntry(g.label, ref[j].label, status)))
        else:
            keyed.append(((i, 0, -1), DiffEntry(g.label, None, "removed")))
    for j, r in enumerate(ref):
        if j in used_ref:
            continue
        anchor = max((i for i, (jj, _) in pairs.items() if jj < j), default=-1)
        keyed.append(((anchor, 1, j), DiffEntry(None, r.label, "added")))
    keyed.sort(key=lambda kv: kv[0])
    return BlockDiff(tuple(e for _, e in keyed))


def unchanged_fraction(diff: BlockDiff) -> float:
    generated = [e for e in diff.entries if e.generated is not None]
    if not generated:
        return 0.0
    return sum(1 for e in generated if e.status == "unchanged") / len(generated)


# -- approval gate -----------------------------------------------------------


@dataclass(frozen=True)
class ReviewDecision:
    kind: str
    reviewer: str
    timestamp: str

    def __post_init__(self):
        if self.kind not in DECISIONS:
            raise InvalidDecision(f"decision must be one of {', '.join(DECISIONS)}")
        if not self.reviewer or not self.reviewer.strip():
            raise InvalidDecision("a reviewer name is required")


def decision(kind: str, reviewer: str, clock: Clock = system_clock) -> ReviewDecision:
    return ReviewDecision(kind, reviewer, iso(clock()))


def read_registry(regression_dir: str | Path) -> list[dict[str, Any]]:
    path = Path(regression_dir) / REGISTRY_FILE
    if not path.exists():
        return []
    return [json.loads(ln) for ln in path.read_text(encoding="utf-8").split("\n") if ln.strip()]


def approve(
    regression_dir: str | Path,
    output_root: str | Path,
    spec_key: str,
    run_id: str,
    review: ReviewDecision,
    script_path: str | Path | None = None,
) -> dict[str, Any]:
    """Record a reviewer's decision for one spec of one run.

    ``accept`` and ``refactor`` promote a script into ``<regression_dir>/<KEY>.ats``:
    by default the run's final script, or *script_path* (typically the
    engineer's refactored version). ``rewrite`` only records the decision.
    """
    regression_dir = Path(regression_dir)
    spec_dir = Path(output_root) / "runs" / run_id / spec_key
    final_script = spec_dir / "final" / "script.ats"
    if not final_script.is_file():
        raise ArtifactNotFound(f"no final script for {spec_key} in run {run_id}")
    source = Path(script_path) if script_path is not None else final_script
    if not source.is_file():
        raise ArtifactNotFound(f"script {source} does not exist")

    with _registry_lock:
        for entry in read_registry(regression_dir):
            if entry["spec_key"] == spec_key and entry["run_id"] == run_id:
                raise AlreadyDecided(
                    f"{spec_key} in run {run_id} was already decided: {entry['decision']} "
                    f"by {entry['reviewer']}"
                )
        text = source.read_text(encoding="utf-8")
        promoted = None
        regression_dir.mkdir(parents=True, exist_ok=True)
        if review.kind in ("accept", "refactor"):
            target = regression_dir / f"{spec_key}.ats"
            target.write_text(text, encoding="utf-8")
            promoted = target.name
        entry = {
            "spec_key": spec_key,
            "run_id": run_id,
            "decision": review.kind,
            "reviewer": review.reviewer,
            "script_sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
            "promoted": promoted,
            "timestamp": review.timestamp,
        }
        with open(regression_dir / REGISTRY_FILE, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
    return entry

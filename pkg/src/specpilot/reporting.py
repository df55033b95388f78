"""Engineer and manager Markdown reports, plus automation-gap arithmetic."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import TYPE_CHECKING

from specpilot.errors import InvalidArgument, SpecPilotError
from specpilot.generator import nearest_api
from specpilot.exec_harness import default_registry

if TYPE_CHECKING:
    from specpilot.orchestrator import RunSummary, SpecRunResult
    from specpilot.review import BlockDiff

VERDICT_ORDER = ("pass", "revise", "fail_syntax", "not_executed")

SCORE_LABELS = (
    ("syntax", "Syntactical correctness"),
    ("executability", "Executability"),
    ("coverage", "Test-step coverage"),
    ("semantic", "Semantic correctness"),
    ("improvement", "Improvement potential"),
)

UNCHANGED_DEFINITION = (
    "Counted over semantic blocks (data, setup, each step, teardown) after "
    "removing comments and normalizing whitespace; a block is unchanged when "
    "its token sequence survives refactoring verbatim."
)


class EmptySuite(SpecPilotError):
    pass


# -- gap metrics -------------------------------------------------------------


@dataclass(frozen=True)
class GapSnapshot:
    manual_count: int
    automated_count: int
    coverage_pct: float
    manual_pct: float

    @property
    def total(self) -> int:
        return self.manual_count + self.automated_count


def gap_metrics(manual_count: int, automated_count: int) -> GapSnapshot:
    if manual_count < 0 or automated_count < 0:
        raise InvalidArgument("test counts must be non-negative")
    total = manual_count + automated_count
    if total == 0:
        raise EmptySuite("the suite holds no tests")
    return GapSnapshot(
        manual_count,
        automated_count,
        100 * automated_count / total,
        100 * manual_count / total,
    )


def project_gap(
    manual_count: int,
    automated_count: int,
    manual_growth_rate: float,
    conversions_per_release: int,
    releases: int,
) -> list[GapSnapshot]:
    """Project the suite forward: manual tests grow, a fixed number get automated."""
    if manual_growth_rate < 0:
        raise InvalidArgument("manual_growth_rate must be >= 0")
    if releases < 1:
        raise InvalidArgument("releases must be >= 1")
    if conversions_per_release < 0:
        raise InvalidArgument("conversions_per_release must be >= 0")
    manual, automated = manual_count, automated_count
    out = []
    for _ in range(releases):
        manual = max(0, round(manual * (1 + manual_growth_rate)) - conversions_per_release)
        automated += conversions_per_release
        out.append(gap_metrics(manual, automated))
    return out


def pct(value: float) -> str:
    return f"{value:.1f}%"


# -- shared helpers ----------------------------------------------------------


def _cell(text: str) -> str:
    return " ".join(str(text).split()).replace("|", "\\|")


def _score(name: str, value) -> str:
    return str(int(value)) if name == "syntax" else f"{value:.3f}"


def iteration_paths(result: "SpecRunResult") -> list[str]:
    paths = []
    for it in result.iterations:
        base = f"{result.spec_key}/iteration_{it.number}"
        paths.append(f"{base}/script.ats")
        if it.log is not None:
            paths.append(f"{base}/execution.log.jsonl")
        paths.append(f"{base}/evaluation.json")
    paths.append(f"{result.spec_key}/final/script.ats")
    paths.append(f"{result.spec_key}/report_engineer.md")
    return paths


def suggested_action(finding, spec=None) -> str:
    code = finding.code
    if code == "SYN-PARSE-ERROR":
        return "fix the syntax at the reported line; nothing else was evaluated"
    if code == "L1-HARDCODED":
        return "move the literal into the data block and reference it by name"
    if code == "L2-NO-ASSERT":
        return "add an assert that checks the step's expected result"
    if code == "L3-NO-TEARDOWN":
        return "add a teardown block that calls reset_system()"
    if code == "L4-UNKNOWN-API":
        name = finding.subject or ""
        registry = default_registry()
        if name in registry:
            return f"call {name} with {registry[name].arity} argument(s)"
        hit = nearest_api(name, registry)
        if hit:
            return f"rename the call to {hit[0]} (edit distance {hit[1]})"
        return "replace the call with a registry API; no close match exists"
    if code == "L5-DUPLICATE-STMT":
        return "remove the repeated statement"
    if code == "COV-MISSED-STEP":
        return "add a script step implementing this spec step, titled after its action"
    if code == "SEM-FAILED-STEP":
        expected = ""
        if spec is not None and finding.subject and finding.subject.isdigit():
            idx = int(finding.subject)
            if 1 <= idx <= len(spec.steps):
                expected = spec.steps[idx - 1].expected
        if expected:
            return f"make the step's assertions check the expected result: {expected}"
        return "make the step's assertions check the expected result"
    return "review manually"


# -- engineer report ---------------------------------------------------------


def engineer_report(result: "SpecRunResult", diff: "BlockDiff | None" = None) -> str:
    spec = result.spec
    best = result.best
    lines = [f"# Engineer report: {spec.key}", ""]

    lines += [
        "## Summary",
        "",
        f"- Specification: {spec.key}: {_cell(spec.summary)}",
        f"- Functional area: {spec.functional_area}",
        f"- Input clarity: {spec.clarity.value} ({spec.clarity.meaning})",
        f"- Verdict: **{result.final_verdict}**",
        f"- Iterations: {len(result.iterations)} (stopped: {result.stop_reason})",
        f"- Final script: iteration {best.number}",
    ]
    for it in result.iterations:
        if it.note:
            lines.append(f"- Iteration {it.number} note: {it.note}")
    lines.append("")

    header = "| Dimension | " + " | ".join(
        f"Iteration {it.number}{' (final)' if it.number == best.number else ''}"
        for it in result.iterations
    ) + " |"
    lines += ["## Scores", "", header, "|---" * (len(result.iterations) + 1) + "|"]
    for name, label in SCORE_LABELS:
        cells = [_score(name, it.matrix.scores()[name]) for it in result.iterations]
        lines.append(f"| {label} | " + " | ".join(cells) + " |")
    lines.append("| Verdict | " + " | ".join(it.matrix.verdict for it in result.iterations) + " |")
    lines.append("")

    lines += ["## Findings", ""]
    count = 0
    for it in result.iterations:
        for f in it.matrix.findings:
            count += 1
            lines.append(
                f"- iteration {it.number}: `{f.code}` ({f.severity}) at {f.location}"
                f"{f' statement {f.stmt}' if f.stmt and f.code != 'SYN-PARSE-ERROR' else ''}"
                f": {_cell(f.message)}. Suggested action: {suggested_action(f, spec)}."
            )
    if not count:
        lines.append("none")
    lines.append("")

    lines += ["## Step Coverage Map", "", "| Spec step | Action | Script step |", "|---|---|---|"]
    for step in spec.steps:
        target = best.matrix.step_map.get(step.index)
        lines.append(
            f"| {step.index} | {_cell(step.action)} | {f'step {target}' if target else 'MISSED'} |"
        )
    lines.append("")

    lines += ["## Unchanged Fraction", ""]
    if diff is None:
        lines.append("not measured: no refactored script has been compared yet.")
    else:
        from specpilot.review import unchanged_fraction

        unchanged = sum(1 for e in diff.entries if e.status == "unchanged")
        generated = sum(1 for e in diff.entries if e.generated is not None)
        lines.append(
            f"{unchanged} of {generated} generated blocks unchanged "
            f"({pct(100 * unchanged_fraction(diff))})."
        )
        lines += ["", "| Generated block | Refactored block | Status |", "|---|---|---|"]
        for e in diff.entries:
            lines.append(f"| {e.generated or '-'} | {e.refactored or '-'} | {e.status} |")
        lines += ["", UNCHANGED_DEFINITION]
    lines.append("")

    lines += ["## Artifacts", ""]
    lines += [f"- `{p}`" for p in iteration_paths(result)]
    return "\n".join(lines) + "\n"


# -- manager report ----------------------------------------------------------


def manager_report(
    summary: "RunSummary",
    suite: tuple[int, int] | None = None,
) -> str:
    """Run-level overview for the test manager.

    *suite* is ``(manual, automated)`` test counts of the regression suite
    before this run; it defaults to the counts recorded on the summary.
    """
    if suite is None and summary.suite_manual is not None and summary.suite_automated is not None:
        suite = (summary.suite_manual, summary.suite_automated)
    results = summary.results
    totals = Counter(r.final_verdict for r in results)
    lines = [f"# Manager report: run {summary.run_id}", ""]

    lines += [
        "## Run Overview",
        "",
        f"- Run id: {summary.run_id}",
        f"- Specifications processed: {len(results)}",
        f"- Inputs skipped: {len(summary.skipped)}",
    ]
    if results:
        lines.append(
            f"- Pass rate: {pct(100 * totals['pass'] / len(results))} "
            f"({totals['pass']} of {len(results)})"
        )
    else:
        lines.append("- Pass rate: n/a (no specifications processed)")
    lines += ["", "| Verdict | Count |", "|---|---|"]
    lines += [f"| {v} | {totals.get(v, 0)} |" for v in VERDICT_ORDER]
    lines.append("")

    lines += ["## Automation Gap", ""]
    if not results or suite is None or sum(suite) == 0:
        lines.append("no data")
    else:
        manual, automated = suite
        candidates = min(totals["pass"], manual)
        before = gap_metrics(manual, automated)
        after = gap_metrics(manual - candidates, automated + candidates)
        lines += [
            "| Suite state | Manual | Automated | Automated coverage | Manual share |",
            "|---|---|---|---|---|",
            f"| Before this run | {before.manual_count} | {before.automated_count} | "
            f"{pct(before.coverage_pct)} | {pct(before.manual_pct)} |",
            f"| After approving {candidates} pass candidate(s) | {after.manual_count} | "
            f"{after.automated_count} | {pct(after.coverage_pct)} | {pct(after.manual_pct)} |",
            "",
            "Pass-verdict scripts count as conversion candidates only; each still needs "
            "an engineer's approval before it joins the regression suite.",
        ]
    lines.append("")

    lines += ["## Per-Area Breakdown", ""]
    if not results:
        lines.append("no data")
    else:
        by_area: dict[str, Counter] = defaultdict(Counter)
        for r in results:
            by_area[r.spec.functional_area][r.final_verdict] += 1
        lines += [
            "| Area | " + " | ".join(VERDICT_ORDER) + " | Total |",
            "|---" * (len(VERDICT_ORDER) + 2) + "|",
        ]
        for area in sorted(by_area):
            c = by_area[area]
            lines.append(
                f"| {area} | " + " | ".join(str(c.get(v, 0)) for v in VERDICT_ORDER)
                + f" | {sum(c.values())} |"
            )
    lines.append("")

    lines += ["## Skipped Inputs", ""]
    if not summary.skipped:
        lines.append("no data")
    else:
        lines += [f"- `{s.path}`: {_cell(s.reason)}" for s in summary.skipped]
    return "\n".join(lines) + "\n"

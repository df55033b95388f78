from __future__ import annotations

import pytest

from specpilot.corpus import generate_corpus
from specpilot.exec_harness import FixedClock, LocalExecutor, default_registry
from specpilot.orchestrator import Deps, RunConfig, run_batch
from specpilot.retrieval import HistoricalPair, build_index
from specpilot.spec_model import serialize_spec, spec_from_dict

FIXED_TIME = "2026-01-01T00:00:00Z"


def spec_dict(key="HAC-101", steps=None, test_data=None, clarity="A", **overrides):
    """A well-formed spec as a plain dict; *steps* is a list of (action, expected)."""
    if steps is None:
        steps = [("Reset the system to a clean state", "status is OK")]
    doc = {
        "key": key,
        "summary": "Timetable regression check",
        "functional_area": "timetable",
        "story_points": 3,
        "clarity": clarity,
        "ci_config": {"job": "systest", "timeout_s": 60},
        "test_data": dict(test_data or {}),
        "steps": [
            {"index": i, "action": action, "expected": expected}
            for i, (action, expected) in enumerate(steps, 1)
        ],
    }
    doc.update(overrides)
    return doc


def make_spec(**kwargs):
    return spec_from_dict(spec_dict(**kwargs))


def write_specs(folder, specs):
    folder.mkdir(parents=True, exist_ok=True)
    for spec in specs:
        (folder / f"{spec.key}.json").write_text(serialize_spec(spec), encoding="utf-8")
    return folder


PAIR_SCRIPT = """\
script "HIS-900"
data
  let train = "RE1"
  let origin = "AAA"
  let dest = "BBB"
  let dep = 100
  let arr = 160
step 1 "Add train RE1 from AAA to BBB"
  let r1 = call {api}(train, origin, dest, dep, arr)
  assert r1.status == "OK"
step 2 "Get train RE1"
  let r2 = call get_train(train)
  assert r2.dep_min == dep
teardown
  call reset_system()
"""


def typo_spec(key="HAC-900"):
    return make_spec(
        key=key,
        summary="Platform train lifecycle",
        steps=[("Add train ICE9 from HNV to BER", "accepted"), ("Get train ICE9", "departure 10")],
        test_data={"train": "ICE9", "origin": "HNV", "dest": "BER", "dep": 10, "arr": 70},
    )


def typo_index(api="add_tain"):
    pair_spec = make_spec(
        key="HIS-900",
        summary="Platform train lifecycle",
        steps=[("Add train RE1 from AAA to BBB", "accepted"), ("Get train RE1", "departure 100")],
        test_data={"train": "RE1", "origin": "AAA", "dest": "BBB", "dep": 100, "arr": 160},
    )
    return build_index([HistoricalPair(pair_spec, PAIR_SCRIPT.format(api=api), "accepted")])


@pytest.fixture(scope="session")
def corpus42():
    return generate_corpus(42)


@pytest.fixture(scope="session")
def run42(corpus42, tmp_path_factory):
    """Full seed-42 batch with the template backend and a fixed clock."""
    specs, pairs = corpus42
    root = tmp_path_factory.mktemp("run42")
    write_specs(root / "specs", specs)
    clock = FixedClock(FIXED_TIME)
    registry = default_registry()
    config = RunConfig(seed=42, output_root=root / "out", clock=clock)
    deps = Deps(build_index(pairs), LocalExecutor(registry, clock), registry)
    summary = run_batch(root / "specs", config, deps)
    return summary, config


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

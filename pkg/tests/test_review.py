import json
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsl_strategies import commented_variants, scripts
from specpilot.exec_harness import FixedClock
from specpilot.review import (
    AlreadyDecided,
    ArtifactNotFound,
    InvalidDecision,
    approve,
    decision,
    diff_blocks,
    read_registry,
    unchanged_fraction,
)
from specpilot.script_dsl import parse_script

CLOCK = FixedClock("2026-03-01T12:00:00Z")

GENERATED = """\
script "HAC-7"
data
  let origin = "HNV"
  let dest = "BER"
setup
  call reset_system()
step 1 "Add train"
  let r1 = call add_train("ICE1", origin, dest, 10, 80)
  assert r1.status == "OK"
step 2 "Query"
  let r2 = call query_connection(origin, dest)
  assert r2.count == 1
  assert r2.earliest_dep == 10
  assert r2.latest_arr == 80
teardown
  call reset_system()
"""


def statuses(diff):
    return [(e.generated, e.refactored, e.status) for e in diff.entries]


def test_identical_scripts_all_unchanged():
    s = parse_script(GENERATED)
    diff = diff_blocks(s, s)
    assert {e.status for e in diff.entries} == {"unchanged"}
    assert unchanged_fraction(diff) == 1.0


def test_variable_rename_in_one_step_is_modified():
    refactored = GENERATED.replace("r2", "conn")
    diff = diff_blocks(parse_script(GENERATED), parse_script(refactored))
    assert statuses(diff) == [
        ("data", "data", "unchanged"),
        ("setup", "setup", "unchanged"),
        ("step 1", "step 1", "unchanged"),
        ("step 2", "step 2", "modified"),
        ("teardown", "teardown", "unchanged"),
    ]
    assert unchanged_fraction(diff) == 0.8


def test_full_rewrite_all_removed_and_added():
    other = parse_script('script "HAC-7"\nstep 1 "x"\n  let q = call get_train("Z9")\n  assert q.status != "OK"\n')
    diff = diff_blocks(parse_script(GENERATED), other)
    counts = diff.counts()
    assert counts == {"unchanged": 0, "modified": 0, "removed": 5, "added": 1}
    assert unchanged_fraction(diff) == 0.0


def test_inserted_step_is_added_in_place():
    refactored = GENERATED.replace(
        'step 2 "Query"',
        'step 2 "Check"\n  let g = call get_train("ICE1")\n  assert g.dep_min == 10\nstep 3 "Query"',
    )
    diff = diff_blocks(parse_script(GENERATED), parse_script(refactored))
    assert statuses(diff)[3] == (None, "step 2", "added")
    assert statuses(diff)[4] == ("step 2", "step 3", "unchanged")
    assert unchanged_fraction(diff) == 1.0


def test_render_lists_every_entry():
    s = parse_script(GENERATED)
    text = diff_blocks(s, s).render()
    assert text.splitlines()[0].startswith("generated")
    assert len(text.splitlines()) == 6


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_diff_properties(data):
    a = data.draw(scripts())
    b = data.draw(scripts())
    diff = diff_blocks(a, b)
    assert sum(1 for e in diff.entries if e.generated) == len(a.blocks())
    assert sum(1 for e in diff.entries if e.refactored) == len(b.blocks())
    assert 0.0 <= unchanged_fraction(diff) <= 1.0
    assert unchanged_fraction(diff_blocks(a, parse_script(data.draw(commented_variants(a))))) == 1.0


# -- approval gate -------------------------------------------------------------


@pytest.fixture
def run_tree(tmp_path):
    final = tmp_path / "out" / "runs" / "R1" / "HAC-7" / "final" / "script.ats"
    final.parent.mkdir(parents=True)
    final.write_text(GENERATED)
    return tmp_path


def test_accept_promotes_final_script(run_tree):
    reg = run_tree / "regression"
    entry = approve(reg, run_tree / "out", "HAC-7", "R1", decision("accept", "mk", CLOCK))
    assert (reg / "HAC-7.ats").read_text() == GENERATED
    assert entry["promoted"] == "HAC-7.ats"
    assert entry["timestamp"] == "2026-03-01T12:00:00Z"
    assert read_registry(reg) == [entry]
    assert len(entry["script_sha256"]) == 64


def test_refactor_promotes_supplied_script(run_tree):
    edited = run_tree / "edited.ats"
    edited.write_text(GENERATED.replace("r2", "conn"))
    reg = run_tree / "regression"
    approve(reg, run_tree / "out", "HAC-7", "R1", decision("refactor", "mk", CLOCK), edited)
    assert (reg / "HAC-7.ats").read_text() == edited.read_text()


def test_rewrite_records_without_promotion(run_tree):
    reg = run_tree / "regression"
    entry = approve(reg, run_tree / "out", "HAC-7", "R1", decision("rewrite", "mk", CLOCK))
    assert entry["promoted"] is None
    assert sorted(p.name for p in reg.iterdir()) == ["registry.jsonl"]


def test_second_decision_rejected(run_tree):
    reg = run_tree / "regression"
    approve(reg, run_tree / "out", "HAC-7", "R1", decision("rewrite", "mk", CLOCK))
    before = (reg / "registry.jsonl").read_bytes()
    with pytest.raises(AlreadyDecided):
        approve(reg, run_tree / "out", "HAC-7", "R1", decision("accept", "jo", CLOCK))
    assert (reg / "registry.jsonl").read_bytes() == before
    assert not (reg / "HAC-7.ats").exists()


def test_missing_artifacts(run_tree):
    with pytest.raises(ArtifactNotFound):
        approve(run_tree / "reg", run_tree / "out", "HAC-8", "R1", decision("accept", "mk", CLOCK))
    with pytest.raises(ArtifactNotFound):
        approve(run_tree / "reg", run_tree / "out", "HAC-7", "R1", decision("accept", "mk", CLOCK),
                run_tree / "nope.ats")


@pytest.mark.parametrize("kind, reviewer", [("approve", "mk"), ("accept", ""), ("accept", "   ")])
def test_invalid_decisions(kind, reviewer):
    with pytest.raises(InvalidDecision):
        decision(kind, reviewer, CLOCK)


def test_concurrent_decisions_record_exactly_one(run_tree):
    reg = run_tree / "regression"
    outcomes = []

    def attempt(name):
        try:
            approve(reg, run_tree / "out", "HAC-7", "R1", decision("accept", name, CLOCK))
            outcomes.append("ok")
        except AlreadyDecided:
            outcomes.append("dup")

    threads = [threading.Thread(target=attempt, args=(f"r{i}",)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(outcomes) == ["dup"] * 7 + ["ok"]
    lines = (reg / "registry.jsonl").read_text().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["decision"] == "accept"

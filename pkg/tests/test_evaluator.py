import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_spec
from specpilot.evaluator import (
    EvaluationMatrix,
    Finding,
    Thresholds,
    eval_coverage,
    eval_improvement,
    eval_semantic,
    evaluate,
    jaccard,
    match_steps,
    sort_findings,
)
from specpilot.exec_harness import FixedClock, execute_script
from specpilot.retrieval import tokenize
from specpilot.script_dsl import parse_script

CLOCK = FixedClock("2026-01-01T00:00:00Z")

PERFECT = """\
script "HAC-1"
data
  let origin = "HNV"
  let dest = "BER"
  let train = "ICE1"
  let dep = 10
  let arr = 80
step 1 "Add train ICE1"
  let r1 = call add_train(train, origin, dest, dep, arr)
  assert r1.status == "OK"
step 2 "Query connection from origin to dest"
  let r2 = call query_connection(origin, dest)
  assert r2.count == 1
teardown
  call reset_system()
"""


def two_step_spec():
    return make_spec(
        steps=[("Add train ICE1", "accepted"), ("Query connection from origin to dest", "one hit")],
        test_data={"origin": "HNV", "dest": "BER", "train": "ICE1", "dep": 10, "arr": 80},
    )


def run(text):
    return execute_script(parse_script(text), clock=CLOCK)


def test_jaccard_example():
    action = tokenize("query connection from origin to dest")
    title = tokenize("query connection")
    assert jaccard(action, title) == 2 / 6
    assert jaccard([], []) == 0.0


def test_coverage_threshold_example():
    spec = make_spec(steps=[("query connection from origin to dest", "x")])
    script = parse_script('script "HAC-1"\nstep 1 "query connection"\n  # nothing\n')
    assert eval_coverage(spec, script) == (1.0, [])


def test_coverage_counts_missed_steps():
    spec = make_spec(steps=[("Add train", "x"), ("Query connection", "y"), ("Archive logs", "z")])
    script = parse_script('script "HAC-1"\nstep 1 "add train"\n  # a\nstep 2 "query connection"\n  # b\n')
    score, findings = eval_coverage(spec, script)
    assert score == pytest.approx(2 / 3)
    assert [(f.code, f.location) for f in findings] == [("COV-MISSED-STEP", "spec step 3")]


def test_call_names_count_toward_coverage():
    spec = make_spec(steps=[("cancel train", "x")])
    script = parse_script('script "HAC-1"\nstep 1 "something"\n  call cancel_train("A")\n')
    assert match_steps(spec, script) == {1: 1}


def test_matching_is_greedy_and_ties_go_to_lowest_step():
    spec = make_spec(steps=[("add train", "x"), ("add train", "y")])
    script = parse_script('script "HAC-1"\nstep 1 "add train"\n  # a\nstep 2 "add train"\n  # b\n')
    assert match_steps(spec, script) == {1: 1, 2: 2}


def test_semantic_missing_assert():
    spec = make_spec(steps=[("alpha one", "x"), ("beta two", "y"), ("gamma three", "z")])
    text = (
        'script "HAC-1"\nstep 1 "alpha one"\n  let r = call reset_system()\n  assert r.status == "OK"\n'
        'step 2 "beta two"\n  let r = call reset_system()\n  assert r.status == "OK"\n'
        'step 3 "gamma three"\n  call reset_system()\n'
    )
    score, findings = eval_semantic(spec, parse_script(text), run(text))
    assert score == pytest.approx(2 / 3)
    assert [(f.code, f.location, f.subject) for f in findings] == [("SEM-FAILED-STEP", "step 3", "3")]


def test_semantic_assert_fail_marks_step_unsatisfied():
    spec = two_step_spec()
    text = PERFECT.replace("r2.count == 1", "r2.count == 2")
    score, findings = eval_semantic(spec, parse_script(text), run(text))
    assert score == 0.5
    assert "statement 2" in findings[0].message


def test_improvement_examples():
    text = 'script "HAC-1"\nstep 1 "a"\n  call reset_system()\n'
    score, findings = eval_improvement(parse_script(text))
    assert score == pytest.approx(0.6)
    assert [f.code for f in findings] == ["L2-NO-ASSERT", "L3-NO-TEARDOWN"]
    assert eval_improvement(parse_script(PERFECT)) == (1.0, [])


def test_improvement_clamps_at_zero():
    text = (
        'script "HAC-1"\nstep 1 "a"\n  call add_tain("X", "Y", "Z", 1, 2)\n  call add_tain("X", "Y", "Z", 1, 2)\n'
    )
    score, findings = eval_improvement(parse_script(text))
    assert len(findings) >= 6 and score == 0.0


def test_l1_is_type_aware_and_skips_booleans():
    text = (
        'script "HAC-1"\ndata\n  let n = "10"\nstep 1 "a"\n  let r = call get_train(10)\n'
        '  let s = call get_train(true)\n  let t = call get_train("10")\n  assert r.status == "OK"\n'
        "teardown\n  call reset_system()\n"
    )
    _, findings = eval_improvement(parse_script(text))
    assert [(f.code, f.stmt) for f in findings] == [("L1-HARDCODED", 1)]


def test_l4_names_nearest_api():
    text = PERFECT.replace("call add_train", "call add_tain")
    _, findings = eval_improvement(parse_script(text))
    (l4,) = [f for f in findings if f.code == "L4-UNKNOWN-API"]
    assert "(nearest: add_train)" in l4.message and l4.location == "step 1" and l4.stmt == 1


def test_l5_adjacent_duplicates():
    text = PERFECT.replace("  call reset_system()\n", "  call reset_system()\n  call reset_system()\n")
    _, findings = eval_improvement(parse_script(text))
    assert [(f.code, f.location, f.stmt) for f in findings] == [("L5-DUPLICATE-STMT", "teardown", 2)]


def test_evaluate_perfect_run():
    m = evaluate(two_step_spec(), PERFECT, run(PERFECT))
    assert (m.syntax, m.executability, m.coverage, m.semantic, m.improvement, m.verdict) == (
        1, 1.0, 1.0, 1.0, 1.0, "pass",
    )
    assert m.findings == ()


def test_evaluate_unparsable():
    m = evaluate(two_step_spec(), 'script "HAC-1"\nstep 1 "a"\n  call (\n', None)
    assert m.scores() == {"syntax": 0, "executability": 0.0, "coverage": 0.0, "semantic": 0.0, "improvement": 0.0}
    assert m.verdict == "fail_syntax"
    assert "line 3" in m.findings[0].message


def test_evaluate_without_log():
    m = evaluate(two_step_spec(), PERFECT, None)
    assert m.verdict == "not_executed"
    assert (m.executability, m.semantic, m.coverage) == (0.0, 0.0, 1.0)


def test_runtime_error_forces_revise():
    text = PERFECT.replace("assert r2.count == 1", "assert r9.count == 1")
    m = evaluate(two_step_spec(), text, run(text))
    assert m.executability == pytest.approx(3 / 4)
    assert m.semantic == 0.5
    assert m.verdict == "revise"


def test_thresholds_are_configurable():
    text = PERFECT.replace("r2.count == 1", "r2.count == 2")
    assert evaluate(two_step_spec(), text, run(text)).verdict == "revise"
    assert evaluate(two_step_spec(), text, run(text), thresholds=Thresholds(0.5, 0.5)).verdict == "pass"


def test_finding_order_and_serialization():
    fs = [
        Finding("COV-MISSED-STEP", "spec step 2", "m"),
        Finding("L3-NO-TEARDOWN", "script", "m"),
        Finding("L2-NO-ASSERT", "step 10", "m"),
        Finding("L2-NO-ASSERT", "step 2", "m"),
        Finding("L1-HARDCODED", "step 2", "m", 1, "'x'"),
        Finding("L5-DUPLICATE-STMT", "setup", "m", 2),
    ]
    assert [f.location for f in sort_findings(fs)] == [
        "setup", "step 2", "step 2", "step 10", "script", "spec step 2",
    ]
    m = evaluate(two_step_spec(), PERFECT.replace("call add_train", "call add_tain"), None)
    assert EvaluationMatrix.from_dict(m.to_dict()) == m


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["==", "!="]), min_size=2, max_size=2), st.booleans())
def test_scores_bounded_and_passing_assert_is_monotone(ops, add_assert):
    text = PERFECT.replace("r1.status ==", f"r1.status {ops[0]}").replace("r2.count ==", f"r2.count {ops[1]}")
    m = evaluate(two_step_spec(), text, run(text))
    assert all(0 <= v <= 1 for v in m.scores().values())
    if m.verdict == "pass":
        assert not any(f.code == "COV-MISSED-STEP" for f in m.findings)
    if add_assert:
        extra = text.replace("  assert r1.status", '  assert r1.status == "OK"\n  assert r1.status')
        assert evaluate(two_step_spec(), extra, run(extra)).semantic >= m.semantic

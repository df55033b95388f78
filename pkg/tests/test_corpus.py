from statistics import mean

import pytest

from specpilot.corpus import generate_corpus
from specpilot.errors import InvalidArgument
from specpilot.retrieval import build_index, retrieve
from specpilot.script_dsl import parse_script
from specpilot.spec_model import has_errors, validate_spec


def test_seed42_shape(corpus42):
    specs, pairs = corpus42
    steps = [len(s.steps) for s in specs]
    assert len(specs) == 61
    assert len({s.functional_area for s in specs}) == 6
    assert min(steps) >= 2 and max(steps) <= 18
    assert 5 <= mean(steps) <= 7
    assert all(3 <= s.story_points <= 8 for s in specs)
    assert {s.clarity.value for s in specs} == {"A", "B", "C", "D"}
    assert len({s.key for s in specs}) == 61


def test_deterministic(corpus42):
    assert generate_corpus(42) == corpus42


def test_different_seeds_differ(corpus42):
    assert generate_corpus(7)[0] != corpus42[0]


def test_small_corpus_has_all_grades():
    specs, _ = generate_corpus(7, 8, 2)
    assert len(specs) == 8
    assert {s.clarity.value for s in specs} == {"A", "B", "C", "D"}
    assert len({s.functional_area for s in specs}) <= 2


@pytest.mark.parametrize("count, areas", [(0, 6), (5, 0), (-1, 1)])
def test_invalid_arguments(count, areas):
    with pytest.raises(InvalidArgument):
        generate_corpus(1, count, areas)


def test_specs_validate_and_scripts_parse(corpus42):
    specs, pairs = corpus42
    assert not any(has_errors(validate_spec(s)) for s in specs)
    for p in pairs:
        assert parse_script(p.script_text).header_key == p.key
    assert {p.outcome_tag for p in pairs} <= {"accepted", "refactored"}


def test_a_specs_retrieve_a_same_shape_pair(corpus42):
    specs, pairs = corpus42
    index = build_index(pairs)
    for spec in specs:
        if spec.clarity.value != "A":
            continue
        top, score = retrieve(index, spec, 1)[0]
        assert score > 0
        assert len(parse_script(top.script_text).steps) == len(spec.steps)
        assert top.spec.test_data.keys() == spec.test_data.keys()
        assert top.spec.test_data != spec.test_data

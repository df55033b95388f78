"""Hypothesis strategies for script ASTs and text mutations shared by several test files."""

from __future__ import annotations

import string

from hypothesis import strategies as st

from specpilot.script_dsl import (
    KEYWORDS,
    OPERATORS,
    Assert,
    Call,
    CallExpr,
    Comment,
    FieldRef,
    Let,
    StepBlock,
    TestScript,
    Var,
    render_script,
)

_HEAD = string.ascii_letters + "_"
names = st.builds(
    str.__add__, st.sampled_from(_HEAD), st.text(_HEAD + string.digits, max_size=7)
).filter(lambda n: n not in KEYWORDS)
text = st.text(st.characters(blacklist_categories=("Cs",)), max_size=12)
single_line = st.text(
    st.characters(blacklist_categories=("Cs",), blacklist_characters="\r\n"), max_size=16
)
literals = st.one_of(text, st.integers(-10**9, 10**9), st.booleans())
variables = names.map(Var)
operands = st.one_of(literals, variables, st.builds(FieldRef, names, names))
calls = st.builds(CallExpr, names, st.lists(st.one_of(literals, variables), max_size=4).map(tuple))
statements = st.one_of(
    st.builds(Let, names, calls),
    st.builds(Call, calls),
    st.builds(Assert, operands, st.sampled_from(OPERATORS), operands),
    single_line.map(str.strip).map(Comment),
)
blocks = st.lists(statements, min_size=1, max_size=4).map(tuple)
keys = st.builds(
    "{}-{}".format,
    st.text(string.ascii_uppercase, min_size=1, max_size=4),
    st.integers(0, 9999),
)
titles = text.filter(lambda t: t.strip())


@st.composite
def scripts(draw) -> TestScript:
    n_steps = draw(st.integers(1, 4))
    steps = tuple(StepBlock(i, draw(titles), draw(blocks)) for i in range(1, n_steps + 1))
    data = tuple(draw(st.lists(st.tuples(names, literals), max_size=3)))
    setup = draw(st.one_of(st.just(()), blocks))
    teardown = draw(st.one_of(st.just(()), blocks))
    return TestScript(draw(keys), steps, data, setup, teardown)


# -- mutations that must be rejected ------------------------------------------
# Each returns (mutated text, 1-based line the parser must blame).


def _drop_header(lines, i):
    return lines[1:], 1


def _unknown_top_keyword(lines, i):
    return lines[: i + 1] + ["bogus 1"] + lines[i + 1 :], i + 2


def _unknown_statement(lines, i):
    return lines[: i + 1] + ["  frobnicate x"] + lines[i + 1 :], i + 2


def _stray_character(lines, i):
    if lines[i].lstrip().startswith("#"):
        return lines, None  # comments accept any text
    return lines[:i] + [lines[i] + " @"] + lines[i + 1 :], i + 1


def _missing_name(lines, i):
    return lines[: i + 1] + ["  let = call reset_system()"] + lines[i + 1 :], i + 2


def _step_number_skip(lines, i):
    last = max(j for j, ln in enumerate(lines) if ln.startswith("step "))
    n = int(lines[last].split()[1])
    extra = [f'step {n + 2} "skipped"', "  call reset_system()"]
    if any(ln == "teardown" for ln in lines):
        return lines, None  # placement would be ambiguous; caller redraws
    return lines + extra, len(lines) + 1


MUTATIONS = (
    _drop_header,
    _unknown_top_keyword,
    _unknown_statement,
    _stray_character,
    _missing_name,
    _step_number_skip,
)


@st.composite
def invalid_texts(draw):
    """A rendered valid script with one mutation that must yield a ParseError at a known line."""
    script = draw(scripts())
    lines = render_script(script).rstrip("\n").split("\n")
    while True:
        mutation = draw(st.sampled_from(MUTATIONS))
        i = draw(st.integers(0, len(lines) - 1))
        mutated, line = mutation(lines, i)
        if line is not None:
            return "\n".join(mutated) + "\n", line


@st.composite
def noisy_texts(draw):
    """Random character-level edits: may or may not stay valid."""
    text_ = render_script(draw(scripts()))
    for _ in range(draw(st.integers(1, 4))):
        pos = draw(st.integers(0, len(text_)))
        op = draw(st.sampled_from(("insert", "delete", "swap")))
        ch = draw(st.sampled_from(list('"()=.,#\n  \tabc1-_@\\')))
        if op == "insert":
            text_ = text_[:pos] + ch + text_[pos:]
        elif op == "delete":
            text_ = text_[:pos] + text_[pos + 1 :]
        else:
            text_ = text_[:pos] + ch + text_[pos + 1 :]
    return text_


@st.composite
def commented_variants(draw, script: TestScript):
    """Render *script* then add comments, blank lines, trailing blanks and deeper indents."""
    out = []
    section = None
    for ln in render_script(script).rstrip("\n").split("\n"):
        if ln and not ln[0].isspace():
            section = ln.split()[0]
        if ln.startswith(" ") and draw(st.booleans()):
            ln = "  " + ln
        out.append(ln + " " * draw(st.integers(0, 2)))
        if draw(st.integers(0, 3)) == 0:
            out.append("")
        if section in ("setup", "step", "teardown") and draw(st.integers(0, 2)) == 0:
            out.append("  # " + draw(single_line).strip())
    return "\n".join(out) + "\n"

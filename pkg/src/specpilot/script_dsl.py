"""The line-oriented test-script language (``.ats`` files).

Example::

    script "HAC-101"
    data
      let origin = "HNV"
      let dest = "BER"
    step 1 "Query connection from HNV to BER"
      let r1 = call query_connection(origin, dest)
      assert r1.count == 0
    teardown
      call reset_system()

Top-level section keywords start at column 0; statements are indented.
Blank lines are ignored everywhere.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Union

from specpilot.errors import SpecPilotError

GRAMMAR = """\
script   := 'script' STRING NL [data] [setup] step+ [teardown]
data     := 'data' NL (INDENT 'let' NAME '=' literal NL)+
setup    := 'setup' NL stmt+
step     := 'step' INT STRING NL stmt+
teardown := 'teardown' NL stmt+
stmt     := INDENT ('let' NAME '=' call | call | 'assert' cmp | '#' TEXT) NL
call     := 'call' NAME '(' [arg (',' arg)*] ')'
arg      := literal | NAME
cmp      := operand OP operand        OP := '=='|'!='|'<'|'<='|'>'|'>='
operand  := literal | NAME | NAME '.' NAME
literal  := STRING | INT | 'true' | 'false'
"""

KEYWORDS = frozenset(
    {"script", "data", "setup", "step", "teardown", "let", "call", "assert", "true", "false"}
)
OPERATORS = ("==", "!=", "<=", ">=", "<", ">")
INDENT = "  "

_KEY_RE = re.compile(r"[A-Z]+-[0-9]+")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<int>-?[0-9]+)
  | (?P<op>==|!=|<=|>=|<|>)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[().,=])
    """,
    re.VERBOSE,
)

Literal = Union[str, int, bool]


class ParseError(SpecPilotError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class FieldRef:
    var: str
    field: str


Operand = Union[Literal, Var, FieldRef]


@dataclass(frozen=True)
class CallExpr:
    name: str
    args: tuple[Union[Literal, Var], ...] = ()


@dataclass(frozen=True)
class Let:
    name: str
    call: CallExpr


@dataclass(frozen=True)
class Call:
    call: CallExpr


@dataclass(frozen=True)
class Assert:
    left: Operand
    op: str
    right: Operand


@dataclass(frozen=True)
class Comment:
    text: str


Statement = Union[Let, Call, Assert, Comment]


@dataclass(frozen=True)
class StepBlock:
    number: int
    title: str
    statements: tuple[Statement, ...]


@dataclass(frozen=True)
class TestScript:
    __test__ = False  # keep pytest from collecting this class

    header_key: str
    steps: tuple[StepBlock, ...]
    data: tuple[tuple[str, Literal], ...] = ()
    setup: tuple[Statement, ...] = ()
    teardown: tuple[Statement, ...] = ()

    def blocks(self) -> list[tuple[str, tuple]]:
        """``(label, statements)`` per present section, in source order.

        The data block is reported with ``Let``-free pseudo statements: its
        raw ``(name, literal)`` pairs.
        """
        out: list[tuple[str, tuple]] = []
        if self.data:
            out.append(("data", self.data))
        if self.setup:
            out.append(("setup", self.setup))
        for step in self.steps:
            out.append((f"step {step.number}", step.statements))
        if self.teardown:
            out.append(("teardown", self.teardown))
        return out


@dataclass(frozen=True)
class SemanticBlock:
    kind: str  # data | setup | step | teardown
    number: int | None
    normalized_tokens: tuple[str, ...]

    @property
    def label(self) -> str:
        return f"step {self.number}" if self.kind == "step" else self.kind


# -- rendering ---------------------------------------------------------------


def render_literal(value: Literal) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return json.dumps(value, ensure_ascii=False)


def render_operand(value) -> str:
    if isinstance(value, Var):
        return value.name
    if isinstance(value, FieldRef):
        return f"{value.var}.{value.field}"
    return render_literal(value)


def render_call(call: CallExpr) -> str:
    return f"call {call.name}({', '.join(render_operand(a) for a in call.args)})"


def render_statement(stmt: Statement) -> str:
    if isinstance(stmt, Let):
        return f"let {stmt.name} = {render_call(stmt.call)}"
    if isinstance(stmt, Call):
        return render_call(stmt.call)
    if isinstance(stmt, Assert):
        return f"assert {render_operand(stmt.left)} {stmt.op} {render_operand(stmt.right)}"
    if isinstance(stmt, Comment):
        return f"# {stmt.text}" if stmt.text else "#"
    raise TypeError(f"not a statement: {stmt!r}")


def render_binding(name: str, value: Literal) -> str:
    return f"let {name} = {render_literal(value)}"


def render_script(script: TestScript) -> str:
    lines = [f"script {render_literal(script.header_key)}"]
    if script.data:
        lines.append("data")
        lines.extend(INDENT + render_binding(n, v) for n, v in script.data)
    if script.setup:
        lines.append("setup")
        lines.extend(INDENT + render_statement(s) for s in script.setup)
    for step in script.steps:
        lines.append(f"step {step.number} {render_literal(step.title)}")
        lines.extend(INDENT + render_statement(s) for s in step.statements)
    if script.teardown:
        lines.append("teardown")
        lines.extend(INDENT + render_statement(s) for s in script.teardown)
    return "\n".join(lines) + "\n"


# -- lexing ------------------------------------------------------------------


def _lex(text: str, line: int) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(line, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group()))
        pos = m.end()
    return tokens


class _Cursor:
    def __init__(self, tokens: list[tuple[str, str]], line: int):
        self.tokens = tokens
        self.i = 0
        self.line = line

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self, what: str) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise ParseError(self.line, f"expected {what}, found end of line")
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, text = self.next(repr(value))
        if text != value or kind == "string":
            raise ParseError(self.line, f"expected {value!r}, found {text!r}")

    def done(self) -> None:
        tok = self.peek()
        if tok is not None:
            raise ParseError(self.line, f"unexpected trailing {tok[1]!r}")


def _decode_string(raw: str, line: int) -> str:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        raise ParseError(line, f"malformed string literal {raw}") from None


def _literal_from(tok: tuple[str, str], line: int):
    kind, text = tok
    if kind == "string":
        return _decode_string(text, line)
    if kind == "int":
        return int(text)
    if kind == "name" and text == "true":
        return True
    if kind == "name" and text == "false":
        return False
    return None


def _ident(cur: _Cursor, what: str) -> str:
    kind, text = cur.next(what)
    if kind != "name" or text in KEYWORDS:
        raise ParseError(cur.line, f"expected {what}, found {text!r}")
    return text


def _parse_arg(cur: _Cursor):
    tok = cur.next("argument")
    lit = _literal_from(tok, cur.line)
    if lit is not None:
        return lit
    if tok[0] == "name" and tok[1] not in KEYWORDS:
        return Var(tok[1])
    raise ParseError(cur.line, f"malformed argument {tok[1]!r}")


def _parse_call(cur: _Cursor) -> CallExpr:
    cur.expect("call")
    name = _ident(cur, "API name")
    cur.expect("(")
    args = []
    if cur.peek() is not None and cur.peek()[1] == ")" and cur.peek()[0] == "punct":
        cur.next(")")
        return CallExpr(name, ())
    while True:
        args.append(_parse_arg(cur))
        kind, text = cur.next("',' or ')'")
        if kind == "punct" and text == ")":
            break
        if not (kind == "punct" and text == ","):
            raise ParseError(cur.line, f"expected ',' or ')', found {text!r}")
    return CallExpr(name, tuple(args))


def _parse_operand(cur: _Cursor):
    tok = cur.next("operand")
    lit = _literal_from(tok, cur.line)
    if lit is not None:
        return lit
    if tok[0] != "name" or tok[1] in KEYWORDS:
        raise ParseError(cur.line, f"malformed operand {tok[1]!r}")
    nxt = cur.peek()
    if nxt is not None and nxt == ("punct", "."):
        cur.next(".")
        return FieldRef(tok[1], _ident(cur, "field name"))
    return Var(tok[1])


def _parse_statement(body: str, line: int) -> Statement:
    if body.startswith("#"):
        return Comment(body[1:].strip())
    cur = _Cursor(_lex(body, line), line)
    head = cur.peek()
    if head is None:
        raise ParseError(line, "empty statement")
    word = head[1] if head[0] == "name" else None
    if word == "let":
        cur.next("let")
        name = _ident(cur, "variable name")
        cur.expect("=")
        stmt: Statement = Let(name, _parse_call(cur))
    elif word == "call":
        stmt = Call(_parse_call(cur))
    elif word == "assert":
        cur.next("assert")
        left = _parse_operand(cur)
        kind, op = cur.next("comparison operator")
        if kind != "op":
            raise ParseError(line, f"expected comparison operator, found {op!r}")
        stmt = Assert(left, op, _parse_operand(cur))
    else:
        raise ParseError(line, f"unknown keyword {head[1]!r}")
    cur.done()
    return stmt


def _parse_binding(body: str, line: int) -> tuple[str, Literal]:
    cur = _Cursor(_lex(body, line), line)
    cur.expect("let")
    name = _ident(cur, "variable name")
    cur.expect("=")
    value = _literal_from(cur.next("literal"), line)
    if value is None:
        raise ParseError(line, "data bindings must be literals")
    cur.done()
    return name, value


# -- parsing -----------------------------------------------------------------


_ORDER = {"data": 0, "setup": 1, "step": 2, "teardown": 3}


def parse_script(text: str) -> TestScript:
    """Parse script source into a ``TestScript``; raise ``ParseError`` on the first error."""
    # split on newlines only: str.splitlines also breaks on U+2028 inside strings
    lines = re.split(r"\r?\n", text)
    numbered = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip()]
    if not numbered:
        raise ParseError(1, "expected script header")

    first_no, first = numbered[0]
    if first[:1].isspace() or not first.startswith("script"):
        raise ParseError(first_no, "expected script header")
    cur = _Cursor(_lex(first, first_no), first_no)
    cur.expect("script")
    kind, raw = cur.next("script key")
    if kind != "string":
        raise ParseError(first_no, "script key must be a quoted string")
    key = _decode_string(raw, first_no)
    cur.done()
    if not _KEY_RE.fullmatch(key):
        raise ParseError(first_no, f"script key {key!r} does not match [A-Z]+-[0-9]+")

    data: list[tuple[str, Literal]] = []
    setup: list[Statement] = []
    teardown: list[Statement] = []
    steps: list[StepBlock] = []
    section: str | None = None
    section_line = first_no
    step_title = ""
    step_number = 0
    body: list = []

    def close_section() -> None:
        if section is None:
            return
        if not body:
            raise ParseError(section_line, f"{section} block has no statements")
        if section == "data":
            data.extend(body)
        elif section == "setup":
            setup.extend(body)
        elif section == "teardown":
            teardown.extend(body)
        else:
            steps.append(StepBlock(step_number, step_title, tuple(body)))

    for line_no, ln in numbered[1:]:
        if ln[:1].isspace():
            if section is None:
                raise ParseError(line_no, "statement outside of a block")
            stripped = ln.strip()
            if section == "data":
                if stripped.startswith("#"):
                    raise ParseError(line_no, "data block holds only let bindings")
                body.append(_parse_binding(stripped, line_no))
            else:
                body.append(_parse_statement(stripped, line_no))
            continue

        cur = _Cursor(_lex(ln, line_no), line_no)
        kind, word = cur.next("section keyword")
        if kind != "name" or word not in _ORDER:
            raise ParseError(line_no, f"unknown keyword {word!r}")
        prev_rank = _ORDER[section] if section else -1
        rank = _ORDER[word]
        if rank < prev_rank or (rank == prev_rank and word != "step"):
            raise ParseError(line_no, f"{word} block out of order")
        if word == "teardown" and not steps and section != "step":
            raise ParseError(line_no, "teardown before any step")
        close_section()
        body = []
        section, section_line = word, line_no
        if word == "step":
            k, num = cur.next("step number")
            if k != "int":
                raise ParseError(line_no, f"expected step number, found {num!r}")
            expected_number = len(steps) + 1
            if int(num) != expected_number:
                raise ParseError(
                    line_no, f"step {num} out of order (expected step {expected_number})"
                )
            k, raw_title = cur.next("step title")
            if k != "string":
                raise ParseError(line_no, "step title must be a quoted string")
            step_title = _decode_string(raw_title, line_no)
            if not step_title.strip():
                raise ParseError(line_no, "step title must not be empty")
            step_number = int(num)
        cur.done()

    close_section()
    if not steps:
        raise ParseError(numbered[-1][0], "script needs at least one step")
    return TestScript(
        header_key=key,
        steps=tuple(steps),
        data=tuple(data),
        setup=tuple(setup),
        teardown=tuple(teardown),
    )


# -- semantic blocks ---------------------------------------------------------


def statement_tokens(stmt) -> list[str]:
    """Lexical tokens of a statement's canonical rendering."""
    if isinstance(stmt, tuple):
        text = render_binding(*stmt)
    else:
        text = render_statement(stmt)
    return [tok for _, tok in _lex(text, 0)]


def semantic_blocks(script: TestScript) -> list[SemanticBlock]:
    out = []
    for label, stmts in script.blocks():
        tokens: list[str] = []
        for stmt in stmts:
            if isinstance(stmt, Comment):
                continue
            tokens.extend(statement_tokens(stmt))
        if label.startswith("step "):
            out.append(SemanticBlock("step", int(label[5:]), tuple(tokens)))
        else:
            out.append(SemanticBlock(label, None, tuple(tokens)))
    return out


def variables_referenced(stmts) -> set[str]:
    names: set[str] = set()
    for stmt in stmts:
        operands: tuple = ()
        if isinstance(stmt, (Let, Call)):
            operands = stmt.call.args
        elif isinstance(stmt, Assert):
            operands = (stmt.left, stmt.right)
        for op in operands:
            if isinstance(op, Var):
                names.add(op.name)
            elif isinstance(op, FieldRef):
                names.add(op.var)
    return names


def call_sites(script: TestScript):
    """Yield ``(block label, statement index (1-based), CallExpr)`` for every call."""
    for label, stmts in script.blocks():
        if label == "data":
            continue
        for i, stmt in enumerate(stmts, 1):
            if isinstance(stmt, (Let, Call)):
                yield label, i, stmt.call

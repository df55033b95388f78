"""Synthetic specification corpus with matching historical spec/script pairs.

Every generated specification describes a scenario against the simulated
journey-planning system: a sequence of step kinds (add a train, query a
connection, cancel, ...) whose expected results follow from simulating the
system. Scripts for historical pairs are derived from the same simulation, so
they pass when executed.

Clarity grades shape the prose: A specs are clear and complete, B leaves one
expected result blank, C has vague expectations, D merges or blurs actions.
Each A spec gets a near-duplicate historical pair (same step kinds and route,
different train ids and times) so the template backend can adapt it directly.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from specpilot.errors import InvalidArgument
from specpilot.retrieval import HistoricalPair, build_index, retrieve
from specpilot.script_dsl import (
    Assert,
    CallExpr,
    Call,
    FieldRef,
    Let,
    StepBlock,
    TestScript,
    Var,
    render_script,
)
from specpilot.spec_model import CiConfig, ClarityRating, SpecDocument, SpecStep

AREAS = (
    "timetable",
    "routing",
    "cancellation",
    "disruption",
    "capacity",
    "platform",
    "realtime",
    "fares",
)
STATIONS = (
    "HNV", "BER", "HAM", "MUC", "FFM", "KOL", "STR", "DUS", "LEI",
    "DRS", "NUE", "BRE", "KAS", "GOE", "ERF", "WUE", "MAN", "KAR",
)
TRAIN_PREFIXES = ("ICE", "IC", "RE", "RB", "EC")

STEP_RANGE = (2, 18)
MEAN_RANGE = (5, 7)
# step-count distribution centred on ~6
_STEP_WEIGHTS = {
    2: 4, 3: 8, 4: 12, 5: 14, 6: 14, 7: 12, 8: 8, 9: 6, 10: 4,
    11: 3, 12: 2, 13: 2, 14: 1, 15: 1, 16: 1, 17: 1, 18: 1,
}
_CLARITY_WEIGHTS = {"A": 40, "B": 30, "C": 20, "D": 10}


@dataclass(frozen=True)
class _Step:
    kind: str
    train: int = 0  # 1-based train slot, 0 when not applicable


@dataclass
class _Literals:
    origin: str
    dest: str
    trains: list[tuple[str, int, int]]  # (id, dep_min, arr_min)
    bad_train: str


# -- scenario construction ---------------------------------------------------


def _scenario(rng: random.Random, n: int) -> tuple[list[_Step], int]:
    train_slots = 1 + min(2, rng.randrange(0, 1 + n // 4))
    seq = [_Step("reset")]
    added: set[int] = set()
    cancelled: set[int] = set()
    while len(seq) < n:
        options: list[_Step] = []
        missing = [i for i in range(1, train_slots + 1) if i not in added]
        if missing:
            options += [_Step("add", missing[0])] * 3
            options.append(_Step("get_missing", missing[-1]))
        if added:
            options += [_Step("query")] * 2
            options.append(_Step("get", rng.choice(sorted(added))))
        active = sorted(added - cancelled)
        if active:
            options.append(_Step("cancel", rng.choice(active)))
        options += [_Step("query_reverse"), _Step("add_invalid")]
        step = rng.choice(options)
        if step.kind == "add":
            added.add(step.train)
        elif step.kind == "cancel":
            cancelled.add(step.train)
        seq.append(step)
    return seq, train_slots


def _literals(
    rng: random.Random, train_slots: int, route: tuple[str, str] | None = None
) -> _Literals:
    origin, dest = rng.sample(STATIONS, 2)
    if route is not None:
        origin, dest = route
    numbers = rng.sample(range(10, 999), train_slots + 1)
    deps = rng.sample(range(300, 1200, 5), train_slots)
    trains = []
    for num, dep in zip(numbers, deps):
        trains.append((f"{rng.choice(TRAIN_PREFIXES)}{num}", dep, dep + rng.randrange(30, 400, 5)))
    return _Literals(origin, dest, trains, f"{rng.choice(TRAIN_PREFIXES)}{numbers[-1]}")


def _test_data(lits: _Literals, seq: list[_Step]) -> dict:
    data: dict = {"origin": lits.origin, "dest": lits.dest}
    for i, (tid, dep, arr) in enumerate(lits.trains, 1):
        data[f"train{i}"] = tid
        data[f"dep{i}"] = dep
        data[f"arr{i}"] = arr
    if any(s.kind == "add_invalid" for s in seq):
        data["bad_train"] = lits.bad_train
    return data


def _simulate(seq: list[_Step]):
    """Yield ``(step, active train slots)`` with the state *after* each step."""
    added: set[int] = set()
    cancelled: set[int] = set()
    for step in seq:
        if step.kind == "reset":
            added.clear()
            cancelled.clear()
        elif step.kind == "add":
            added.add(step.train)
        elif step.kind == "cancel":
            cancelled.add(step.train)
        yield step, sorted(added - cancelled)


# -- prose -------------------------------------------------------------------


def _clear_text(step: _Step, active: list[int], lits: _Literals) -> tuple[str, str]:
    o, d = lits.origin, lits.dest
    if step.kind == "reset":
        return "Reset the system to a clean state", "The system reports status OK"
    if step.kind in ("add", "get", "get_missing", "cancel"):
        tid, dep, arr = lits.trains[step.train - 1]
    if step.kind == "add":
        return (
            f"Add train {tid} from {o} to {d} departing at minute {dep} and arriving at minute {arr}",
            "The train is stored and status OK is returned",
        )
    if step.kind == "get":
        return (
            f"Get train {tid} details",
            f"Train {tid} is returned departing at minute {dep} and arriving at minute {arr}",
        )
    if step.kind == "get_missing":
        return f"Get train {tid} details before it has been added", "Status NOT_FOUND is returned"
    if step.kind == "cancel":
        return f"Cancel train {tid}", "The cancellation is confirmed with status OK"
    if step.kind == "query":
        if not active:
            return f"Query connection from {o} to {d}", "No direct connection is listed"
        first = min(lits.trains[i - 1][1] for i in active)
        return (
            f"Query connection from {o} to {d}",
            f"{len(active)} direct connection(s) listed, earliest departure at minute {first}",
        )
    if step.kind == "query_reverse":
        return f"Query connection from {d} to {o}", "No direct connection is listed"
    tid, dep, arr = lits.trains[0]
    return (
        f"Add train {lits.bad_train} from {o} to {d} departing at minute {arr} "
        f"after its arrival at minute {dep}",
        "The train is rejected with status ERR",
    )


_VAGUE_EXPECTED = (
    "Works as expected",
    "Result looks correct",
    "System behaves normally",
    "",
)
_BLURRED_ACTIONS = {
    "reset": "Prepare the environment",
    "add": "Make sure the train {tid} is in the plan",
    "get": "Check that {tid} looks right",
    "get_missing": "Verify {tid} is not there yet",
    "cancel": "Take {tid} out of service",
    "query": "Look up trips {o}-{d}",
    "query_reverse": "Look at the way back",
    "add_invalid": "Try a broken train entry",
}


def _spec_steps(
    rng: random.Random, seq: list[_Step], lits: _Literals, clarity: str
) -> list[SpecStep]:
    texts = [_clear_text(step, active, lits) for step, active in _simulate(seq)]
    if clarity == "B":
        victim = rng.randrange(len(texts))
        texts[victim] = (texts[victim][0], "")
    elif clarity == "C":
        texts = [(a, rng.choice(_VAGUE_EXPECTED)) for a, _ in texts]
    elif clarity == "D":
        for i, step in enumerate(seq):
            if i and rng.random() < 0.5:
                tid = lits.trains[step.train - 1][0] if step.train else ""
                blurred = _BLURRED_ACTIONS[step.kind].format(tid=tid, o=lits.origin, d=lits.dest)
                texts[i] = (blurred, rng.choice(_VAGUE_EXPECTED))
        if len(texts) >= 3:
            j = rng.randrange(1, len(texts) - 1)
            merged = f"{texts[j][0]} and then {texts[j + 1][0][0].lower()}{texts[j + 1][0][1:]}"
            texts[j] = (merged, texts[j][1])
            texts[j + 1] = ("Continue with the next check", "")
    return [SpecStep(i, a, e) for i, (a, e) in enumerate(texts, 1)]


# -- scripts -----------------------------------------------------------------


def _status_is(var: str, value: str) -> Assert:
    return Assert(FieldRef(var, "status"), "==", value)


def _statements(number: int, step: _Step, active: list[int], lits: _Literals) -> tuple:
    r = f"r{number}"
    t = f"train{step.train}"
    if step.kind == "reset":
        return (Let(r, CallExpr("reset_system")), _status_is(r, "OK"))
    if step.kind == "add":
        args = (Var(t), Var("origin"), Var("dest"), Var(f"dep{step.train}"), Var(f"arr{step.train}"))
        return (Let(r, CallExpr("add_train", args)), _status_is(r, "OK"))
    if step.kind == "get":
        return (
            Let(r, CallExpr("get_train", (Var(t),))),
            _status_is(r, "OK"),
            Assert(FieldRef(r, "dep_min"), "==", Var(f"dep{step.train}")),
            Assert(FieldRef(r, "arr_min"), "==", Var(f"arr{step.train}")),
        )
    if step.kind == "get_missing":
        return (Let(r, CallExpr("get_train", (Var(t),))), _status_is(r, "NOT_FOUND"))
    if step.kind == "cancel":
        return (Let(r, CallExpr("cancel_train", (Var(t),))), _status_is(r, "OK"))
    if step.kind == "query":
        stmts = [
            Let(r, CallExpr("query_connection", (Var("origin"), Var("dest")))),
            Assert(FieldRef(r, "count"), "==", len(active)),
        ]
        if active:
            first = min(active, key=lambda i: lits.trains[i - 1][1])
            last = max(active, key=lambda i: lits.trains[i - 1][2])
            stmts.append(Assert(FieldRef(r, "earliest_dep"), "==", Var(f"dep{first}")))
            stmts.append(Assert(FieldRef(r, "latest_arr"), "==", Var(f"arr{last}")))
        return tuple(stmts)
    if step.kind == "query_reverse":
        return (
            Let(r, CallExpr("query_connection", (Var("dest"), Var("origin")))),
            Assert(FieldRef(r, "count"), "==", 0),
        )
    args = (Var("bad_train"), Var("origin"), Var("dest"), Var("arr1"), Var("dep1"))
    return (Let(r, CallExpr("add_train", args)), _status_is(r, "ERR"))


def _script(key: str, seq: list[_Step], lits: _Literals, spec_steps: list[SpecStep]) -> TestScript:
    steps = tuple(
        StepBlock(i, " ".join(ss.action.split()), _statements(i, step, active, lits))
        for i, ((step, active), ss) in enumerate(zip(_simulate(seq), spec_steps), 1)
    )
    return TestScript(
        header_key=key,
        steps=steps,
        data=tuple(_test_data(lits, seq).items()),
        teardown=(Call(CallExpr("reset_system")),),
    )


def _misspell(script: TestScript, rng: random.Random) -> TestScript:
    """Swap one API name for a near miss, as a drafting mistake would."""
    typos = {
        "add_train": "add_tain",
        "get_train": "get_trian",
        "cancel_train": "cancel_trains",
        "query_connection": "query_connections",
    }
    sites = [
        (si, j)
        for si, step in enumerate(script.steps)
        for j, stmt in enumerate(step.statements)
        if isinstance(stmt, Let) and stmt.call.name in typos
    ]
    if not sites:
        return script
    si, j = rng.choice(sites)
    steps = list(script.steps)
    stmts = list(steps[si].statements)
    stmt = stmts[j]
    stmts[j] = Let(stmt.name, CallExpr(typos[stmt.call.name], stmt.call.args))
    steps[si] = StepBlock(steps[si].number, steps[si].title, tuple(stmts))
    return TestScript(script.header_key, tuple(steps), script.data, script.setup, script.teardown)


# -- public entry point ------------------------------------------------------


def _step_counts(rng: random.Random, count: int) -> list[int]:
    sizes, weights = zip(*_STEP_WEIGHTS.items())
    counts = list(rng.choices(sizes, weights=weights, k=count))
    pinned: set[int] = set()
    if count >= 10:
        counts[0], counts[1] = STEP_RANGE
        pinned = {0, 1}
    lo, hi = STEP_RANGE
    free = [i for i in range(count) if i not in pinned]
    while sum(counts) > MEAN_RANGE[1] * count:
        i = max(free, key=lambda k: (counts[k], -k))
        if counts[i] <= lo:
            break
        counts[i] -= 1
    while sum(counts) < MEAN_RANGE[0] * count:
        i = min(free, key=lambda k: (counts[k], k)) if free else 0
        if counts[i] >= hi:
            break
        counts[i] += 1
    rng.shuffle(counts)
    return counts


def _clarities(rng: random.Random, count: int) -> list[str]:
    grades, weights = zip(*_CLARITY_WEIGHTS.items())
    if count >= len(grades):
        out = list(grades) + rng.choices(grades, weights=weights, k=count - len(grades))
    else:
        out = rng.choices(grades, weights=weights, k=count)
    rng.shuffle(out)
    return out


def _areas(area_count: int) -> list[str]:
    return [AREAS[i] if i < len(AREAS) else f"area{i + 1}" for i in range(area_count)]


def _make_spec(
    key: str, area: str, tag: str, clarity: str, seq, lits, steps, timeout: int
) -> SpecDocument:
    n = len(steps)
    return SpecDocument(
        key=key,
        summary=f"{area.capitalize()} regression scenario {tag} with {n} steps",
        functional_area=area,
        story_points=3 + round((n - STEP_RANGE[0]) * 5 / 16),
        clarity=ClarityRating(clarity),
        ci_config=CiConfig(job=f"systest-{area}", timeout_s=timeout),
        test_data=_test_data(lits, seq),
        steps=tuple(steps),
        extra={"labels": ["regression", area]},
    )


def generate_corpus(
    seed: int, spec_count: int = 61, area_count: int = 6
) -> tuple[list[SpecDocument], list[HistoricalPair]]:
    """Build *spec_count* specifications plus a historical pair corpus.

    Deterministic for a given seed. Every A-rated spec has a same-structure
    historical twin; about half of the B-rated specs get a twin too, some of
    them carrying a misspelt API name that the repair pass has to fix.
    """
    if spec_count < 1:
        raise InvalidArgument("spec_count must be >= 1")
    if area_count < 1:
        raise InvalidArgument("area_count must be >= 1")
    rng = random.Random(seed)
    areas = _areas(area_count)
    counts = _step_counts(rng, spec_count)
    clarities = _clarities(rng, spec_count)
    slots = [areas[i % area_count] for i in range(spec_count)]
    rng.shuffle(slots)

    specs: list[SpecDocument] = []
    pairs: list[HistoricalPair] = []
    shapes: dict[str, tuple] = {}  # key -> (step kinds, train slots)
    twins: dict[str, tuple[str, str]] = {}  # A spec key -> (twin pair key, tag)

    def make_pair(key, area, tag, seq, slots_n, outcome, route=None, typo=False):
        lits = _literals(rng, slots_n, route)
        steps = _spec_steps(rng, seq, lits, "A")
        spec = _make_spec(key, area, tag, "A", seq, lits, steps, 120)
        script = _script(key, seq, lits, steps)
        if typo:
            script = _misspell(script, rng)
        return HistoricalPair(spec, render_script(script), outcome)

    def add_pair(*args, **kwargs):
        pair = make_pair(f"HIS-{len(pairs) + 1:03d}", *args, **kwargs)
        pairs.append(pair)
        return pair

    for i in range(spec_count):
        key = f"HAC-{101 + i}"
        area = slots[i]
        tag = f"{area[:3]}{i + 1:03d}"
        clarity = clarities[i]
        seq, train_slots = _scenario(rng, counts[i])
        lits = _literals(rng, train_slots)
        steps = _spec_steps(rng, seq, lits, clarity)
        specs.append(
            _make_spec(key, area, tag, clarity, seq, lits, steps, rng.choice((60, 120, 300)))
        )
        shapes[key] = (tuple(seq), train_slots)
        route = (lits.origin, lits.dest)
        if clarity == "A":
            pair = add_pair(area, tag, seq, train_slots, "accepted", route)
            twins[key] = (pair.key, tag)
        elif clarity == "B" and rng.random() < 0.5:
            typo = rng.random() < 0.5
            pair = add_pair(area, tag, seq, train_slots, "refactored" if typo else "accepted", route, typo)
        else:
            continue
        shapes[pair.key] = (tuple(seq), train_slots)

    # unrelated history so that retrieval has to discriminate
    for j in range(max(2, spec_count // 6)):
        area = areas[j % area_count]
        seq, train_slots = _scenario(rng, rng.choice(range(3, 10)))
        pair = add_pair(area, f"old{j + 1:03d}", seq, train_slots, "accepted")
        shapes[pair.key] = (tuple(seq), train_slots)

    _secure_twins(rng, specs, pairs, shapes, twins, make_pair)
    return specs, pairs


_TWIN_ATTEMPTS = 50


def _secure_twins(rng, specs, pairs, shapes, twins, make_pair) -> None:
    """Re-draw twin literals until each A spec retrieves a same-shape pair first.

    Re-drawing one twin shifts corpus statistics for the others, so the check
    repeats over the whole corpus until it is stable.
    """
    by_key = {s.key: s for s in specs}
    for _ in range(_TWIN_ATTEMPTS):
        index = build_index(pairs)
        losers = []
        for key, (twin_key, tag) in twins.items():
            top = retrieve(index, by_key[key], 1)
            if not top or shapes[top[0][0].key] != shapes[key]:
                losers.append((key, twin_key, tag))
        if not losers:
            return
        for key, twin_key, tag in losers:
            spec = by_key[key]
            seq, slots_n = shapes[key]
            pos = next(i for i, p in enumerate(pairs) if p.key == twin_key)
            old = pairs[pos].spec
            pairs[pos] = make_pair(
                twin_key,
                old.functional_area,
                tag,
                list(seq),
                slots_n,
                "accepted",
                (spec.test_data["origin"], spec.test_data["dest"]),
            )
    raise RuntimeError("could not build a corpus where every A spec retrieves its twin")

"""Shared fixtures: the care-flow example, random small universes, and a
power-set oracle for the argumentation kernel."""

from __future__ import annotations

import json
import random

import pytest

from procsift.model import (
    Constraint,
    ConstraintKind,
    DeclarativeProcessModel,
    Event,
    StepType,
    Trace,
    TypeLevelMapping,
    parse_model,
)

ALL_STEPS = ["first", "intermediate", "last", "first&last"]
CARE_EVENTS = ["BloodSample", "BloodPressure", "Temperature", "CannulaInsertion"]


def care_doc(
    restricted: bool = False,
    start: list[str] | None = None,
    max_inst: int = 1,
    constraints: list[dict] | None = None,
) -> str:
    """Care-flow model document; the restricted variant pins the first
    activity's opening to blood samples and its closing to blood pressure,
    and requires the second activity immediately after the first."""
    if restricted:
        mapping = [
            {"event": "BloodSample", "activity": "A1", "steps": ["first"]},
            {"event": "BloodSample", "activity": "A2", "steps": ALL_STEPS},
            {"event": "BloodSample", "activity": "A3", "steps": ALL_STEPS},
            {"event": "BloodPressure", "activity": "A1", "steps": ["intermediate", "last"]},
            {"event": "BloodPressure", "activity": "A2", "steps": ALL_STEPS},
            {"event": "BloodPressure", "activity": "A3", "steps": ALL_STEPS},
            {"event": "Temperature", "activity": "A1", "steps": ["intermediate"]},
            {"event": "Temperature", "activity": "A2", "steps": ALL_STEPS},
            {"event": "Temperature", "activity": "A3", "steps": ALL_STEPS},
            {"event": "CannulaInsertion", "activity": "A2", "steps": ALL_STEPS},
        ]
        start = start or ["A1"]
        if constraints is None:
            constraints = [{"kind": "precedence", "lhs": ["A1"], "rhs": ["A2"], "window": 1}]
    else:
        mapping = [
            {"event": e, "activity": a, "steps": ALL_STEPS}
            for e in CARE_EVENTS[:3]
            for a in ["A1", "A2", "A3"]
        ] + [{"event": "CannulaInsertion", "activity": "A2", "steps": ALL_STEPS}]
        start = start or ["A1", "A2", "A3"]
        constraints = constraints or []
    return json.dumps(
        {
            "activities": ["A1", "A2", "A3"],
            "event_types": CARE_EVENTS,
            "mapping": mapping,
            "start_activities": start,
            "max_instances": {a: max_inst for a in ["A1", "A2", "A3"]},
            "constraints": constraints,
        }
    )


@pytest.fixture(scope="session")
def care():
    return parse_model(care_doc())


@pytest.fixture(scope="session")
def care_restricted():
    return parse_model(care_doc(restricted=True))


def example1_trace(mapping: TypeLevelMapping, finalized: bool = True) -> Trace:
    events = tuple(
        Event(i + 1, mapping.event_type_id(name)) for i, name in enumerate(CARE_EVENTS)
    )
    return Trace("example1", events, finalized=finalized)


def example1_interpretations(mapping: TypeLevelMapping):
    """The two readings discussed for the care-flow trace."""
    a1, a2 = mapping.activity_id("A1"), mapping.activity_id("A2")
    F, I, L, FL = (
        StepType.FIRST,
        StepType.INTERMEDIATE,
        StepType.LAST,
        StepType.FIRST_AND_LAST,
    )
    i1 = ((a1, F, 1), (a1, I, 1), (a1, L, 1), (a2, FL, 1))
    i2 = ((a1, F, 1), (a1, L, 1), (a2, F, 1), (a2, L, 1))
    return i1, i2


def random_universe(rng: random.Random, max_acts: int = 4, max_events: int = 4):
    """Small random mapping + process model for oracle equivalence runs."""
    n_acts = rng.randint(2, max_acts)
    n_events = rng.randint(2, max_events)
    triples = set()
    steps = list(StepType)
    for e in range(n_events):
        for a in range(n_acts):
            if rng.random() < 0.55:
                chosen = [s for s in steps if rng.random() < 0.5] or [rng.choice(steps)]
                for s in chosen:
                    triples.add((e, a, s))
    if not triples:
        triples.add((0, 0, StepType.FIRST_AND_LAST))
    mapping = TypeLevelMapping(
        tuple(f"E{i}" for i in range(n_events)),
        tuple(f"A{i}" for i in range(n_acts)),
        frozenset(triples),
    )
    start = frozenset(rng.sample(range(n_acts), rng.randint(1, n_acts)))
    max_inst = tuple(rng.choice([1, 2, 3, None]) for _ in range(n_acts))
    constraints = []
    for _ in range(rng.randint(0, 3)):
        kind = rng.choice(list(ConstraintKind))
        window = rng.choice([1, 2, 3, None])
        if kind is ConstraintKind.MUST:
            lhs = (rng.randrange(n_acts),)
            rhs = tuple(rng.sample(range(n_acts), rng.randint(1, min(2, n_acts))))
        elif kind is ConstraintKind.PRECEDENCE:
            lhs = tuple(rng.sample(range(n_acts), rng.randint(1, min(2, n_acts))))
            rhs = (rng.randrange(n_acts),)
        else:
            lhs = (rng.randrange(n_acts),)
            rhs = (rng.randrange(n_acts),)
        constraints.append(Constraint(kind, lhs, rhs, window))
    model = DeclarativeProcessModel(n_acts, start, max_inst, tuple(constraints))
    return mapping, model


def random_trace(rng: random.Random, mapping: TypeLevelMapping, max_len: int = 8) -> Trace:
    n = rng.randint(1, max_len)
    return Trace(
        "random",
        tuple(Event(i + 1, rng.randrange(mapping.n_event_types)) for i in range(n)),
        finalized=rng.random() < 0.5,
    )


def naive_preferred(n: int, attacks: list[tuple[int, int]]) -> list[tuple[int, ...]]:
    """Power-set enumeration of preferred extensions over bitmasks."""
    target_mask = [0] * n
    attacker_mask = [0] * n
    for s, d in attacks:
        target_mask[s] |= 1 << d
        attacker_mask[d] |= 1 << s
    admissible = []
    for subset in range(1 << n):
        members = [i for i in range(n) if subset >> i & 1]
        if any(target_mask[i] & subset for i in members):
            continue
        attacked = 0
        for i in members:
            attacked |= target_mask[i]
        if all(attacker_mask[i] & ~attacked == 0 for i in members):
            admissible.append(subset)
    maximal = [
        s for s in admissible if not any(s != t and s & t == s for t in admissible)
    ]
    return sorted(tuple(i for i in range(n) if s >> i & 1) for s in maximal)

"""Domain model for low-level event interpretation.

Holds the vocabulary (life-cycle steps, event types, activities), the
type-level mapping between event types and activity steps, the declarative
process model (start activities, instance bounds, windowed temporal
constraints), model-file parsing/serialization, and a brute-force validity
oracle (`validate_interpretation` / `enumerate_valid`) that defines ground
truth for every reasoner test in the suite.

Activities and event types are dense integer handles; display names live in
the `TypeLevelMapping` vocabulary and only matter at the parse/API boundary.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

from .errors import BudgetExceeded, ContractError, SchemaError


class StepType(Enum):
    """Life-cycle stage of an event within one activity instance."""

    FIRST = "first"
    INTERMEDIATE = "intermediate"
    LAST = "last"
    FIRST_AND_LAST = "first&last"

    @property
    def opens(self) -> bool:
        return self in (StepType.FIRST, StepType.FIRST_AND_LAST)

    @property
    def closes(self) -> bool:
        return self in (StepType.LAST, StepType.FIRST_AND_LAST)

    @property
    def rank(self) -> int:
        return _STEP_RANK[self]


_STEP_RANK = {s: i for i, s in enumerate(StepType)}
_STEP_BY_NAME = {s.value: s for s in StepType}


def step_from_name(name: str) -> StepType:
    try:
        return _STEP_BY_NAME[name]
    except KeyError:
        raise SchemaError(f"unknown step type {name!r}") from None


@dataclass(frozen=True)
class Event:
    """One low-level event: 1-based trace position, event-type handle, extra fields."""

    index: int
    etype: int
    attrs: tuple[tuple[str, float | int | str], ...] = ()

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ContractError(f"event index must be >= 1, got {self.index}")


@dataclass(frozen=True)
class Trace:
    id: str
    events: tuple[Event, ...]
    finalized: bool = False

    def __post_init__(self) -> None:
        for pos, ev in enumerate(self.events, start=1):
            if ev.index != pos:
                raise ContractError(
                    f"trace {self.id!r}: event at position {pos} carries index {ev.index}"
                )

    def __len__(self) -> int:
        return len(self.events)


# One (activity, step, instance) assignment per event, in trace order.
InterpStep = tuple[int, StepType, int]
Interpretation = tuple[InterpStep, ...]


@dataclass(frozen=True)
class TypeLevelMapping:
    """The relation saying which event types can occur as which steps of which activities."""

    event_types: tuple[str, ...]
    activities: tuple[str, ...]
    triples: frozenset[tuple[int, int, StepType]]

    def __post_init__(self) -> None:
        if len(set(self.event_types)) != len(self.event_types):
            raise SchemaError("event type names must be unique")
        if len(set(self.activities)) != len(self.activities):
            raise SchemaError("activity names must be unique")
        for et, act, step in self.triples:
            if not 0 <= et < len(self.event_types):
                raise SchemaError(f"mapping triple references unknown event type id {et}")
            if not 0 <= act < len(self.activities):
                raise SchemaError(f"mapping triple references unknown activity id {act}")
            if not isinstance(step, StepType):
                raise SchemaError(f"mapping triple carries a non-step value {step!r}")

    @property
    def n_event_types(self) -> int:
        return len(self.event_types)

    @property
    def n_activities(self) -> int:
        return len(self.activities)

    @cached_property
    def _steps_by_etype(self) -> dict[int, frozenset[tuple[int, StepType]]]:
        acc: dict[int, set[tuple[int, StepType]]] = {e: set() for e in range(self.n_event_types)}
        for et, act, step in self.triples:
            acc[et].add((act, step))
        return {e: frozenset(v) for e, v in acc.items()}

    def _check_etype(self, etype: int) -> None:
        if not 0 <= etype < self.n_event_types:
            raise SchemaError(f"event type id {etype} not declared in the mapping universe")

    def cand_act(self, etype: int) -> frozenset[int]:
        """Activities that can generate an event of the given type."""
        self._check_etype(etype)
        return frozenset(a for a, _ in self._steps_by_etype[etype])

    def cand_steps(self, etype: int) -> frozenset[tuple[int, StepType]]:
        """(activity, step) pairs an event of the given type can be read as."""
        self._check_etype(etype)
        return self._steps_by_etype[etype]

    def max_candidate_activities(self) -> int:
        """Largest |cand_act| over all event types (the 'auto' beam width)."""
        return max((len(self.cand_act(e)) for e in range(self.n_event_types)), default=0)

    def activity_id(self, name: str) -> int:
        try:
            return self.activities.index(name)
        except ValueError:
            raise SchemaError(f"unknown activity {name!r}") from None

    def event_type_id(self, name: str) -> int:
        try:
            return self.event_types.index(name)
        except ValueError:
            raise SchemaError(f"unknown event type {name!r}") from None


class ConstraintKind(Enum):
    MUST = "must"
    NOT = "not"
    PRECEDENCE = "precedence"
    NEG_PRECEDENCE = "neg_precedence"


@dataclass(frozen=True)
class Constraint:
    """Windowed temporal rule over activity instances.

    Semantics, with T the window (None = unbounded):
      MUST           lhs=[A], rhs=[B1..Bk]: a closing of A at i needs an opening of
                     some B in (i, i+T].
      NOT            lhs=[A], rhs=[B]: no opening of B in (i, i+T] after a closing
                     of A at i.
      PRECEDENCE     lhs=[A1..Ak], rhs=[B]: each opening of B at i needs a closing
                     of some A in [i-T, i-1].
      NEG_PRECEDENCE lhs=[A], rhs=[B]: no closing of A in [i-T, i-1] before an
                     opening of B at i.
    """

    kind: ConstraintKind
    lhs: tuple[int, ...]
    rhs: tuple[int, ...]
    window: int | None = None

    def __post_init__(self) -> None:
        if self.window is not None and self.window < 1:
            raise SchemaError("window must be >= 1")
        if not self.lhs or not self.rhs:
            raise SchemaError(f"{self.kind.value} constraint needs non-empty sides")
        if self.kind in (ConstraintKind.MUST, ConstraintKind.NOT, ConstraintKind.NEG_PRECEDENCE):
            if len(self.lhs) != 1:
                raise SchemaError(f"{self.kind.value} constraint takes a single lhs activity")
        if self.kind in (ConstraintKind.NOT, ConstraintKind.NEG_PRECEDENCE, ConstraintKind.PRECEDENCE):
            if len(self.rhs) != 1:
                raise SchemaError(f"{self.kind.value} constraint takes a single rhs activity")


@dataclass(frozen=True)
class DeclarativeProcessModel:
    n_activities: int
    start_acts: frozenset[int]
    max_inst: tuple[int | None, ...]  # None = unbounded
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self) -> None:
        if not self.start_acts:
            raise SchemaError("start_activities must be non-empty")
        if len(self.max_inst) != self.n_activities:
            raise SchemaError("max_instances must cover every activity")
        for a in self.start_acts:
            if not 0 <= a < self.n_activities:
                raise SchemaError(f"start activity id {a} out of range")
        for bound in self.max_inst:
            if bound is not None and bound < 1:
                raise SchemaError("max_instances values must be >= 1 (0 means unbounded)")
        for con in self.constraints:
            for a in con.lhs + con.rhs:
                if not 0 <= a < self.n_activities:
                    raise SchemaError(f"constraint references unknown activity id {a}")


@dataclass(frozen=True)
class Violation:
    """One failed validity rule, pinned to the event indices it involves."""

    rule: str
    indices: tuple[int, ...]
    constraint: int | None = None

    def _key(self):
        return (self.rule, self.indices, -1 if self.constraint is None else self.constraint)


def interp_sort_key(step: InterpStep):
    a, s, j = step
    return (a, s.rank, j)


def max_instance_bound(model: DeclarativeProcessModel, activity: int, index: int) -> int:
    """Largest instance counter an argument at `index` may carry for `activity`."""
    bound = model.max_inst[activity]
    return index if bound is None else min(bound, index)


def validate_interpretation(
    trace: Trace,
    interp: Interpretation,
    mapping: TypeLevelMapping,
    model: DeclarativeProcessModel,
) -> tuple[Violation, ...]:
    """Check a total interpretation of `trace`; empty result means valid.

    Rules (numbered for violation reporting):
      V1 every reading is licensed by the type-level mapping;
      V2 event 1 is an opening step, instance 1, of a start activity;
      V3 per (activity, instance): at most one opening and one closing, the
         opening precedes every other step, nothing follows the closing, and
         a first&last step is the instance's only step;
      V4 openings of instance j>1 come strictly after the opening of j-1,
         and instance counters respect the per-activity bound;
      V5 must-constraints, once their window is observable (window inside the
         prefix, or the trace finalized with the window truncated to its end);
      V6 not-constraints (violating openings visible in the prefix);
      V7 precedence-constraints;
      V8 negative precedence-constraints;
      V9 on a finalized trace every opened instance is closed.

    Forward windows reaching past an unfinalized prefix are treated as
    pending, so prefix validity means "some continuation could comply".
    """
    n = len(trace.events)
    if len(interp) != n:
        raise ContractError(f"interpretation covers {len(interp)} events, trace has {n}")

    out: set[Violation] = set()

    for ev, (a, s, j) in zip(trace.events, interp):
        if not 0 <= a < mapping.n_activities:
            raise ContractError(f"activity id {a} out of range at event {ev.index}")
        if j < 1:
            raise ContractError(f"instance counter must be >= 1 at event {ev.index}")
        if (ev.etype, a, s) not in mapping.triples:
            out.add(Violation("V1", (ev.index,)))
        bound = model.max_inst[a]
        if bound is not None and j > bound:
            out.add(Violation("V4", (ev.index,)))

    if n:
        a, s, j = interp[0]
        if not (s.opens and a in model.start_acts and j == 1):
            out.add(Violation("V2", (1,)))

    groups: dict[tuple[int, int], list[tuple[int, StepType]]] = {}
    for ev, (a, s, j) in zip(trace.events, interp):
        groups.setdefault((a, j), []).append((ev.index, s))

    openings_of: dict[int, list[int]] = {}
    closings_of: dict[int, list[int]] = {}
    for ev, (a, s, j) in zip(trace.events, interp):
        if s.opens:
            openings_of.setdefault(a, []).append(ev.index)
        if s.closes:
            closings_of.setdefault(a, []).append(ev.index)

    for (a, j), steps in groups.items():
        opens = [i for i, s in steps if s.opens]
        closes = [i for i, s in steps if s.closes]
        fl = [i for i, s in steps if s is StepType.FIRST_AND_LAST]
        if len(opens) > 1:
            out.add(Violation("V3", tuple(opens)))
        if len(closes) > 1:
            out.add(Violation("V3", tuple(closes)))
        if fl and len(steps) > 1:
            out.add(Violation("V3", tuple(i for i, _ in steps)))
        first_open = min(opens) if opens else None
        for i, s in steps:
            if not s.opens and (first_open is None or i < first_open):
                out.add(Violation("V3", (i,)))
        if closes:
            cmin = min(closes)
            for i, _ in steps:
                if i > cmin:
                    out.add(Violation("V3", (cmin, i)))

    for (a, j), steps in groups.items():
        if j <= 1:
            continue
        opens = [i for i, s in steps if s.opens]
        prev = groups.get((a, j - 1), [])
        prev_opens = [i for i, s in prev if s.opens]
        anchor = min(opens) if opens else min(i for i, _ in steps)
        if not prev_opens:
            out.add(Violation("V4", (anchor,)))
        elif opens and min(prev_opens) >= min(opens):
            out.add(Violation("V4", (min(prev_opens), min(opens))))

    for q, con in enumerate(model.constraints):
        T = con.window
        if con.kind is ConstraintKind.MUST:
            a = con.lhs[0]
            for idx in closings_of.get(a, ()):
                if T is None:
                    decidable, end = trace.finalized, n
                elif idx + T <= n:
                    decidable, end = True, idx + T
                else:
                    decidable, end = trace.finalized, n
                if not decidable:
                    continue
                hit = any(
                    idx < m <= end
                    for b in con.rhs
                    for m in openings_of.get(b, ())
                )
                if not hit:
                    out.add(Violation("V5", (idx,), q))
        elif con.kind is ConstraintKind.NOT:
            a, b = con.lhs[0], con.rhs[0]
            for idx in closings_of.get(a, ()):
                hi = n if T is None else min(idx + T, n)
                for m in openings_of.get(b, ()):
                    if idx < m <= hi:
                        out.add(Violation("V6", (idx, m), q))
        elif con.kind is ConstraintKind.PRECEDENCE:
            b = con.rhs[0]
            for idx in openings_of.get(b, ()):
                lo = 1 if T is None else max(1, idx - T)
                hit = any(
                    lo <= m < idx
                    for a in con.lhs
                    for m in closings_of.get(a, ())
                )
                if not hit:
                    out.add(Violation("V7", (idx,), q))
        else:  # NEG_PRECEDENCE
            a, b = con.lhs[0], con.rhs[0]
            for idx in openings_of.get(b, ()):
                lo = 1 if T is None else max(1, idx - T)
                for m in closings_of.get(a, ()):
                    if lo <= m < idx:
                        out.add(Violation("V8", (m, idx), q))

    if trace.finalized:
        for (a, j), steps in groups.items():
            opens = [i for i, s in steps if s.opens]
            if opens and not any(s.closes for _, s in steps):
                out.add(Violation("V9", (min(opens),)))

    return tuple(sorted(out, key=Violation._key))


def is_valid(
    trace: Trace,
    interp: Interpretation,
    mapping: TypeLevelMapping,
    model: DeclarativeProcessModel,
) -> bool:
    return not validate_interpretation(trace, interp, mapping, model)


def candidate_readings(
    mapping: TypeLevelMapping, model: DeclarativeProcessModel, event: Event
) -> list[InterpStep]:
    """All (activity, step, instance) readings an event can carry, before
    cross-event checks. Event 1 is pre-pruned to opening steps of start
    activities with instance 1, which V2 would reject anyway."""
    opts: list[InterpStep] = []
    for a, s in sorted(mapping.cand_steps(event.etype), key=lambda p: (p[0], p[1].rank)):
        if event.index == 1 and not (s.opens and a in model.start_acts):
            continue
        jmax = 1 if event.index == 1 else max_instance_bound(model, a, event.index)
        opts.extend((a, s, j) for j in range(1, jmax + 1))
    return opts


def enumerate_valid(
    trace: Trace,
    mapping: TypeLevelMapping,
    model: DeclarativeProcessModel,
    budget: int = 1_000_000,
) -> tuple[Interpretation, ...]:
    """Exhaustively enumerate the valid interpretations of `trace`.

    The assignment space is the product of per-event candidate readings; if
    its size exceeds `budget` the search refuses to run rather than truncate.
    """
    cands = [candidate_readings(mapping, model, ev) for ev in trace.events]
    size = 1
    for opts in cands:
        size *= len(opts)
    if size > budget:
        raise BudgetExceeded(
            f"assignment space of {size} interpretations exceeds budget {budget}"
        )
    found = [
        assign
        for assign in itertools.product(*cands)
        if not validate_interpretation(trace, assign, mapping, model)
    ]
    return tuple(sorted(found, key=lambda i: tuple(interp_sort_key(s) for s in i)))


# --- model file parsing / canonical serialization -------------------------

_TOP_KEYS = {
    "activities",
    "event_types",
    "mapping",
    "start_activities",
    "max_instances",
    "constraints",
}


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise SchemaError(msg)


def parse_model(text: str) -> tuple[TypeLevelMapping, DeclarativeProcessModel]:
    """Parse a JSON model document into the mapping and process model.

    A window or max_instances value of 0 encodes "unbounded". Errors carry
    the offending key or list position.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"model document is not valid JSON: {exc}") from None
    _require(isinstance(doc, dict), "model document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    _require(not unknown, f"unknown top-level keys: {sorted(unknown)}")
    for key in ("activities", "event_types", "mapping", "start_activities", "max_instances"):
        _require(key in doc, f"missing top-level key {key!r}")

    activities = doc["activities"]
    event_types = doc["event_types"]
    _require(
        isinstance(activities, list) and all(isinstance(a, str) for a in activities),
        "activities: must be a list of names",
    )
    _require(
        isinstance(event_types, list) and all(isinstance(e, str) for e in event_types),
        "event_types: must be a list of names",
    )
    act_id = {name: i for i, name in enumerate(activities)}
    et_id = {name: i for i, name in enumerate(event_types)}
    _require(len(act_id) == len(activities), "activities: duplicate names")
    _require(len(et_id) == len(event_types), "event_types: duplicate names")

    triples: set[tuple[int, int, StepType]] = set()
    _require(isinstance(doc["mapping"], list), "mapping: must be a list")
    for pos, entry in enumerate(doc["mapping"]):
        locus = f"mapping[{pos}]"
        _require(isinstance(entry, dict), f"{locus}: must be an object")
        for key in ("event", "activity", "steps"):
            _require(key in entry, f"{locus}: missing {key!r}")
        _require(entry["event"] in et_id, f"{locus}.event: unknown event type {entry['event']!r}")
        _require(
            entry["activity"] in act_id,
            f"{locus}.activity: unknown activity {entry['activity']!r}",
        )
        steps = entry["steps"]
        _require(isinstance(steps, list) and steps, f"{locus}.steps: must be a non-empty list")
        for s in steps:
            _require(
                isinstance(s, str) and s in _STEP_BY_NAME,
                f"{locus}.steps: unknown step {s!r}",
            )
            triple = (et_id[entry["event"]], act_id[entry["activity"]], _STEP_BY_NAME[s])
            _require(triple not in triples, f"{locus}: duplicate triple {entry['event']}/{entry['activity']}/{s}")
            triples.add(triple)

    starts = doc["start_activities"]
    _require(isinstance(starts, list) and starts, "start_activities: must be a non-empty list")
    for name in starts:
        _require(name in act_id, f"start_activities: unknown activity {name!r}")

    maxinst_doc = doc["max_instances"]
    _require(isinstance(maxinst_doc, dict), "max_instances: must be an object")
    for name in maxinst_doc:
        _require(name in act_id, f"max_instances: unknown activity {name!r}")
    bounds: list[int | None] = []
    for name in activities:
        _require(name in maxinst_doc, f"max_instances: missing entry for {name!r}")
        v = maxinst_doc[name]
        _require(isinstance(v, int) and v >= 0, f"max_instances[{name!r}]: must be an integer >= 0")
        bounds.append(None if v == 0 else v)

    constraints: list[Constraint] = []
    for pos, entry in enumerate(doc.get("constraints", [])):
        locus = f"constraints[{pos}]"
        _require(isinstance(entry, dict), f"{locus}: must be an object")
        for key in ("kind", "lhs", "rhs", "window"):
            _require(key in entry, f"{locus}: missing {key!r}")
        kind_name = entry["kind"]
        kinds = {k.value: k for k in ConstraintKind}
        _require(kind_name in kinds, f"{locus}.kind: unknown kind {kind_name!r}")
        for side in ("lhs", "rhs"):
            _require(
                isinstance(entry[side], list)
                and all(isinstance(a, str) for a in entry[side]),
                f"{locus}.{side}: must be a list of activity names",
            )
            for name in entry[side]:
                _require(name in act_id, f"{locus}.{side}: unknown activity {name!r}")
        w = entry["window"]
        _require(isinstance(w, int) and w >= 0, f"{locus}.window: must be an integer >= 0")
        try:
            constraints.append(
                Constraint(
                    kind=kinds[kind_name],
                    lhs=tuple(act_id[a] for a in entry["lhs"]),
                    rhs=tuple(act_id[a] for a in entry["rhs"]),
                    window=None if w == 0 else w,
                )
            )
        except SchemaError as exc:
            raise SchemaError(f"{locus}: {exc}") from None

    mapping = TypeLevelMapping(tuple(event_types), tuple(activities), frozenset(triples))
    model = DeclarativeProcessModel(
        n_activities=len(activities),
        start_acts=frozenset(act_id[a] for a in starts),
        max_inst=tuple(bounds),
        constraints=tuple(constraints),
    )
    return mapping, model


def serialize_model(mapping: TypeLevelMapping, model: DeclarativeProcessModel) -> str:
    """Canonical JSON form: sorted keys, sorted vocabularies and entry lists."""
    acts = sorted(mapping.activities)
    ets = sorted(mapping.event_types)
    entries: dict[tuple[str, str], list[StepType]] = {}
    for et, act, step in mapping.triples:
        entries.setdefault((mapping.event_types[et], mapping.activities[act]), []).append(step)
    mapping_doc = [
        {
            "activity": act_name,
            "event": et_name,
            "steps": [s.value for s in sorted(steps, key=lambda s: s.rank)],
        }
        for (et_name, act_name), steps in sorted(entries.items())
    ]
    con_doc = sorted(
        (
            {
                "kind": c.kind.value,
                "lhs": sorted(mapping.activities[a] for a in c.lhs),
                "rhs": sorted(mapping.activities[a] for a in c.rhs),
                "window": 0 if c.window is None else c.window,
            }
            for c in model.constraints
        ),
        key=lambda d: (d["kind"], d["lhs"], d["rhs"], d["window"]),
    )
    doc = {
        "activities": acts,
        "constraints": con_doc,
        "event_types": ets,
        "mapping": mapping_doc,
        "max_instances": {
            mapping.activities[a]: 0 if model.max_inst[a] is None else model.max_inst[a]
            for a in range(mapping.n_activities)
        },
        "start_activities": sorted(mapping.activities[a] for a in model.start_acts),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"

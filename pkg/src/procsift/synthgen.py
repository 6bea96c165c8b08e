"""Synthetic model and trace generation.

Models are sampled to match the target statistics: 16 activities and 16
event types, each event type mapped to 1..5 activities (2.5 on average), a
constraint census of 6 must / 4 not / 2 precedence rules, per-activity
instance lengths in 1..5 and at most 5 instances per activity. A sampled
model is accepted only if a trial trace of every target length can actually
be generated.

Traces are built by simulating interleaved activity instances: each open
instance carries a planned length, emissions are chosen step by step under
the constraints (pending must-windows become hard deadlines, not-windows
block openings, precedence is checked against the closing history), and the
whole attempt is rejected and retried if it dead-ends. Every emitted trace
is checked against the validity oracle before it is returned, so the
generator cannot ship an invalid label.

Generation is deterministic: each trace draws from a generator seeded by
(dataset seed, trace number), so datasets are reproducible byte for byte
under any schedule.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, SchemaError
from .model import (
    Constraint,
    ConstraintKind,
    DeclarativeProcessModel,
    Event,
    Interpretation,
    StepType,
    Trace,
    TypeLevelMapping,
    step_from_name,
    validate_interpretation,
)


class GenerationError(RuntimeError):
    """Model sampling or trace simulation exhausted its retry budget."""


@dataclass(frozen=True)
class LabeledTrace:
    trace: Trace
    labels: Interpretation

    def activity_labels(self) -> tuple[int, ...]:
        return tuple(a for a, _, _ in self.labels)


@dataclass(frozen=True)
class SynModelSpec:
    """Statistics the sampled model must satisfy."""

    n_activities: int = 16
    n_event_types: int = 16
    acts_per_event: tuple[int, int] = (1, 5)
    mean_acts_per_event: float = 2.5
    mean_tolerance: float = 0.5
    n_must: int = 6
    n_not: int = 4
    n_precedence: int = 2
    n_neg_precedence: int = 0
    instance_length: tuple[int, int] = (1, 5)
    max_instances: int = 5
    n_start: tuple[int, int] = (3, 5)
    window: tuple[int, int] = (2, 6)
    trial_lengths: tuple[int, ...] = (20, 40, 60)


@dataclass(frozen=True)
class DatasetSpec:
    """How many traces of which lengths, from which seed."""

    counts: dict[int, int] = field(default_factory=dict)
    seed: int = 0
    max_parallel: int = 3

    def __post_init__(self) -> None:
        for length, count in self.counts.items():
            if length < 1:
                raise ContractError(f"trace length must be >= 1, got {length}")
            if count < 0:
                raise ContractError(f"trace count must be >= 0, got {count}")


# weights over 1..5 mapped activities per event type; mean exactly 2.5
_ACT_COUNT_WEIGHTS = (0.30, 0.25, 0.20, 0.15, 0.10)


def generate_syn_model(
    spec: SynModelSpec | None = None, seed: int = 0
) -> tuple[TypeLevelMapping, DeclarativeProcessModel]:
    """Sample a model matching `spec`; resamples (up to 100 times) until the
    statistics hold and a trial trace of every target length generates."""
    spec = spec or SynModelSpec()
    for attempt in range(100):
        rng = np.random.default_rng([seed, attempt])
        try:
            mapping, model = _sample_model(spec, rng)
        except GenerationError:
            continue
        if _trial_ok(mapping, model, spec, rng):
            return mapping, model
    raise GenerationError(f"no feasible model found for seed {seed} after 100 attempts")


def _sample_model(spec: SynModelSpec, rng: np.random.Generator):
    nA, nE = spec.n_activities, spec.n_event_types
    activities = tuple(f"A{i:02d}" for i in range(nA))
    event_types = tuple(f"E{i:02d}" for i in range(nE))

    lo, hi = spec.acts_per_event
    counts = rng.choice(
        np.arange(lo, hi + 1), size=nE, p=np.array(_ACT_COUNT_WEIGHTS[lo - 1 : hi])
    )
    if abs(float(counts.mean()) - spec.mean_acts_per_event) > spec.mean_tolerance:
        raise GenerationError("mapped-activity mean outside tolerance")

    # choose which activities each event type maps to; round-robin seeding
    # guarantees every activity can emit at least one event type
    acts_of_event: list[set[int]] = [set() for _ in range(nE)]
    for a in range(nA):
        acts_of_event[a % nE].add(a)
    for e in range(nE):
        want = int(counts[e])
        pool = [a for a in range(nA) if a not in acts_of_event[e]]
        rng.shuffle(pool)
        while len(acts_of_event[e]) < want and pool:
            acts_of_event[e].add(pool.pop())
        # the round-robin seed may have overshot the drawn count; keep it,
        # the census check below uses the actual sets
    actual = np.array([len(s) for s in acts_of_event], dtype=float)
    if actual.max() > hi or actual.min() < lo:
        raise GenerationError("per-event activity count outside range")
    if abs(float(actual.mean()) - spec.mean_acts_per_event) > spec.mean_tolerance:
        raise GenerationError("final mapped-activity mean outside tolerance")

    all_steps = list(StepType)
    triples: set[tuple[int, int, StepType]] = set()
    for e in range(nE):
        for a in acts_of_event[e]:
            chosen = [s for s in all_steps if rng.random() < 0.55]
            if not chosen:
                chosen = [all_steps[int(rng.integers(len(all_steps)))]]
            for s in chosen:
                triples.add((e, a, s))
    # every activity needs full step coverage so instance lengths 1..5 are
    # realizable; patch missing steps onto a random mapped event type
    events_of_act: dict[int, list[int]] = {a: [] for a in range(nA)}
    for e in range(nE):
        for a in acts_of_event[e]:
            events_of_act[a].append(e)
    for a in range(nA):
        carriers = events_of_act[a]
        if not carriers:
            raise GenerationError("activity with no mapped event type")
        for s in all_steps:
            if not any((e, a, s) in triples for e in carriers):
                triples.add((int(rng.choice(carriers)), a, s))

    start_count = int(rng.integers(spec.n_start[0], spec.n_start[1] + 1))
    start_acts = frozenset(int(a) for a in rng.choice(nA, size=start_count, replace=False))

    wlo, whi = spec.window
    constraints: list[Constraint] = []
    seen: set[tuple] = set()

    def sample_distinct(k: int) -> list[int]:
        return [int(x) for x in rng.choice(nA, size=k, replace=False)]

    guard = 0
    while len(constraints) < spec.n_must:
        guard += 1
        if guard > 500:
            raise GenerationError("could not sample constraints")
        k = int(rng.integers(1, 3))
        acts = sample_distinct(k + 1)
        key = ("must", acts[0], tuple(sorted(acts[1:])))
        if key in seen:
            continue
        seen.add(key)
        constraints.append(
            Constraint(
                ConstraintKind.MUST,
                (acts[0],),
                tuple(sorted(acts[1:])),
                int(rng.integers(wlo, whi + 1)),
            )
        )
    while len(constraints) < spec.n_must + spec.n_not:
        guard += 1
        if guard > 1000:
            raise GenerationError("could not sample constraints")
        a, b = sample_distinct(2)
        key = ("not", a, b)
        if key in seen:
            continue
        seen.add(key)
        constraints.append(
            Constraint(ConstraintKind.NOT, (a,), (b,), int(rng.integers(wlo, whi + 1)))
        )
    while len(constraints) < spec.n_must + spec.n_not + spec.n_precedence:
        guard += 1
        if guard > 1500:
            raise GenerationError("could not sample constraints")
        k = int(rng.integers(1, 3))
        acts = sample_distinct(k + 1)
        b = acts[0]
        if b in start_acts:
            continue  # a precedence target could never start the trace
        key = ("prec", tuple(sorted(acts[1:])), b)
        if key in seen:
            continue
        seen.add(key)
        constraints.append(
            Constraint(
                ConstraintKind.PRECEDENCE,
                tuple(sorted(acts[1:])),
                (b,),
                int(rng.integers(wlo, whi + 1)),
            )
        )
    while len(constraints) < spec.n_must + spec.n_not + spec.n_precedence + spec.n_neg_precedence:
        guard += 1
        if guard > 2000:
            raise GenerationError("could not sample constraints")
        a, b = sample_distinct(2)
        key = ("nprec", a, b)
        if key in seen:
            continue
        seen.add(key)
        constraints.append(
            Constraint(ConstraintKind.NEG_PRECEDENCE, (a,), (b,), int(rng.integers(wlo, whi + 1)))
        )

    mapping = TypeLevelMapping(event_types, activities, frozenset(triples))
    model = DeclarativeProcessModel(
        n_activities=nA,
        start_acts=start_acts,
        max_inst=tuple(spec.max_instances for _ in range(nA)),
        constraints=tuple(constraints),
    )
    return mapping, model


def _trial_ok(mapping, model, spec: SynModelSpec, rng: np.random.Generator) -> bool:
    for length in spec.trial_lengths:
        try:
            generate_trace(mapping, model, length, rng, retries=400)
        except GenerationError:
            return False
    return True


# --- trace simulation --------------------------------------------------------


@dataclass
class _OpenInstance:
    activity: int
    instance: int
    plan: int
    done: int


def _steps_index(mapping: TypeLevelMapping) -> dict[tuple[int, StepType], list[int]]:
    idx: dict[tuple[int, StepType], list[int]] = {}
    for e, a, s in mapping.triples:
        idx.setdefault((a, s), []).append(e)
    for v in idx.values():
        v.sort()
    return idx


def generate_trace(
    mapping: TypeLevelMapping,
    model: DeclarativeProcessModel,
    length: int,
    rng: np.random.Generator,
    max_parallel: int | None = None,
    retries: int = 10_000,
    trace_id: str = "trace",
) -> LabeledTrace:
    """One finalized trace of exactly `length` events with its ground-truth
    interpretation; raises GenerationError when the length is infeasible
    within the retry budget."""
    if length < 1:
        raise ContractError("length must be >= 1")
    steps_for = _steps_index(mapping)
    for _ in range(retries):
        result = _try_trace(mapping, model, length, rng, steps_for, max_parallel, trace_id)
        if result is None:
            continue
        if validate_interpretation(result.trace, result.labels, mapping, model):
            continue  # constraint interplay the simulator missed; resample
        return result
    raise GenerationError(
        f"no valid trace of length {length} found within {retries} attempts"
    )


def _feasible_plans(
    activity: int,
    steps_for: dict,
    lo: int,
    hi: int,
) -> list[int]:
    has = {s: bool(steps_for.get((activity, s))) for s in StepType}
    plans = []
    for ln in range(lo, hi + 1):
        if ln == 1:
            if has[StepType.FIRST_AND_LAST]:
                plans.append(1)
        elif has[StepType.FIRST] and has[StepType.LAST] and (
            ln == 2 or has[StepType.INTERMEDIATE]
        ):
            plans.append(ln)
    return plans


def _try_trace(mapping, model, length, rng, steps_for, max_parallel, trace_id):
    nA = model.n_activities
    par_cap = int(rng.integers(1, 4)) if max_parallel is None else max_parallel
    must_rules: dict[int, list[Constraint]] = {}
    not_rules: dict[int, list[Constraint]] = {}
    prec_rules: dict[int, list[Constraint]] = {}
    nprec_rules: dict[int, list[Constraint]] = {}
    for con in model.constraints:
        if con.kind is ConstraintKind.MUST:
            must_rules.setdefault(con.lhs[0], []).append(con)
        elif con.kind is ConstraintKind.NOT:
            not_rules.setdefault(con.lhs[0], []).append(con)
        elif con.kind is ConstraintKind.PRECEDENCE:
            prec_rules.setdefault(con.rhs[0], []).append(con)
        else:
            nprec_rules.setdefault(con.rhs[0], []).append(con)

    open_insts: list[_OpenInstance] = []
    started = [0] * nA
    closings: dict[int, list[int]] = {}
    blocked_until = [0] * nA
    obligations: list[dict] = []  # start, deadline, rhs, satisfied
    events: list[Event] = []
    labels: list = []

    def close_feasible(activity: int, pos: int) -> bool:
        for con in must_rules.get(activity, ()):
            deadline = length if con.window is None else min(pos + con.window, length)
            if deadline <= pos:
                return False  # the must-window would be empty
        return True

    def record_closing(activity: int, pos: int) -> None:
        closings.setdefault(activity, []).append(pos)
        for con in must_rules.get(activity, ()):
            deadline = length if con.window is None else min(pos + con.window, length)
            obligations.append(
                {"start": pos, "deadline": deadline, "rhs": set(con.rhs), "satisfied": False}
            )
        for con in not_rules.get(activity, ()):
            until = length if con.window is None else pos + con.window
            b = con.rhs[0]
            blocked_until[b] = max(blocked_until[b], until)

    def opening_allowed(activity: int, pos: int) -> bool:
        if blocked_until[activity] >= pos:
            return False
        for con in prec_rules.get(activity, ()):
            lo = 1 if con.window is None else max(1, pos - con.window)
            if not any(
                lo <= m < pos for a in con.lhs for m in closings.get(a, ())
            ):
                return False
        for con in nprec_rules.get(activity, ()):
            lo = 1 if con.window is None else max(1, pos - con.window)
            if any(lo <= m < pos for m in closings.get(con.lhs[0], ())):
                return False
        return True

    def mark_satisfied(activity: int, pos: int) -> None:
        for ob in obligations:
            if not ob["satisfied"] and activity in ob["rhs"] and ob["start"] < pos <= ob["deadline"]:
                ob["satisfied"] = True

    lo_len, hi_len = 1, 5
    for pos in range(1, length + 1):
        remaining = length - pos + 1
        committed = sum(inst.plan - inst.done for inst in open_insts)
        due = [ob for ob in obligations if not ob["satisfied"] and ob["deadline"] == pos]
        required: set[int] | None = None
        if due:
            required = set.intersection(*(ob["rhs"] for ob in due))
            if not required:
                return None

        options: list[tuple] = []
        if required is None:
            for inst in open_insts:
                step = StepType.LAST if inst.done == inst.plan - 1 else StepType.INTERMEDIATE
                if step is StepType.LAST and not close_feasible(inst.activity, pos):
                    continue
                options.append(("continue", inst, step))
        if committed < remaining and len(open_insts) < par_cap:
            for a in range(nA):
                if required is not None and a not in required:
                    continue
                bound = model.max_inst[a]
                if bound is not None and started[a] >= bound:
                    continue
                if pos == 1 and a not in model.start_acts:
                    continue
                if not opening_allowed(a, pos):
                    continue
                plans = [
                    ln
                    for ln in _feasible_plans(a, steps_for, lo_len, hi_len)
                    if committed + ln <= remaining
                    and (ln > 1 or close_feasible(a, pos))
                ]
                if plans:
                    options.append(("open", a, plans))
        if not options:
            return None

        # bias toward closing obligations early and keeping lengths fillable
        pick = options[int(rng.integers(len(options)))]
        if pick[0] == "continue":
            _, inst, step = pick
            etype = int(rng.choice(steps_for[(inst.activity, step)]))
            events.append(Event(pos, etype))
            labels.append((inst.activity, step, inst.instance))
            inst.done += 1
            if step is StepType.LAST:
                open_insts.remove(inst)
                record_closing(inst.activity, pos)
        else:
            _, a, plans = pick
            plan = int(plans[int(rng.integers(len(plans)))])
            started[a] += 1
            j = started[a]
            step = StepType.FIRST_AND_LAST if plan == 1 else StepType.FIRST
            etype = int(rng.choice(steps_for[(a, step)]))
            events.append(Event(pos, etype))
            labels.append((a, step, j))
            mark_satisfied(a, pos)
            if plan == 1:
                record_closing(a, pos)
            else:
                open_insts.append(_OpenInstance(a, j, plan, 1))

    if open_insts:
        return None
    if any(not ob["satisfied"] and ob["deadline"] <= length for ob in obligations):
        return None
    trace = Trace(trace_id, tuple(events), finalized=True)
    return LabeledTrace(trace, tuple(labels))


# --- dataset files -----------------------------------------------------------


def generate_dataset(
    mapping: TypeLevelMapping,
    model: DeclarativeProcessModel,
    spec: DatasetSpec,
    path: str | Path,
) -> dict:
    """Write a line-delimited dataset plus a manifest sidecar; returns the
    manifest. Identical inputs produce byte-identical files."""
    path = Path(path)
    records: list[LabeledTrace] = []
    trace_no = 0
    for length in sorted(spec.counts):
        for i in range(spec.counts[length]):
            rng = np.random.default_rng([spec.seed, trace_no])
            records.append(
                generate_trace(
                    mapping,
                    model,
                    length,
                    rng,
                    max_parallel=None if spec.max_parallel == 0 else spec.max_parallel,
                    trace_id=f"t{length}_{i:05d}",
                )
            )
            trace_no += 1
    write_dataset(path, records, mapping)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    manifest = {
        "v": 1,
        "seed": spec.seed,
        "counts": {str(k): spec.counts[k] for k in sorted(spec.counts)},
        "max_parallel": spec.max_parallel,
        "n_traces": len(records),
        "sha256": digest,
    }
    manifest_path = path.with_name(path.name + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def write_dataset(path: str | Path, records: list[LabeledTrace], mapping: TypeLevelMapping) -> None:
    lines = []
    for rec in records:
        doc = {
            "events": [
                {"attrs": dict(ev.attrs), "type": mapping.event_types[ev.etype]}
                for ev in rec.trace.events
            ],
            "finalized": rec.trace.finalized,
            "id": rec.trace.id,
            "labels": [
                {
                    "activity": mapping.activities[a],
                    "instance": j,
                    "step": s.value,
                }
                for a, s, j in rec.labels
            ],
        }
        lines.append(json.dumps(doc, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_dataset(path: str | Path, mapping: TypeLevelMapping) -> list[LabeledTrace]:
    records = []
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from None
        try:
            events = tuple(
                Event(i + 1, mapping.event_type_id(e["type"]), tuple(sorted(e.get("attrs", {}).items())))
                for i, e in enumerate(doc["events"])
            )
            labels = tuple(
                (
                    mapping.activity_id(l["activity"]),
                    step_from_name(l["step"]),
                    int(l["instance"]),
                )
                for l in doc["labels"]
            )
            records.append(
                LabeledTrace(
                    Trace(doc["id"], events, finalized=bool(doc.get("finalized", True))),
                    labels,
                )
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"{path}:{lineno}: malformed record ({exc})") from None
    return records

"""Incremental interpretation reasoner for one running trace.

A session owns an argumentation framework that is extended event by event.
Per event the framework receives:

  * one interpretation argument per candidate (activity, step, instance)
    reading licensed by the type-level mapping (event 1 is pruned to opening
    steps of start activities, instance 1);
  * a self-attacking NotInterpreted argument, attacked by the event's own
    interpretation arguments and attacking the neighbouring events'
    interpretation arguments, which forces extensions to interpret every
    event or collapse to the empty set;
  * mutual attacks between rival readings of the same event, duplicate
    openings/closings of one instance, steps following an instance's
    closing, and the pairs forbidden by not / negative-precedence rules;
  * undermining arguments for instance bookkeeping (NotStarted,
    NotEnoughExecutions, NotEnded on finalize) and for windowed must /
    precedence rules, each also attacked by NotInterpreted over event 1 so
    a deviating trace has only the empty admissible set.

Must-rule violation arguments are deferred until their window is fully
observable (or the trace is finalized, truncating the window), so prefix
interpretations with compliant continuations stay accepted.

All growth is journaled: `get_aaf` captures a position, `set_aaf` rewinds to
it, which is what the analysis pipeline uses to rebuild an event's slice of
the framework under a restricted candidate set.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from . import aaf
from .errors import ContractError
from .model import (
    ConstraintKind,
    DeclarativeProcessModel,
    Event,
    StepType,
    TypeLevelMapping,
    max_instance_bound,
)

CREDULOUS = "credulous"
SKEPTICAL = "skeptical"


@dataclass(frozen=True)
class InterpArg:
    """Reading of event `index` as step `step` of the `instance`-th run of `activity`."""

    index: int
    activity: int
    step: StepType
    instance: int

    def sort_key(self):
        return (self.index, self.activity, self.step.rank, self.instance)

    def __str__(self) -> str:
        return f"<e{self.index},{self.activity},{self.step.value},{self.instance}>"


@dataclass(frozen=True)
class NotInterpreted:
    index: int

    def __str__(self) -> str:
        return f"NotInterpreted_{self.index}"


@dataclass(frozen=True)
class NotEnoughExecutions:
    target: InterpArg

    def __str__(self) -> str:
        return f"NotEnoughExecutions[{self.target}]"


@dataclass(frozen=True)
class NotStarted:
    target: InterpArg

    def __str__(self) -> str:
        return f"NotStarted[{self.target}]"


@dataclass(frozen=True)
class NotEnded:
    activity: int
    instance: int

    def __str__(self) -> str:
        return f"NotEnded({self.instance},{self.activity})"


@dataclass(frozen=True)
class MustViol:
    constraint: int
    index: int

    def __str__(self) -> str:
        return f"MustViol(q{self.constraint},e{self.index})"


@dataclass(frozen=True)
class PrecViol:
    constraint: int
    index: int

    def __str__(self) -> str:
        return f"PrecViol(q{self.constraint},e{self.index})"


@dataclass(frozen=True)
class InterpretationQuery:
    """Query about one event; step/instance may be wildcards (None)."""

    event_index: int
    activity: int
    step: StepType | None = None
    instance: int | None = None
    semantics: str = CREDULOUS

    def __post_init__(self) -> None:
        if self.semantics not in (CREDULOUS, SKEPTICAL):
            raise ContractError(f"unknown query semantics {self.semantics!r}")
        if self.instance is not None and self.instance < 1:
            raise ContractError("instance must be >= 1")

    @property
    def is_boolean(self) -> bool:
        return self.step is not None and self.instance is not None


# Invalidity reason kinds produced by `Session.explain`.
MAPPING_VIOLATION = "mapping_violation"
START_VIOLATION = "start_violation"
CANDIDATE_PRUNED = "candidate_pruned"
CONFLICTING_INTERPRETATION = "conflicting_interpretation"
UNMET_MUST = "unmet_must"
UNMET_PRECEDENCE = "unmet_precedence"
NOT_STARTED = "not_started"
NOT_ENOUGH_EXECUTIONS = "not_enough_executions"
NOT_ENDED = "not_ended"
NEIGHBOR_UNINTERPRETABLE = "neighbor_uninterpretable"


@dataclass(frozen=True)
class InvalidityReason:
    kind: str
    indices: tuple[int, ...] = ()
    constraint: int | None = None
    argument: InterpArg | None = None

    def sort_key(self):
        return (
            self.kind,
            self.indices,
            -1 if self.constraint is None else self.constraint,
            self.argument.sort_key() if self.argument else (),
        )


@dataclass(frozen=True)
class Snapshot:
    """Rewind point of a session; only valid for the session that issued it."""

    token: object
    fw_position: int
    journal_position: int
    prefix_length: int
    finalized: bool
    pending_must: tuple[tuple[int, int, int | None], ...]
    census: tuple[int, int]


_MISSING = object()


class Session:
    """One running trace: prefix, framework, pending windows, query surface."""

    def __init__(
        self,
        mapping: TypeLevelMapping,
        model: DeclarativeProcessModel,
        solver_budget: int = aaf.DEFAULT_BUDGET,
    ) -> None:
        if mapping.n_activities != model.n_activities:
            raise ContractError("mapping and process model disagree on the activity universe")
        self.mapping = mapping
        self.model = model
        self.solver_budget = solver_budget
        self.framework = aaf.Framework()
        self._token: object = object()
        self._journal: list[tuple] = []
        self._prefix: list[Event] = []
        self._finalized = False
        # registries; all mutations go through the journal helpers
        self._interp_at: dict[int, list[int]] = {}
        self._ni_at: dict[int, int] = {}
        self._by_tag: dict[InterpArg, int] = {}
        self._open_args: dict[tuple[int, int], list[int]] = {}
        self._close_at: dict[tuple[int, int], list[int]] = {}
        self._open_at: dict[tuple[int, int], list[int]] = {}
        self._close_args: dict[tuple[int, int], list[int]] = {}
        self._members: dict[tuple[int, int], list[int]] = {}
        self._first_args: dict[tuple[int, int], list[int]] = {}
        self._last_args: dict[tuple[int, int], list[int]] = {}
        self._prec_viol: dict[tuple[int, int], int] = {}
        self._pending_must: list[tuple[int, int, int | None]] = []
        self._scheduled_must: set[tuple[int, int]] = set()
        # constraint lookup tables
        self._not_by_opener: dict[int, list[int]] = {}
        self._prec_by_opener: dict[int, list[int]] = {}
        self._must_by_closer: dict[int, list[int]] = {}
        for q, con in enumerate(model.constraints):
            if con.kind in (ConstraintKind.NOT, ConstraintKind.NEG_PRECEDENCE):
                self._not_by_opener.setdefault(con.rhs[0], []).append(q)
            elif con.kind is ConstraintKind.PRECEDENCE:
                self._prec_by_opener.setdefault(con.rhs[0], []).append(q)
            else:
                self._must_by_closer.setdefault(con.lhs[0], []).append(q)

    # --- journaled mutation helpers -------------------------------------

    def _jset(self, d: dict, key, value) -> None:
        self._journal.append(("set", d, key, d.get(key, _MISSING)))
        d[key] = value

    def _jappend(self, lst: list, value) -> None:
        lst.append(value)
        self._journal.append(("pop", lst))

    def _jadd(self, s: set, value) -> None:
        if value in s:
            return
        s.add(value)
        self._journal.append(("discard", s, value))

    def _jattr(self, name: str, value) -> None:
        self._journal.append(("attr", name, getattr(self, name)))
        setattr(self, name, value)

    def _rewind_journal(self, position: int) -> None:
        while len(self._journal) > position:
            entry = self._journal.pop()
            op = entry[0]
            if op == "set":
                _, d, key, old = entry
                if old is _MISSING:
                    del d[key]
                else:
                    d[key] = old
            elif op == "pop":
                entry[1].pop()
            elif op == "discard":
                entry[1].discard(entry[2])
            else:
                setattr(self, entry[1], entry[2])

    # --- basic accessors --------------------------------------------------

    @property
    def prefix_length(self) -> int:
        return len(self._prefix)

    @property
    def prefix(self) -> tuple[Event, ...]:
        return tuple(self._prefix)

    @property
    def finalized(self) -> bool:
        return self._finalized

    def interpretation_args(self, index: int) -> list[InterpArg]:
        self._check_index(index)
        fw = self.framework
        return sorted(
            (fw.tag(i) for i in self._interp_at.get(index, ())),
            key=InterpArg.sort_key,
        )

    def _check_index(self, index: int) -> None:
        if not 1 <= index <= len(self._prefix):
            raise ContractError(
                f"event index {index} outside the current prefix of length {len(self._prefix)}"
            )

    # --- framework construction -------------------------------------------

    def _new_interp_arg(self, tag: InterpArg) -> int:
        arg = self.framework.add_argument(tag)
        self._jset(self._by_tag, tag, arg)
        self._jappend(self._interp_at[tag.index], arg)
        key = (tag.activity, tag.instance)
        self._reg_append(self._members, key, arg)
        if tag.step.opens:
            self._reg_append(self._open_args, key, arg)
            self._reg_append(self._open_at, (tag.activity, tag.index), arg)
        if tag.step.closes:
            self._reg_append(self._close_args, key, arg)
            self._reg_append(self._close_at, (tag.activity, tag.index), arg)
        if tag.step is StepType.FIRST:
            self._reg_append(self._first_args, key, arg)
        if tag.step is StepType.LAST:
            self._reg_append(self._last_args, key, arg)
        return arg

    def _reg_append(self, d: dict, key, value) -> None:
        if key not in d:
            self._jset(d, key, [])
        self._jappend(d[key], value)

    def update_aaf(self, event: Event, candidates: frozenset[int] | set[int]) -> None:
        """Append `event` and extend the framework for the given candidate
        activities (a subset of cand-act of the event's type)."""
        if self._finalized:
            raise ContractError("session already finalized")
        c = len(self._prefix) + 1
        if event.index != c:
            raise ContractError(f"expected event index {c}, got {event.index}")
        steps = self.mapping.cand_steps(event.etype)

        fw = self.framework
        model = self.model
        self._jappend(self._prefix, event)
        self._jset(self._interp_at, c, [])

        new_args: list[tuple[int, InterpArg]] = []
        for a, s in sorted(steps, key=lambda p: (p[0], p[1].rank)):
            if a not in candidates:
                continue
            if c == 1 and not (s.opens and a in model.start_acts):
                continue
            jmax = 1 if c == 1 else max_instance_bound(model, a, c)
            for j in range(1, jmax + 1):
                tag = InterpArg(c, a, s, j)
                new_args.append((self._new_interp_arg(tag), tag))

        # NotInterpreted: self-attack, defeated by this event's readings,
        # attacking the neighbours' readings (one-directional by design: a
        # reading must be defended by a reading of the adjacent event).
        ni = fw.add_argument(NotInterpreted(c))
        self._jset(self._ni_at, c, ni)
        fw.add_attack(ni, ni)
        for arg, _ in new_args:
            fw.add_attack(arg, ni)
        if c > 1:
            prev_ni = self._ni_at[c - 1]
            for arg, _ in new_args:
                fw.add_attack(prev_ni, arg)
            for prev_arg in self._interp_at[c - 1]:
                fw.add_attack(ni, prev_arg)

        # rival readings of the same event
        for (a1, _), (a2, _) in combinations(new_args, 2):
            fw.add_mutual_attack(a1, a2)

        ni1 = self._ni_at[1]
        for arg, tag in new_args:
            key = (tag.activity, tag.instance)
            if tag.step.opens:
                # duplicate openings of one instance
                for other in self._open_args.get(key, ()):
                    if other != arg and fw.tag(other).index < c:
                        fw.add_mutual_attack(arg, other)
            if tag.step.closes:
                # duplicate closings of one instance
                for other in self._close_args.get(key, ()):
                    if other != arg and fw.tag(other).index < c:
                        fw.add_mutual_attack(arg, other)
            # a step after the instance was closed
            for closer in self._close_args.get(key, ()):
                if closer != arg and fw.tag(closer).index < c:
                    fw.add_mutual_attack(closer, arg)

            if tag.step.opens and tag.instance > 1:
                nee = fw.add_argument(NotEnoughExecutions(tag))
                fw.add_attack(nee, arg)
                for defender in self._open_args.get((tag.activity, tag.instance - 1), ()):
                    if fw.tag(defender).index < c:
                        fw.add_attack(defender, nee)
                fw.add_attack(ni1, nee)

            if tag.step in (StepType.INTERMEDIATE, StepType.LAST):
                ns = fw.add_argument(NotStarted(tag))
                fw.add_attack(ns, arg)
                for defender in self._open_args.get(key, ()):
                    if fw.tag(defender).index < c:
                        fw.add_attack(defender, ns)
                fw.add_attack(ni1, ns)

            if tag.step.opens:
                # not / negative-precedence: the forbidden pairs coincide
                # (closing of A at m, opening of B at c, 1 <= c-m <= T)
                for q in self._not_by_opener.get(tag.activity, ()):
                    con = model.constraints[q]
                    lo = 1 if con.window is None else max(1, c - con.window)
                    for m in range(lo, c):
                        for closer in self._close_at.get((con.lhs[0], m), ()):
                            fw.add_mutual_attack(closer, arg)
                for q in self._prec_by_opener.get(tag.activity, ()):
                    pv = self._prec_viol.get((q, c))
                    if pv is None:
                        con = model.constraints[q]
                        pv = fw.add_argument(PrecViol(q, c))
                        self._jset(self._prec_viol, (q, c), pv)
                        fw.add_attack(ni1, pv)
                        lo = 1 if con.window is None else max(1, c - con.window)
                        for m in range(lo, c):
                            for al in con.lhs:
                                for closer in self._close_at.get((al, m), ()):
                                    fw.add_attack(closer, pv)
                    fw.add_attack(pv, arg)

            if tag.step.closes:
                for q in self._must_by_closer.get(tag.activity, ()):
                    if (q, c) in self._scheduled_must:
                        continue
                    self._jadd(self._scheduled_must, (q, c))
                    T = model.constraints[q].window
                    deadline = None if T is None else c + T
                    self._jattr(
                        "_pending_must",
                        self._pending_must + [(q, c, deadline)],
                    )

        # must-rules whose window closes at this event become decidable now
        due = [e for e in self._pending_must if e[2] == c]
        if due:
            self._jattr(
                "_pending_must", [e for e in self._pending_must if e[2] != c]
            )
            for q, i, _ in due:
                self._fire_must(q, i, end=c)

    def _fire_must(self, q: int, closing_index: int, end: int) -> None:
        """Materialize the violation argument for must-rule `q` triggered by a
        closing at `closing_index`, with defence window (closing_index, end]."""
        fw = self.framework
        con = self.model.constraints[q]
        mv = fw.add_argument(MustViol(q, closing_index))
        fw.add_attack(self._ni_at[1], mv)
        for closer in self._close_at.get((con.lhs[0], closing_index), ()):
            fw.add_attack(mv, closer)
        for m in range(closing_index + 1, end + 1):
            for b in con.rhs:
                for opener in self._open_at.get((b, m), ()):
                    fw.add_attack(opener, mv)

    def finalize(self) -> None:
        """Close the trace: unclosed first steps lose to NotEnded unless a
        matching last step defends them; pending must windows truncate to the
        prefix end."""
        if self._finalized:
            raise ContractError("session already finalized")
        fw = self.framework
        if self._prefix:
            ni1 = self._ni_at[1]
            for key in sorted(self._first_args):
                a, j = key
                ne = fw.add_argument(NotEnded(a, j))
                for first in self._first_args[key]:
                    fw.add_attack(ne, first)
                for last in self._last_args.get(key, ()):
                    fw.add_attack(last, ne)
                fw.add_attack(ni1, ne)
            pending = self._pending_must
            if pending:
                self._jattr("_pending_must", [])
                for q, i, _ in pending:
                    self._fire_must(q, i, end=len(self._prefix))
        self._jattr("_finalized", True)

    # --- snapshots ----------------------------------------------------------

    def get_aaf(self) -> Snapshot:
        return Snapshot(
            token=self._token,
            fw_position=self.framework.position(),
            journal_position=len(self._journal),
            prefix_length=len(self._prefix),
            finalized=self._finalized,
            pending_must=tuple(self._pending_must),
            census=self.framework.census(),
        )

    def set_aaf(self, snapshot: Snapshot) -> None:
        if snapshot.token is not self._token:
            raise ContractError("snapshot belongs to a different session")
        if (
            snapshot.fw_position > self.framework.position()
            or snapshot.journal_position > len(self._journal)
        ):
            raise ContractError("snapshot is ahead of the session state")
        self.framework.rewind(snapshot.fw_position)
        self._rewind_journal(snapshot.journal_position)

    # --- queries -------------------------------------------------------------

    def _matching_args(self, q: InterpretationQuery) -> list[int]:
        out = []
        for arg in self._interp_at.get(q.event_index, ()):
            tag = self.framework.tag(arg)
            if tag.activity != q.activity:
                continue
            if q.step is not None and tag.step is not q.step:
                continue
            if q.instance is not None and tag.instance != q.instance:
                continue
            out.append(arg)
        return sorted(out, key=lambda a: self.framework.tag(a).sort_key())

    def _accepted(self, arg: int, semantics: str) -> bool:
        if semantics == CREDULOUS:
            return aaf.credulous_accept(self.framework, arg, self.solver_budget)
        return aaf.skeptical_accept(self.framework, arg, self.solver_budget)

    def answer(self, q: InterpretationQuery) -> bool | tuple[InterpArg, ...]:
        """Boolean verdict for fully specified queries, otherwise all matching
        accepted interpretation arguments."""
        self._check_index(q.event_index)
        matches = self._matching_args(q)
        if q.is_boolean:
            return bool(matches) and self._accepted(matches[0], q.semantics)
        return tuple(
            self.framework.tag(a) for a in matches if self._accepted(a, q.semantics)
        )

    def any_valid(self, index: int, activity: int) -> bool:
        """True iff some reading of event `index` as `activity` is credulously
        accepted; runs one disjunctive search, equivalent to a non-empty
        wildcard answer."""
        q = InterpretationQuery(index, activity)
        self._check_index(q.event_index)
        return aaf.credulous_accept_any(
            self.framework, self._matching_args(q), self.solver_budget
        )

    def accepted_interpretations(
        self, index: int, semantics: str = CREDULOUS
    ) -> tuple[InterpArg, ...]:
        """All accepted readings of one event, over every activity."""
        self._check_index(index)
        fw = self.framework
        args = sorted(self._interp_at.get(index, ()), key=lambda a: fw.tag(a).sort_key())
        return tuple(fw.tag(a) for a in args if self._accepted(a, semantics))

    def explain(self, q: InterpretationQuery) -> tuple[InvalidityReason, ...]:
        """Why a fully specified reading is not accepted; empty when it is."""
        if not q.is_boolean:
            raise ContractError("explain requires a fully specified interpretation")
        self._check_index(q.event_index)
        c = q.event_index
        etype = self._prefix[c - 1].etype
        if (etype, q.activity, q.step) not in self.mapping.triples:
            return (InvalidityReason(MAPPING_VIOLATION, (c,)),)
        if c == 1 and not (
            q.step.opens and q.activity in self.model.start_acts and q.instance == 1
        ):
            return (InvalidityReason(START_VIOLATION, (1,)),)
        if q.instance > max_instance_bound(self.model, q.activity, c):
            return (InvalidityReason(NOT_ENOUGH_EXECUTIONS, (c,)),)
        arg = self._by_tag.get(InterpArg(c, q.activity, q.step, q.instance))
        if arg is None:
            # licensed by the mapping but dropped by a restricted candidate set
            return (InvalidityReason(CANDIDATE_PRUNED, (c,)),)
        ok, blockers = aaf.credulous_blockers(self.framework, arg, self.solver_budget)
        if ok:
            return ()
        reasons = {self._render_blocker(b) for b in blockers}
        return tuple(sorted(reasons, key=InvalidityReason.sort_key))

    def _render_blocker(self, blocker: int) -> InvalidityReason:
        tag = self.framework.tag(blocker)
        if isinstance(tag, InterpArg):
            return InvalidityReason(CONFLICTING_INTERPRETATION, (tag.index,), argument=tag)
        if isinstance(tag, MustViol):
            return InvalidityReason(UNMET_MUST, (tag.index,), constraint=tag.constraint)
        if isinstance(tag, PrecViol):
            return InvalidityReason(UNMET_PRECEDENCE, (tag.index,), constraint=tag.constraint)
        if isinstance(tag, NotStarted):
            return InvalidityReason(NOT_STARTED, (tag.target.index,), argument=tag.target)
        if isinstance(tag, NotEnoughExecutions):
            return InvalidityReason(
                NOT_ENOUGH_EXECUTIONS, (tag.target.index,), argument=tag.target
            )
        if isinstance(tag, NotEnded):
            return InvalidityReason(NOT_ENDED, ())
        if isinstance(tag, NotInterpreted):
            return InvalidityReason(NEIGHBOR_UNINTERPRETABLE, (tag.index,))
        raise AssertionError(f"unexpected blocker tag {tag!r}")


def new_session(
    mapping: TypeLevelMapping,
    model: DeclarativeProcessModel,
    solver_budget: int = aaf.DEFAULT_BUDGET,
) -> Session:
    return Session(mapping, model, solver_budget)

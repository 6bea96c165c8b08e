"""Dung-style abstract argumentation kernel.

The framework store is strictly append-only with an undo journal, so an
owner can mark a position and rewind to it in time proportional to what was
added since (the reasoner snapshots before every event).

Acceptance queries run a labelling search with unit propagation instead of
power-set enumeration:

  * credulous acceptance looks directly for an admissible set containing the
    queried argument, growing a partial labelling {in, out, must-out} where
    every must-out argument (an attacker of the in-set) has to be defeated
    by making one of its own attackers in;
  * preferred extensions are enumerated by an include/exclude search over
    arguments, with grounded-style propagation (an argument whose attackers
    are all defeated is forced in) and subset-maximality filtering at the end.

Both searches count label assignments against a node budget and raise
`BudgetExceeded` instead of returning a wrong or truncated answer.
"""

from __future__ import annotations

import random
from typing import Iterable

import numpy as np

from .errors import BudgetExceeded, ContractError

DEFAULT_BUDGET = 10_000_000

_UNDEC, _IN, _OUT, _MUST_OUT, _EXCLUDED = range(5)


class Framework:
    """Mutable argument/attack store with journal-based rewind."""

    __slots__ = (
        "_tags",
        "_targets",
        "_attackers",
        "_selfatk",
        "_edges",
        "_journal",
        "_plaus_cache",
    )

    def __init__(self) -> None:
        self._tags: list[object] = []
        self._targets: list[list[int]] = []
        self._attackers: list[list[int]] = []
        self._selfatk: list[bool] = []
        self._edges: set[tuple[int, int]] = set()
        self._journal: list[tuple] = []
        self._plaus_cache: tuple[int, bytearray, list[int]] | None = None

    @property
    def n_args(self) -> int:
        return len(self._tags)

    @property
    def n_attacks(self) -> int:
        return len(self._edges)

    def census(self) -> tuple[int, int]:
        return (self.n_args, self.n_attacks)

    def _check(self, arg: int) -> None:
        if not 0 <= arg < len(self._tags):
            raise ContractError(f"argument id {arg} not in this framework")

    def add_argument(self, tag: object) -> int:
        arg = len(self._tags)
        self._tags.append(tag)
        self._targets.append([])
        self._attackers.append([])
        self._selfatk.append(False)
        self._journal.append(("arg",))
        return arg

    def add_attack(self, src: int, dst: int) -> bool:
        """Insert the attack if new; duplicate insertions are no-ops."""
        self._check(src)
        self._check(dst)
        if (src, dst) in self._edges:
            return False
        self._edges.add((src, dst))
        self._targets[src].append(dst)
        self._attackers[dst].append(src)
        if src == dst:
            self._selfatk[src] = True
        self._journal.append(("att", src, dst))
        return True

    def add_mutual_attack(self, a: int, b: int) -> None:
        self.add_attack(a, b)
        self.add_attack(b, a)

    def tag(self, arg: int) -> object:
        self._check(arg)
        return self._tags[arg]

    def targets(self, arg: int) -> list[int]:
        self._check(arg)
        return list(self._targets[arg])

    def attackers(self, arg: int) -> list[int]:
        self._check(arg)
        return list(self._attackers[arg])

    def is_self_attacking(self, arg: int) -> bool:
        self._check(arg)
        return self._selfatk[arg]

    def has_attack(self, src: int, dst: int) -> bool:
        return (src, dst) in self._edges

    def attacks(self) -> frozenset[tuple[int, int]]:
        return frozenset(self._edges)

    def position(self) -> int:
        return len(self._journal)

    def rewind(self, position: int) -> None:
        """Undo every insertion made after `position` (in reverse order)."""
        if position > len(self._journal):
            raise ContractError("cannot rewind forward")
        while len(self._journal) > position:
            entry = self._journal.pop()
            if entry[0] == "att":
                _, src, dst = entry
                self._edges.discard((src, dst))
                self._targets[src].pop()
                self._attackers[dst].pop()
                if src == dst:
                    self._selfatk[src] = False
            else:
                self._tags.pop()
                self._targets.pop()
                self._attackers.pop()
                self._selfatk.pop()


def _plausibility(f: Framework):
    """Context-free pruning data, cached per journal position.

    Returns `(dead, counts, tgt)`: `dead[x]` marks arguments that can belong
    to no admissible set of the current framework (self-attackers, plus
    everything attacked by an argument whose potential defeaters are all
    dead, to a fixpoint); `counts[b]` is the number of still-live potential
    defeaters of `b` (zero = undefeatable); `tgt[x]` is the attack adjacency
    as one int array per argument, for vectorized count updates.
    """
    cache = f._plaus_cache
    position = f.position()
    if cache is not None and cache[0] == position:
        return cache[1], cache[2], cache[3]
    n = f.n_args
    dead = bytearray(n)
    for x in range(n):
        if f._selfatk[x]:
            dead[x] = 1
    tgt = [np.array(f._targets[x], dtype=np.int64) for x in range(n)]
    counts = np.zeros(n, dtype=np.int64)
    for b in range(n):
        counts[b] = sum(1 for z in f._attackers[b] if not dead[z])
    queue = [b for b in range(n) if counts[b] == 0]
    while queue:
        b = queue.pop()
        # b can never be defeated: everything it attacks is dead
        for alpha in f._targets[b]:
            if dead[alpha]:
                continue
            dead[alpha] = 1
            for w in f._targets[alpha]:
                counts[w] -= 1
                if counts[w] == 0:
                    queue.append(w)
    f._plaus_cache = (position, dead, counts, tgt)
    return dead, counts, tgt


def _check_subset(f: Framework, args: Iterable[int]) -> set[int]:
    out = set()
    for a in args:
        f._check(a)
        out.add(a)
    return out


def is_conflict_free(f: Framework, args: Iterable[int]) -> bool:
    members = _check_subset(f, args)
    return not any(t in members for a in members for t in f._targets[a])


def is_admissible(f: Framework, args: Iterable[int]) -> bool:
    members = _check_subset(f, args)
    if any(t in members for a in members for t in f._targets[a]):
        return False
    defeated = {t for a in members for t in f._targets[a]}
    return all(b in defeated for a in members for b in f._attackers[a])


class _Labelling:
    """Shared search state: labels, undo trail, pending must-out queue."""

    __slots__ = ("f", "labels", "trail", "pending", "steps", "budget")

    def __init__(self, f: Framework, budget: int) -> None:
        self.f = f
        self.labels = bytearray(f.n_args)
        self.trail: list[tuple[int, int]] = []
        self.pending: list[int] = []
        self.steps = 0
        self.budget = budget

    def set_label(self, arg: int, value: int) -> None:
        self.steps += 1
        if self.steps > self.budget:
            raise BudgetExceeded(f"solver exceeded {self.budget} label assignments")
        self.trail.append((arg, self.labels[arg]))
        self.labels[arg] = value

    def undo(self, mark: int, pmark: int) -> None:
        while len(self.trail) > mark:
            arg, old = self.trail.pop()
            self.labels[arg] = old
        del self.pending[pmark:]

    def marks(self) -> tuple[int, int]:
        return len(self.trail), len(self.pending)

    def assign_in(self, arg: int) -> bool:
        """Label `arg` in and propagate: its targets go out, surviving
        attackers become must-out. False on a conflict with the in-set."""
        labels = self.labels
        self.set_label(arg, _IN)
        for y in self.f._targets[arg]:
            ly = labels[y]
            if ly == _IN:
                return False
            if ly != _OUT:
                self.set_label(y, _OUT)
        for y in self.f._attackers[arg]:
            ly = labels[y]
            if ly == _IN:
                return False
            if ly == _UNDEC or ly == _EXCLUDED:
                self.set_label(y, _MUST_OUT)
                self.pending.append(y)
        return True

    def pick_must_out(self) -> int:
        """Unresolved must-out argument with the fewest viable defeaters, or -1."""
        best, best_score = -1, None
        for y in self.pending:
            if self.labels[y] != _MUST_OUT:
                continue
            viable = sum(
                1
                for z in self.f._attackers[y]
                if self.labels[z] == _UNDEC and not self.f._selfatk[z]
            )
            score = (viable, y)
            if best_score is None or score < best_score:
                best, best_score = y, score
                if viable == 0:
                    break
        return best


class _Frame:
    """One unresolved must-out argument and its candidate defeaters."""

    __slots__ = ("y", "cands", "idx", "base", "conflict", "mark", "pmark")

    def __init__(self, y: int, cands: list[int], base: set[int], mark: int, pmark: int):
        self.y = y
        self.cands = cands
        self.idx = 0
        self.base = base  # decision levels that created/constrained this obligation
        self.conflict = set()  # levels contributed by failed candidates
        self.mark = mark
        self.pmark = pmark


def _acceptance_search(
    f: Framework, targets: list[int], budget: int, track_blockers: bool
) -> tuple[bool, frozenset[int]]:
    """Search for an admissible set containing one of `targets`.

    The labelling search keeps full availability counts: `counts[w]` tracks
    how many attackers of `w` could still be labelled in. Whenever a count
    hits zero, `w` is undefeatable on the current branch, so every argument
    it attacks is doomed (can never be in), which cascades; an undefeatable
    must-out is an immediate conflict. This arc-consistency propagation is
    what keeps refutations of invalid readings from enumerating the whole
    interpretation space.

    Backtracking is conflict-directed: every label records the decision level
    that set it, an exhausted obligation collects the levels that made its
    defeaters nonviable, and the search jumps straight back to the deepest
    level in that set (intermediate choices provably cannot repair it).
    Conflicts that reduce to a single decision refute that argument for the
    rest of the query; conflicts that reduce to two decisions are learned as
    incompatible pairs and enforced by propagation from then on.

    When tracking blockers (single target only), every dead end records which
    direct attackers of the target were still undefeated; the intersection
    over all dead ends is returned as the irreducible obstacles to
    acceptance.
    """
    n = f.n_args
    dead0, counts0, tgt = _plausibility(f)
    single = len(targets) == 1
    target = targets[0] if single else -1
    if track_blockers and not single:
        raise ContractError("blocker tracking needs a single target")
    if single:
        if f.is_self_attacking(target):
            return False, frozenset({target})
        if dead0[target]:
            return False, frozenset(f._attackers[target])
    labels = bytearray(n)
    level_of = [0] * n
    doomed = bytearray(dead0)
    doom_level = [0] * n
    counts = counts0.copy()
    targets_of = f._targets
    attackers_of = f._attackers
    selfatk = f._selfatk
    # trail ops: ("L", x, old_label, old_level), ("D", x), ("C", x) where a
    # "C" entry undoes one whole batch decrement counts[tgt[x]] -= 1
    trail: list[tuple] = []
    pending: list[int] = []
    pairs: dict[int, list[int]] = {}
    pair_seen: set[tuple[int, int]] = set()
    steps = 0

    def bump() -> None:
        nonlocal steps
        steps += 1
        if steps > budget:
            raise BudgetExceeded(f"solver exceeded {budget} label assignments")

    def set_label(x: int, value: int, level: int) -> None:
        bump()
        trail.append(("L", x, labels[x], level_of[x]))
        labels[x] = value
        level_of[x] = level

    def undo(mark: int, pmark: int) -> None:
        while len(trail) > mark:
            op = trail.pop()
            kind = op[0]
            if kind == "C":
                counts[tgt[op[1]]] += 1
            elif kind == "L":
                labels[op[1]] = op[2]
                level_of[op[1]] = op[3]
            else:
                doomed[op[1]] = 0
        del pending[pmark:]

    def unavailability_level(z: int) -> int:
        """Shallowest decision level at which `z` stopped being assignable."""
        lvl = None
        if labels[z] in (_OUT, _MUST_OUT):
            lvl = level_of[z]
        if doomed[z]:
            dl = doom_level[z]
            lvl = dl if lvl is None else min(lvl, dl)
        return 0 if lvl is None else lvl

    def zero_count_conflict(w: int) -> set[int]:
        levels = {level_of[w]}
        for z in attackers_of[w]:
            if selfatk[z]:
                continue
            levels.add(unavailability_level(z))
        return levels

    def remove_defeater(x: int, journal: bool) -> np.ndarray:
        """Batch-decrement the defeater counts of everything `x` attacks and
        return the arguments whose count reached zero."""
        bump()
        t = tgt[x]
        if not t.size:
            return t
        counts[t] -= 1
        if journal:
            trail.append(("C", x))
        return t[counts[t] == 0]

    def drain(queue: list[int], level: int, journal: bool = True) -> set[int] | None:
        """Propagate availability losses; None on success, else conflict levels."""
        while queue:
            x = queue.pop()
            for w in remove_defeater(x, journal):
                lw = labels[w]
                if lw == _OUT:
                    continue
                if lw == _MUST_OUT:
                    return zero_count_conflict(w)
                # w is undefeatable on this branch: its targets can never
                # be labelled in
                for alpha in targets_of[w]:
                    if labels[alpha] == _UNDEC and not doomed[alpha]:
                        doomed[alpha] = 1
                        doom_level[alpha] = level
                        trail.append(("D", alpha))
                        queue.append(alpha)
            journal = True  # only the seed of a learned removal is permanent
        return None

    def assign_in(x: int, level: int) -> set[int] | None:
        """None on success, else the conflicting decision levels."""
        set_label(x, _IN, level)
        lost: list[int] = []
        for y in targets_of[x]:
            ly = labels[y]
            if ly == _IN:
                return {level_of[y]}
            if ly != _OUT:
                was_available = ly == _UNDEC and not doomed[y]
                set_label(y, _OUT, level)
                if was_available:
                    lost.append(y)
        for y in attackers_of[x]:
            ly = labels[y]
            if ly == _IN:
                return {level_of[y]}
            if ly == _UNDEC:
                set_label(y, _MUST_OUT, level)
                pending.append(y)
                if not doomed[y]:
                    lost.append(y)
        partners = pairs.get(x)
        if partners:
            for q in partners:
                lq = labels[q]
                if lq == _IN:
                    return {level_of[q]}
                if lq == _UNDEC and not doomed[q]:
                    doomed[q] = 1
                    doom_level[q] = level
                    trail.append(("D", q))
                    lost.append(q)
        return drain(lost, level)

    def learn_refuted(z: int, level: int) -> set[int] | None:
        """`z` can be in no admissible set this query looks for: remove it
        permanently. Its own count updates are untrailed; the knock-on dooms
        depend on branch labels, so they stay journaled."""
        doomed[z] = 1
        doom_level[z] = 0
        return drain([z], level, journal=False)

    def pick_must_out() -> int:
        best, best_score = -1, None
        for y in pending:
            if labels[y] != _MUST_OUT:
                continue
            viable = counts[y]
            score = (viable, y)
            if best_score is None or score < best_score:
                best, best_score = y, score
                if viable == 0:
                    break
        return best

    blockers: set[int] | None = None

    def note_dead_end() -> None:
        nonlocal blockers
        if not track_blockers:
            return
        alive = {b for b in f._attackers[target] if labels[b] != _OUT}
        blockers = alive if blockers is None else blockers & alive

    def final_blockers() -> frozenset[int]:
        return frozenset(blockers or ())

    shuffle = None  # set after the first restart

    def make_frame(y: int) -> _Frame:
        viable: list[int] = []
        base = {level_of[y]}
        for z in attackers_of[y]:
            if selfatk[z]:
                continue  # unconditionally nonviable
            if labels[z] != _UNDEC or doomed[z]:
                base.add(unavailability_level(z))
            else:
                viable.append(z)
        if shuffle is not None:
            shuffle(viable)
        return _Frame(y, viable, base, len(trail), len(pending))

    def restart_root() -> tuple[list[_Frame] | None, bool]:
        """(frames, finished): frames=None means the query is decided as
        `finished`; learned dooms/pairs survive because only trailed state
        is rewound."""
        undo(0, 0)
        if single:
            if assign_in(target, 0) is not None or doomed[target]:
                note_dead_end()
                return None, False
            y0 = pick_must_out()
            if y0 < 0:
                return None, True
            return [make_frame(y0)], False
        roots = [
            t
            for t in sorted(set(targets))
            if not dead0[t] and not selfatk[t] and not doomed[t]
        ]
        if not roots:
            return None, False
        if shuffle is not None:
            shuffle(roots)
        return [_Frame(-1, roots, {0}, 0, 0)], False

    frames, finished = restart_root()
    if frames is None:
        return finished, final_blockers()
    restarts = 0
    restart_at = 60_000  # grows geometrically; learning persists across runs

    while True:
        if steps > restart_at and restart_at < budget:
            restarts += 1
            restart_at = min(budget, restart_at * 2 + steps)
            shuffle = random.Random(restarts).shuffle
            frames, finished = restart_root()
            if frames is None:
                return finished, final_blockers()
        frame = frames[-1]
        level = len(frames)
        placed = False
        while frame.idx < len(frame.cands):
            z = frame.cands[frame.idx]
            frame.idx += 1
            if labels[z] != _UNDEC or doomed[z]:
                frame.conflict.add(unavailability_level(z))
                continue
            conflict = assign_in(z, level)
            if conflict is None:
                placed = True
                break
            conflict.discard(level)
            frame.conflict |= conflict
            undo(frame.mark, frame.pmark)
        if placed:
            y = pick_must_out()
            if y < 0:
                return True, frozenset()
            frames.append(make_frame(y))
            continue
        # obligation undefeatable on this branch
        note_dead_end()
        total = frame.base | frame.conflict
        total.discard(level)
        frames.pop()
        nonzero = sorted(l for l in total if l > 0)
        if not nonzero:
            return False, final_blockers()
        if len(nonzero) == 2:
            # the two decisions alone cannot stand together: learn the pair
            f1 = frames[nonzero[0] - 1]
            f2 = frames[nonzero[1] - 1]
            a1 = f1.cands[f1.idx - 1]
            a2 = f2.cands[f2.idx - 1]
            key = (a1, a2) if a1 < a2 else (a2, a1)
            if key not in pair_seen:
                pair_seen.add(key)
                pairs.setdefault(a1, []).append(a2)
                pairs.setdefault(a2, []).append(a1)
        jump = nonzero[-1]
        learn_single = len(nonzero) == 1
        while len(frames) > jump:
            frames.pop()
        parent = frames[-1]
        failed = parent.cands[parent.idx - 1]
        undo(parent.mark, parent.pmark)
        total.discard(jump)
        parent.conflict |= total
        if learn_single and labels[failed] == _UNDEC and not doomed[failed]:
            conflict = learn_refuted(failed, len(frames))
            if conflict is not None:
                # the parent's whole context is now inconsistent
                conflict.discard(len(frames))
                parent.conflict |= conflict
                parent.idx = len(parent.cands)


def credulous_accept(f: Framework, arg: int, budget: int = DEFAULT_BUDGET) -> bool:
    """True iff some admissible set contains `arg` (= membership in some
    preferred extension)."""
    f._check(arg)
    ok, _ = _acceptance_search(f, [arg], budget, track_blockers=False)
    return ok


def credulous_accept_any(
    f: Framework, args: Iterable[int], budget: int = DEFAULT_BUDGET
) -> bool:
    """True iff some admissible set contains at least one of `args`; one
    search over the disjunction instead of one search per argument."""
    arg_list = _check_subset(f, args)
    if not arg_list:
        return False
    ok, _ = _acceptance_search(f, sorted(arg_list), budget, track_blockers=False)
    return ok


def credulous_blockers(
    f: Framework, arg: int, budget: int = DEFAULT_BUDGET
) -> tuple[bool, frozenset[int]]:
    """Credulous acceptance plus, on failure, the attackers of `arg` that
    stayed undefeated on every branch of the search."""
    f._check(arg)
    return _acceptance_search(f, [arg], budget, track_blockers=True)


def preferred_extensions(
    f: Framework, budget: int = DEFAULT_BUDGET
) -> tuple[tuple[int, ...], ...]:
    """All subset-maximal admissible sets, canonically ordered.

    Always non-empty: the empty extension is preferred when nothing else is
    admissible.
    """
    n = f.n_args
    if n == 0:
        return ((),)
    st = _Labelling(f, budget)
    leaves: list[frozenset[int]] = []

    def propagate() -> bool:
        """Force in arguments whose attackers are all out; fail the branch when
        a must-out argument has no viable defeater left."""
        changed = True
        while changed:
            changed = False
            for x in range(n):
                if st.labels[x] != _UNDEC or f._selfatk[x]:
                    continue
                if all(st.labels[b] == _OUT for b in f._attackers[x]):
                    if not st.assign_in(x):
                        return False
                    changed = True
        for y in st.pending:
            if st.labels[y] != _MUST_OUT:
                continue
            if not any(
                st.labels[z] == _UNDEC and not f._selfatk[z] for z in f._attackers[y]
            ):
                return False
        return True

    def next_undecided() -> int:
        for x in range(n):
            if st.labels[x] == _UNDEC and not f._selfatk[x]:
                return x
        return -1

    def at_leaf() -> None:
        if any(st.labels[y] == _MUST_OUT for y in st.pending):
            return
        # an excluded argument whose attackers are all defeated would extend
        # the set, so this leaf cannot be maximal
        for y in range(n):
            if st.labels[y] == _EXCLUDED and not f._selfatk[y]:
                if all(st.labels[b] == _OUT for b in f._attackers[y]):
                    return
        leaves.append(frozenset(x for x in range(n) if st.labels[x] == _IN))

    # Continuation stack; "enter" expands a node, "undo" restores state after
    # a subtree, "exclude" opens the second branch of a decision.
    stack: list[tuple] = [("enter",)]
    while stack:
        op = stack.pop()
        if op[0] == "enter":
            mark, pmark = st.marks()
            stack.append(("undo", mark, pmark))
            if not propagate():
                continue
            x = next_undecided()
            if x < 0:
                at_leaf()
                continue
            mark2, pmark2 = st.marks()
            stack.append(("exclude", x))
            stack.append(("undo", mark2, pmark2))
            if st.assign_in(x):
                stack.append(("enter",))
        elif op[0] == "exclude":
            x = op[1]
            mark2, pmark2 = st.marks()
            stack.append(("undo", mark2, pmark2))
            st.set_label(x, _EXCLUDED)
            stack.append(("enter",))
        else:  # undo
            st.undo(op[1], op[2])

    # subset-maximality filter over collected admissible leaves
    leaves.sort(key=len, reverse=True)
    maximal: list[frozenset[int]] = []
    for s in leaves:
        if s not in maximal and not any(s < kept for kept in maximal):
            maximal.append(s)
    if not maximal:
        maximal = [frozenset()]
    return tuple(sorted(tuple(sorted(s)) for s in maximal))


def skeptical_accept(f: Framework, arg: int, budget: int = DEFAULT_BUDGET) -> bool:
    """True iff `arg` belongs to every preferred extension."""
    f._check(arg)
    if not credulous_accept(f, arg, budget):
        return False
    return all(arg in ext for ext in preferred_extensions(f, budget))


def dump(f: Framework) -> str:
    """Line-oriented debug form (`arg <id> <tag>` / `att <from> <to>`) for
    differential testing against external solvers."""
    lines = [f"arg {i} {f.tag(i)}" for i in range(f.n_args)]
    lines.extend(f"att {s} {d}" for s, d in sorted(f.attacks()))
    return "\n".join(lines) + ("\n" if lines else "")

"""Per-event neuro-symbolic analysis: tagger prediction, reasoner filtering,
smoothing, top-k beam restriction, framework recomputation.

For each incoming event the analysis:

  1. snapshots the reasoner framework,
  2. extends it with every activity the type-level mapping allows,
  3. obtains the tagger's distribution over activities,
  4. zeroes activities with no accepted reading of this event,
  5. smooths surviving entries so mapped-but-zero activities can be rescued,
  6. keeps the k most probable activities and renormalizes,
  7. rewinds to the snapshot and re-extends the framework with only the
     retained activities,
  8. reports the ranked activities (empty support = deviation).

Interpretation queries posed afterwards run against the recomputed,
beam-restricted framework.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import aaf
from .errors import BudgetExceeded, ContractError
from .model import Event, TypeLevelMapping
from .reasoner import InterpArg, Session


@dataclass(frozen=True)
class PipelineConfig:
    """Beam width, smoothing, and the smoothing denominator convention.

    `k=None` resolves to the largest candidate-activity set over all event
    types. `smooth_over_universe` selects whether the smoothing denominator
    counts the whole activity universe (default) or only the valid set; both
    preserve the ranking of valid activities.
    """

    k: int | None = None
    gamma: float = 0.001
    pseudo_count: float = 1.0
    smooth_over_universe: bool = True
    # "raise": solver overflow propagates after the step is marked
    # unresolved; "continue": the step scores as unresolved, the event joins
    # the session unbeamed, and the analysis carries on (batch evaluation)
    on_overflow: str = "raise"

    def __post_init__(self) -> None:
        if self.gamma <= 0:
            raise ContractError("gamma must be > 0")
        if self.pseudo_count <= 0:
            raise ContractError("pseudo_count must be > 0")
        if self.k is not None and self.k < 1:
            raise ContractError("k must be >= 1")
        if self.on_overflow not in ("raise", "continue"):
            raise ContractError(f"unknown overflow policy {self.on_overflow!r}")

    def resolve_k(self, mapping: TypeLevelMapping) -> int:
        k = self.k if self.k is not None else mapping.max_candidate_activities()
        k = max(1, k)
        if k > mapping.n_activities:
            raise ContractError(f"k={k} exceeds the {mapping.n_activities} known activities")
        return k


def smooth_and_filter(
    pd: np.ndarray, valid: frozenset[int] | set[int], cfg: PipelineConfig
) -> np.ndarray:
    """Zero invalid activities and smooth the valid ones:
    (pd[a] * N + gamma) / (N + gamma * denom). Not yet normalized."""
    out = np.zeros_like(pd, dtype=np.float64)
    if not valid:
        return out
    n = cfg.pseudo_count
    denom_count = len(pd) if cfg.smooth_over_universe else len(valid)
    denom = n + cfg.gamma * denom_count
    for a in valid:
        out[a] = (pd[a] * n + cfg.gamma) / denom
    return out


def top_k(vec: np.ndarray, k: int) -> np.ndarray:
    """Keep the k largest entries (ties to the lowest activity id), zero the
    rest, renormalize. An all-zero vector stays all-zero."""
    if k < 1:
        raise ContractError("k must be >= 1")
    out = np.zeros_like(vec, dtype=np.float64)
    positive = [(float(-vec[a]), a) for a in range(len(vec)) if vec[a] > 0]
    if not positive:
        return out
    positive.sort()
    keep = [a for _, a in positive[:k]]
    total = float(sum(vec[a] for a in keep))
    for a in keep:
        out[a] = vec[a] / total
    return out


@dataclass(frozen=True)
class StepResult:
    """Ranked surviving activities for one event; empty ranking = deviation."""

    index: int
    ranking: tuple[tuple[int, float], ...]
    deviation: bool
    unresolved: bool = False

    @property
    def support(self) -> frozenset[int]:
        return frozenset(a for a, _ in self.ranking)

    def top_activity(self) -> int | None:
        return self.ranking[0][0] if self.ranking else None


@dataclass(frozen=True)
class AnalysisSummary:
    """Post-finalization digest: surviving readings per event, plus events
    whose streamed support no longer holds any accepted reading."""

    accepted: tuple[tuple[InterpArg, ...], ...]
    inconsistent: tuple[int, ...]


class Analysis:
    """One running trace driven through the per-event loop.

    The tagger is optional: evaluation passes precomputed distributions to
    `process_event`, live sessions let the analysis own tagger state.
    """

    def __init__(self, session: Session, config: PipelineConfig, tagger=None) -> None:
        self.session = session
        self.config = config
        self.k = config.resolve_k(session.mapping)
        self.tagger = tagger
        self.tagger_state = tagger.init() if tagger is not None else None
        self.results: list[StepResult] = []
        self.finalized = False

    @property
    def n_activities(self) -> int:
        return self.session.mapping.n_activities

    def _valid_activities(self, index: int, pd: np.ndarray) -> set[int]:
        """Activities with an accepted reading of this event.

        Smoothing is monotone in the raw probability and (in universe mode)
        its denominator is a constant, so only the k most probable valid
        activities can survive the beam; checking validity in descending
        probability order and stopping after k hits yields the same step
        result while skipping the expensive refutations of improbable
        activities. The shrunken-denominator mode needs the full set.
        """
        sess = self.session
        if not self.config.smooth_over_universe:
            return {a for a in range(self.n_activities) if sess.any_valid(index, a)}
        valid: set[int] = set()
        for a in sorted(range(self.n_activities), key=lambda a: (-pd[a], a)):
            if len(valid) == self.k:
                break
            if sess.any_valid(index, a):
                valid.add(a)
        return valid

    def process_event(self, event: Event, pd: np.ndarray | None = None) -> StepResult:
        if self.finalized:
            raise ContractError("analysis already finalized")
        sess = self.session
        mapping = sess.mapping
        snapshot = sess.get_aaf()
        index = event.index
        try:
            sess.update_aaf(event, mapping.cand_act(event.etype))
            if pd is None:
                if self.tagger is None:
                    raise ContractError("no tagger attached and no distribution supplied")
                pd = self.tagger.predict(self.tagger_state, event)
            pd = np.asarray(pd, dtype=np.float64)
            if pd.shape != (self.n_activities,):
                raise ContractError(
                    f"distribution has shape {pd.shape}, expected ({self.n_activities},)"
                )
            valid = frozenset(self._valid_activities(index, pd))
            vec = smooth_and_filter(pd, valid, self.config)
            dist = top_k(vec, self.k)
        except BudgetExceeded:
            sess.set_aaf(snapshot)
            result = StepResult(index, (), deviation=False, unresolved=True)
            self.results.append(result)
            if self.config.on_overflow == "raise":
                raise
            # keep the trace total without inventing a beam: every mapped
            # activity stays available to later events
            sess.update_aaf(event, mapping.cand_act(event.etype))
            return result
        sess.set_aaf(snapshot)
        support = frozenset(a for a in range(self.n_activities) if dist[a] > 0)
        sess.update_aaf(event, support)
        ranking = tuple(
            sorted(
                ((a, float(dist[a])) for a in support),
                key=lambda p: (-p[1], p[0]),
            )
        )
        result = StepResult(index, ranking, deviation=not support)
        self.results.append(result)
        return result

    def finalize(self) -> AnalysisSummary:
        """Close the trace and report which earlier beam choices survived."""
        if self.finalized:
            raise ContractError("analysis already finalized")
        self.session.finalize()
        self.finalized = True
        accepted = tuple(
            self.session.accepted_interpretations(i)
            for i in range(1, self.session.prefix_length + 1)
        )
        inconsistent = []
        for result in self.results:
            if result.unresolved or not result.support:
                continue
            alive = {arg.activity for arg in accepted[result.index - 1]}
            if not (alive & result.support):
                inconsistent.append(result.index)
        return AnalysisSummary(accepted=accepted, inconsistent=tuple(inconsistent))

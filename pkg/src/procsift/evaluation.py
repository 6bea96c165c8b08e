"""Evaluation protocol: three accuracy variants, per-event timing, length
buckets, and the training-fraction sweep.

Per event, with one shared tagger prediction:

  * T    — argmax of the raw distribution;
  * T+A  — argmax after restricting to the activities the type-level mapping
           allows for the event type (with the same smoothing as the
           pipeline, so an all-invalid prediction is rescued instead of
           undefined);
  * T+R  — argmax of the analysis pipeline's ranked output; an event with no
           valid reading scores zero.

Ties always break toward the lowest activity id. Accuracy is per event
(percent); times are mean milliseconds per event and include the framework
snapshot/update/query work for T+R.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, replace

import numpy as np

from . import aaf
from .errors import ContractError
from .model import DeclarativeProcessModel, TypeLevelMapping
from .pipeline import Analysis, PipelineConfig, smooth_and_filter
from .reasoner import Session
from .synthgen import LabeledTrace
from .tagger import TrainConfig, train

ALL_BUCKET = "ALL"

CSV_HEADER = "arch,bucket,fraction,acc_t,acc_ta,acc_tr,time_t_ms,time_ta_ms,time_tr_ms"


@dataclass(frozen=True)
class MetricsRow:
    arch: str
    bucket: str
    fraction: int
    acc_t: float
    acc_ta: float
    acc_tr: float
    time_t_ms: float
    time_ta_ms: float
    time_tr_ms: float

    def csv(self) -> str:
        return (
            f"{self.arch},{self.bucket},{self.fraction},"
            f"{self.acc_t:.6g},{self.acc_ta:.6g},{self.acc_tr:.6g},"
            f"{self.time_t_ms:.6g},{self.time_ta_ms:.6g},{self.time_tr_ms:.6g}"
        )


class _Tally:
    __slots__ = ("events", "hit_t", "hit_ta", "hit_tr", "ns_t", "ns_ta", "ns_tr")

    def __init__(self) -> None:
        self.events = 0
        self.hit_t = self.hit_ta = self.hit_tr = 0
        self.ns_t = self.ns_ta = self.ns_tr = 0

    def row(self, arch: str, bucket: str, fraction: int) -> MetricsRow:
        n = max(1, self.events)
        return MetricsRow(
            arch=arch,
            bucket=bucket,
            fraction=fraction,
            acc_t=100.0 * self.hit_t / n,
            acc_ta=100.0 * self.hit_ta / n,
            acc_tr=100.0 * self.hit_tr / n,
            time_t_ms=self.ns_t / n / 1e6,
            time_ta_ms=self.ns_ta / n / 1e6,
            time_tr_ms=self.ns_tr / n / 1e6,
        )


def evaluate(
    records: list[LabeledTrace],
    tagger,
    mapping: TypeLevelMapping,
    model: DeclarativeProcessModel,
    cfg: PipelineConfig | None = None,
    arch: str | None = None,
    fraction: int = 100,
    solver_budget: int = aaf.DEFAULT_BUDGET,
) -> list[MetricsRow]:
    """Per-length rows plus an event-weighted ALL row.

    Solver overflows never abort a run: the affected step is unresolved and
    scores zero for the pipeline variant, which can only understate it.
    """
    cfg = replace(cfg or PipelineConfig(), on_overflow="continue")
    if not records:
        raise ContractError("evaluation needs at least one labelled trace")
    if getattr(tagger, "n_activities", mapping.n_activities) != mapping.n_activities:
        raise ContractError("tagger output width does not match the activity universe")
    tallies: dict[str, _Tally] = {}
    overall = _Tally()
    for rec in records:
        trace, labels = rec.trace, rec.labels
        if len(labels) != len(trace.events):
            raise ContractError(f"trace {trace.id!r}: labels do not cover every event")
        bucket = tallies.setdefault(str(len(trace.events)), _Tally())
        state = tagger.init(trace)
        session = Session(mapping, model, solver_budget=solver_budget)
        analysis = Analysis(session, cfg)
        for ev, (truth, _, _) in zip(trace.events, labels):
            t0 = time.perf_counter_ns()
            pd = tagger.predict(state, ev)
            t1 = time.perf_counter_ns()
            ta_vec = smooth_and_filter(
                np.asarray(pd, dtype=np.float64), mapping.cand_act(ev.etype), cfg
            )
            t2 = time.perf_counter_ns()
            step = analysis.process_event(ev, pd=pd)
            t3 = time.perf_counter_ns()

            pred_t = int(np.argmax(pd))
            pred_ta = int(np.argmax(ta_vec)) if ta_vec.max() > 0 else None
            pred_tr = step.top_activity()
            for tally in (bucket, overall):
                tally.events += 1
                tally.hit_t += int(pred_t == truth)
                tally.hit_ta += int(pred_ta == truth)
                tally.hit_tr += int(pred_tr == truth)
                tally.ns_t += t1 - t0
                tally.ns_ta += t2 - t0
                tally.ns_tr += (t1 - t0) + (t3 - t2)
    arch = arch or getattr(tagger, "arch", "tagger")
    rows = [
        tallies[b].row(arch, b, fraction)
        for b in sorted(tallies, key=lambda s: int(s))
    ]
    rows.append(overall.row(arch, ALL_BUCKET, fraction))
    return rows


def split_records(
    records: list[LabeledTrace], test_fraction: float, seed: int
) -> tuple[list[LabeledTrace], list[LabeledTrace]]:
    """Seeded train/test partition (test gets round(n * fraction) traces)."""
    if not 0 < test_fraction < 1:
        raise ContractError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    n_test = int(round(len(records) * test_fraction))
    test_idx = set(order[:n_test].tolist())
    train = [records[i] for i in range(len(records)) if i not in test_idx]
    test = [records[i] for i in range(len(records)) if i in test_idx]
    return train, test


def subsample(
    records: list[LabeledTrace], percent: int, seed: int
) -> list[LabeledTrace]:
    if not 0 < percent <= 100:
        raise ContractError("fraction must be in (0, 100]")
    if percent == 100:
        return list(records)
    rng = np.random.default_rng([seed, percent])
    order = rng.permutation(len(records))
    keep = max(1, int(round(len(records) * percent / 100)))
    chosen = sorted(order[:keep].tolist())
    return [records[i] for i in chosen]


def sweep_training_fraction(
    train_records: list[LabeledTrace],
    test_records: list[LabeledTrace],
    spec,
    emb,
    mapping: TypeLevelMapping,
    model: DeclarativeProcessModel,
    fractions: tuple[int, ...] = (20, 40, 60, 80, 90, 100),
    hyper: TrainConfig | None = None,
    cfg: PipelineConfig | None = None,
    seed: int = 0,
    solver_budget: int = aaf.DEFAULT_BUDGET,
) -> list[MetricsRow]:
    """Retrain on seeded subsamples of the training split and evaluate each
    tagger on the fixed test set; rows are grouped by fraction."""
    if any(not 0 < r <= 100 for r in fractions):
        raise ContractError("fractions must lie in (0, 100]")
    hyper = hyper or TrainConfig()
    rows: list[MetricsRow] = []
    for r in sorted(fractions):
        sample = subsample(train_records, r, seed)
        labelled = [(rec.trace, rec.activity_labels()) for rec in sample]
        tagger = train(spec, emb, labelled, hyper)
        rows.extend(
            evaluate(
                test_records, tagger, mapping, model, cfg,
                fraction=r, solver_budget=solver_budget,
            )
        )
    return rows


def emit_report(rows: list[MetricsRow], fmt: str = "csv") -> str:
    """Deterministic CSV, or per-curve plot data as JSON-lines-free text."""
    if not rows:
        raise ContractError("empty metrics table")
    if fmt == "csv":
        out = io.StringIO()
        out.write(CSV_HEADER + "\n")
        for row in rows:
            out.write(row.csv() + "\n")
        return out.getvalue()
    if fmt == "plot-data":
        out = io.StringIO()
        by_curve: dict[tuple, list[tuple[float, float]]] = {}
        for row in rows:
            if row.bucket != ALL_BUCKET:
                x = float(row.bucket)
                for metric in ("acc_t", "acc_ta", "acc_tr", "time_t_ms", "time_tr_ms"):
                    by_curve.setdefault(
                        (f"{metric}_vs_length", row.arch, row.fraction), []
                    ).append((x, getattr(row, metric)))
            else:
                for metric in ("acc_t", "acc_ta", "acc_tr"):
                    by_curve.setdefault(
                        (f"{metric}_vs_fraction", row.arch, None), []
                    ).append((float(row.fraction), getattr(row, metric)))
        for (name, arch, fraction) in sorted(
            by_curve, key=lambda k: (k[0], k[1], -1 if k[2] is None else k[2])
        ):
            pts = sorted(by_curve[(name, arch, fraction)])
            tag = f"{name} arch={arch}" + (f" fraction={fraction}" if fraction is not None else "")
            out.write(f"# {tag}\n")
            for x, y in pts:
                out.write(f"{x:.6g} {y:.6g}\n")
        return out.getvalue()
    raise ContractError(f"unknown report format {fmt!r}")


def parse_report(text: str) -> list[MetricsRow]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ContractError("not a metrics CSV (bad header)")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 9:
            raise ContractError(f"bad metrics row: {ln!r}")
        rows.append(
            MetricsRow(
                arch=parts[0],
                bucket=parts[1],
                fraction=int(parts[2]),
                acc_t=float(parts[3]),
                acc_ta=float(parts[4]),
                acc_tr=float(parts[5]),
                time_t_ms=float(parts[6]),
                time_ta_ms=float(parts[7]),
                time_tr_ms=float(parts[8]),
            )
        )
    return rows

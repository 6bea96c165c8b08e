import numpy as np
import pytest

from procsift.errors import ContractError
from procsift.evaluation import (
    CSV_HEADER,
    MetricsRow,
    emit_report,
    evaluate,
    parse_report,
    split_records,
    subsample,
    sweep_training_fraction,
)
from procsift.model import Event, Trace
from procsift.synthgen import generate_syn_model, generate_trace
from procsift.tagger import EmbeddingConfig, OracleTagger, TrainConfig, UniformTagger, windowed


@pytest.fixture(scope="module")
def syn_eval_setup():
    mapping, model = generate_syn_model(seed=0)
    rng = np.random.default_rng(17)
    records = [
        generate_trace(mapping, model, length, rng, trace_id=f"t{length}_{i}")
        for length in (8, 12)
        for i in range(3)
    ]
    return mapping, model, records


class TestEvaluate:
    def test_oracle_tagger_scores_hundred_everywhere(self, syn_eval_setup):
        mapping, model, records = syn_eval_setup
        oracle = OracleTagger(16, {r.trace.id: r.activity_labels() for r in records})
        rows = evaluate(records, oracle, mapping, model)
        assert {r.bucket for r in rows} == {"8", "12", "ALL"}
        for row in rows:
            assert row.acc_t == row.acc_ta == row.acc_tr == 100.0

    def test_filtering_never_hurts_on_valid_labels(self, syn_eval_setup):
        mapping, model, records = syn_eval_setup
        uniform = UniformTagger(16)
        rows = evaluate(records, uniform, mapping, model)
        for row in rows:
            assert row.acc_t <= row.acc_ta <= row.acc_tr

    def test_timing_monotonicity(self, syn_eval_setup):
        mapping, model, records = syn_eval_setup
        uniform = UniformTagger(16)
        rows = evaluate(records[:2], uniform, mapping, model)
        for row in rows:
            assert row.time_tr_ms >= row.time_t_ms >= 0.0

    def test_adversarial_mass_on_unmapped_activity(self, care):
        mapping, model = care

        class Adversary:
            n_activities = 3
            arch = "adversary"

            def init(self, trace=None):
                return None

            def predict(self, state, event):
                pd = np.zeros(3)
                pd[mapping.activity_id("A1")] = 1.0
                return pd

        # cannula insertions map only to the surgery activity, so all the
        # adversary's mass lands outside the mapping and smoothing rescues
        # the sole valid candidate
        ci = mapping.event_type_id("CannulaInsertion")
        trace = Trace("adv", (Event(1, ci),), finalized=True)
        a2 = mapping.activity_id("A2")
        from procsift.model import StepType
        from procsift.synthgen import LabeledTrace

        records = [LabeledTrace(trace, ((a2, StepType.FIRST_AND_LAST, 1),))]
        rows = evaluate(records, Adversary(), mapping, model)
        top = [r for r in rows if r.bucket == "ALL"][0]
        assert top.acc_t == 0.0
        assert top.acc_ta == 100.0 and top.acc_tr == 100.0

    def test_uniform_tagger_pins_cannula_to_surgery(self, care_restricted):
        mapping, model = care_restricted
        from conftest import example1_trace
        from conftest import example1_interpretations

        trace = example1_trace(mapping, finalized=False)
        _, i2 = example1_interpretations(mapping)
        record = type(
            "Rec",
            (),
            {
                "trace": trace,
                "labels": i2,
                "activity_labels": lambda self: tuple(a for a, _, _ in i2),
            },
        )()
        rows = evaluate([record], UniformTagger(3), mapping, model)
        # the last event maps only to the surgery activity: T+R always gets it
        assert rows[0].acc_tr >= 25.0

    def test_empty_records_rejected(self, care):
        mapping, model = care
        with pytest.raises(ContractError):
            evaluate([], UniformTagger(3), mapping, model)


class TestSplits:
    def test_split_partitions(self, syn_eval_setup):
        _, _, records = syn_eval_setup
        train, test = split_records(records, 0.34, seed=3)
        assert len(train) + len(test) == len(records)
        assert {r.trace.id for r in train}.isdisjoint({r.trace.id for r in test})

    def test_subsample_seeded_and_sized(self, syn_eval_setup):
        _, _, records = syn_eval_setup
        a = subsample(records, 50, seed=1)
        b = subsample(records, 50, seed=1)
        assert a == b
        assert len(a) == 3
        assert subsample(records, 100, seed=1) == records


class TestSweep:
    def test_rows_per_fraction(self, syn_eval_setup):
        mapping, model, records = syn_eval_setup
        train, test = split_records(records, 0.34, seed=0)
        emb = EmbeddingConfig(n_event_types=16, dim=4)
        rows = sweep_training_fraction(
            train,
            test,
            windowed(3, 16),
            emb,
            mapping,
            model,
            fractions=(50, 100),
            hyper=TrainConfig(epochs=2, seed=0),
        )
        fractions = sorted({r.fraction for r in rows})
        assert fractions == [50, 100]
        for fraction in fractions:
            assert any(r.fraction == fraction and r.bucket == "ALL" for r in rows)

    def test_bad_fraction_rejected(self, syn_eval_setup):
        mapping, model, records = syn_eval_setup
        with pytest.raises(ContractError):
            sweep_training_fraction(
                records, records, windowed(3, 16),
                EmbeddingConfig(n_event_types=16, dim=4), mapping, model,
                fractions=(0,),
            )


class TestReports:
    def test_csv_header_and_round_trip(self):
        rows = [
            MetricsRow("mb5", "20", 100, 51.5, 60.25, 70.125, 0.5, 0.6, 120.0),
            MetricsRow("mb5", "ALL", 100, 50.0, 60.0, 70.0, 0.5, 0.6, 118.5),
        ]
        text = emit_report(rows)
        assert text.splitlines()[0] == CSV_HEADER
        assert parse_report(text) == rows

    def test_plot_data_has_curves(self):
        rows = [
            MetricsRow("mb5", "20", 100, 50.0, 60.0, 70.0, 0.5, 0.6, 118.5),
            MetricsRow("mb5", "40", 100, 45.0, 55.0, 65.0, 0.5, 0.6, 150.0),
            MetricsRow("mb5", "ALL", 100, 47.5, 57.5, 67.5, 0.5, 0.6, 134.0),
            MetricsRow("mb5", "ALL", 20, 40.0, 50.0, 64.0, 0.5, 0.6, 140.0),
        ]
        text = emit_report(rows, fmt="plot-data")
        assert "# acc_tr_vs_length arch=mb5 fraction=100" in text
        assert "# acc_tr_vs_fraction arch=mb5" in text

    def test_empty_table_rejected(self):
        with pytest.raises(ContractError):
            emit_report([])

    def test_parse_rejects_garbage(self):
        with pytest.raises(ContractError):
            parse_report("not,a,metrics,file\n")


def test_sweep_full_fraction_equals_plain_evaluate(syn_eval_setup):
    from procsift.tagger import train

    mapping, model, records = syn_eval_setup
    train_recs, test_recs = split_records(records, 0.34, seed=0)
    emb = EmbeddingConfig(n_event_types=16, dim=4)
    hyper = TrainConfig(epochs=2, seed=4)
    swept = sweep_training_fraction(
        train_recs, test_recs, windowed(3, 16), emb, mapping, model,
        fractions=(100,), hyper=hyper,
    )
    tagger = train(
        windowed(3, 16), emb, [(r.trace, r.activity_labels()) for r in train_recs], hyper
    )
    direct = evaluate(test_recs, tagger, mapping, model)
    assert [(r.bucket, r.acc_t, r.acc_ta, r.acc_tr) for r in swept] == [
        (r.bucket, r.acc_t, r.acc_ta, r.acc_tr) for r in direct
    ]

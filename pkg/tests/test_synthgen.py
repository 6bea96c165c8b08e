import json

import numpy as np
import pytest

from procsift.model import (
    ConstraintKind,
    StepType,
    parse_model,
    serialize_model,
    validate_interpretation,
)
from procsift.synthgen import (
    DatasetSpec,
    GenerationError,
    LabeledTrace,
    SynModelSpec,
    generate_dataset,
    generate_syn_model,
    generate_trace,
    load_dataset,
    write_dataset,
)


@pytest.fixture(scope="module")
def syn():
    return generate_syn_model(seed=0)


class TestModelSampling:
    def test_universe_sizes(self, syn):
        mapping, model = syn
        assert mapping.n_event_types == 16
        assert mapping.n_activities == 16

    def test_per_event_activity_counts(self, syn):
        mapping, _ = syn
        counts = [len(mapping.cand_act(e)) for e in range(16)]
        assert all(1 <= c <= 5 for c in counts)
        assert abs(float(np.mean(counts)) - 2.5) <= 0.5

    def test_constraint_census(self, syn):
        _, model = syn
        census = {k: 0 for k in ConstraintKind}
        for con in model.constraints:
            census[con.kind] += 1
        assert census[ConstraintKind.MUST] == 6
        assert census[ConstraintKind.NOT] == 4
        assert census[ConstraintKind.PRECEDENCE] == 2
        assert census[ConstraintKind.NEG_PRECEDENCE] == 0

    def test_instance_bound_is_five(self, syn):
        _, model = syn
        assert set(model.max_inst) == {5}

    def test_same_seed_same_model(self, syn):
        mapping2, model2 = generate_syn_model(seed=0)
        assert serialize_model(*syn) == serialize_model(mapping2, model2)

    def test_different_seed_different_model(self, syn):
        other = generate_syn_model(seed=1)
        assert serialize_model(*syn) != serialize_model(*other)


class TestTraceSimulation:
    @pytest.mark.parametrize("length", [1, 7, 20, 40])
    def test_exact_length_and_validity(self, syn, length):
        mapping, model = syn
        rec = generate_trace(mapping, model, length, np.random.default_rng(length))
        assert len(rec.trace.events) == length
        assert rec.trace.finalized
        assert validate_interpretation(rec.trace, rec.labels, mapping, model) == ()

    def test_determinism(self, syn):
        mapping, model = syn
        a = generate_trace(mapping, model, 12, np.random.default_rng(42))
        b = generate_trace(mapping, model, 12, np.random.default_rng(42))
        assert a == b

    def test_infeasible_length_raises(self):
        # the single start activity has no one-step reading, so a length-1
        # finalized trace cannot exist
        doc = {
            "activities": ["A"],
            "event_types": ["E"],
            "mapping": [{"event": "E", "activity": "A", "steps": ["first", "last"]}],
            "start_activities": ["A"],
            "max_instances": {"A": 1},
            "constraints": [],
        }
        mapping, model = parse_model(json.dumps(doc))
        from procsift.model import enumerate_valid, Trace, Event

        assert enumerate_valid(
            Trace("t", (Event(1, 0),), finalized=True), mapping, model
        ) == ()
        with pytest.raises(GenerationError):
            generate_trace(mapping, model, 1, np.random.default_rng(0), retries=50)


class TestDatasetFiles:
    def test_dataset_roundtrip_and_manifest(self, syn, tmp_path):
        mapping, model = syn
        spec = DatasetSpec(counts={5: 3, 9: 2}, seed=7)
        manifest = generate_dataset(mapping, model, spec, tmp_path / "d.jsonl")
        assert manifest["n_traces"] == 5
        sidecar = json.loads((tmp_path / "d.jsonl.manifest.json").read_text())
        assert sidecar["sha256"] == manifest["sha256"]
        records = load_dataset(tmp_path / "d.jsonl", mapping)
        assert len(records) == 5
        for rec in records:
            assert validate_interpretation(rec.trace, rec.labels, mapping, model) == ()

    def test_regeneration_is_byte_identical(self, syn, tmp_path):
        mapping, model = syn
        spec = DatasetSpec(counts={6: 4}, seed=3)
        generate_dataset(mapping, model, spec, tmp_path / "a.jsonl")
        generate_dataset(mapping, model, spec, tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_zero_count_dataset(self, syn, tmp_path):
        mapping, model = syn
        manifest = generate_dataset(mapping, model, DatasetSpec(counts={5: 0}), tmp_path / "e.jsonl")
        assert manifest["n_traces"] == 0
        assert load_dataset(tmp_path / "e.jsonl", mapping) == []

    def test_write_load_preserves_labels(self, syn, tmp_path):
        mapping, model = syn
        rec = generate_trace(mapping, model, 8, np.random.default_rng(1), trace_id="keep")
        write_dataset(tmp_path / "one.jsonl", [rec], mapping)
        back = load_dataset(tmp_path / "one.jsonl", mapping)
        assert back == [rec]
        assert back[0].activity_labels() == tuple(a for a, _, _ in rec.labels)

#!/usr/bin/env python3
"""Desk-scale reproduction of the reference evaluation.

Generates a synthetic model with the target statistics, a dataset of 500
traces per length in {20, 40, 60}, trains a windowed tagger (window 5), and
sweeps the training fraction, writing the metrics CSV and plot data next to
the artifacts. Everything is seeded; rerunning reproduces the same numbers.
"""

import argparse
import time
from pathlib import Path

from procsift.evaluation import emit_report, split_records, sweep_training_fraction
from procsift.model import parse_model, serialize_model
from procsift.pipeline import PipelineConfig
from procsift.synthgen import DatasetSpec, generate_dataset, generate_syn_model, load_dataset
from procsift.tagger import EmbeddingConfig, TrainConfig, windowed


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="desk_eval", type=Path)
    parser.add_argument("--model-seed", default=0, type=int)
    parser.add_argument("--data-seed", default=11, type=int)
    parser.add_argument("--train-seed", default=3, type=int)
    parser.add_argument("--traces-per-length", default=500, type=int)
    parser.add_argument("--fractions", default="20,40,60,80,90,100")
    parser.add_argument("--test-fraction", default=0.1, type=float)
    parser.add_argument("--window", default=5, type=int)
    parser.add_argument("--solver-budget", default=30_000_000, type=int)
    args = parser.parse_args()

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.time()
    model_path = out / "syn_model.json"
    if model_path.exists():
        mapping, model = parse_model(model_path.read_text())
        print(f"model: reusing {model_path}")
    else:
        mapping, model = generate_syn_model(seed=args.model_seed)
        model_path.write_text(serialize_model(mapping, model))
        print(f"model: generated in {time.time() - t0:.0f}s -> {model_path}")

    t0 = time.time()
    data_path = out / "syn_desk.jsonl"
    counts = {20: args.traces_per_length, 40: args.traces_per_length, 60: args.traces_per_length}
    if not data_path.exists():
        generate_dataset(mapping, model, DatasetSpec(counts=counts, seed=args.data_seed), data_path)
        print(f"dataset: generated in {time.time() - t0:.0f}s -> {data_path}")
    records = load_dataset(data_path, mapping)
    train_recs, test_recs = split_records(records, args.test_fraction, seed=5)
    print(f"dataset: {len(train_recs)} training / {len(test_recs)} test traces")

    fractions = tuple(int(x) for x in args.fractions.split(","))
    t0 = time.time()
    rows = sweep_training_fraction(
        train_recs,
        test_recs,
        windowed(args.window, mapping.n_activities),
        EmbeddingConfig(n_event_types=mapping.n_event_types, dim=4),
        mapping,
        model,
        fractions=fractions,
        hyper=TrainConfig(seed=args.train_seed),
        cfg=PipelineConfig(k=None, gamma=0.001),
        seed=args.train_seed,
        solver_budget=args.solver_budget,
    )
    print(f"sweep over fractions {fractions} in {time.time() - t0:.0f}s")

    (out / "metrics.csv").write_text(emit_report(rows))
    (out / "plot_data.txt").write_text(emit_report(rows, fmt="plot-data"))
    print(f"wrote {out / 'metrics.csv'} and {out / 'plot_data.txt'}")
    for row in rows:
        if row.bucket == "ALL":
            print(
                f"  r={row.fraction:>3}%  Acc_T={row.acc_t:5.1f}  Acc_T+A={row.acc_ta:5.1f}  "
                f"Acc_T+R={row.acc_tr:5.1f}  Time_T+R={row.time_tr_ms:7.1f}ms"
            )


if __name__ == "__main__":
    main()

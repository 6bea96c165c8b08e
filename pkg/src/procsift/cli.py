"""Command-line entry points: generate models and datasets, train taggers,
run evaluations and sweeps, serve the HTTP API, or drive one session
interactively."""

from __future__ import annotations

import shlex
from pathlib import Path

import click

from .errors import BudgetExceeded, ContractError, SchemaError
from .evaluation import (
    emit_report,
    evaluate,
    split_records,
    sweep_training_fraction,
)
from .model import Event, parse_model, serialize_model, step_from_name
from .pipeline import Analysis, PipelineConfig
from .reasoner import CREDULOUS, SKEPTICAL, InterpretationQuery, Session
from .synthgen import (
    DatasetSpec,
    GenerationError,
    SynModelSpec,
    generate_dataset,
    generate_syn_model,
    load_dataset,
)
from .tagger import (
    EmbeddingConfig,
    RecurrentSpec,
    TrainConfig,
    TrainedTagger,
    UniformTagger,
    train,
    windowed,
)

_DOMAIN_ERRORS = (SchemaError, ContractError, BudgetExceeded, GenerationError)


def _fail(exc: Exception) -> None:
    raise click.ClickException(str(exc))


@click.group()
def main() -> None:
    """Interpret low-level event streams as high-level activity steps."""


@main.group()
def model() -> None:
    """Process model and mapping files."""


@model.command("gen")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--activities", type=int, default=16, show_default=True)
@click.option("--event-types", type=int, default=16, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def model_gen(seed: int, activities: int, event_types: int, out: str) -> None:
    """Sample a synthetic model with the reference statistics."""
    spec = SynModelSpec(n_activities=activities, n_event_types=event_types)
    try:
        mapping, process_model = generate_syn_model(spec, seed)
    except _DOMAIN_ERRORS as exc:
        _fail(exc)
    Path(out).write_text(serialize_model(mapping, process_model))
    click.echo(f"wrote {out}")


@main.group()
def data() -> None:
    """Labelled trace datasets."""


@data.command("gen")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option(
    "--lengths",
    multiple=True,
    required=True,
    help="LENGTH:COUNT, repeatable (e.g. --lengths 20:100 --lengths 40:100)",
)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-parallel", type=int, default=3, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def data_gen(model_path: str, lengths: tuple[str, ...], seed: int, max_parallel: int, out: str) -> None:
    """Generate ground-truth-annotated traces for a model."""
    counts: dict[int, int] = {}
    for spec in lengths:
        try:
            length_s, count_s = spec.split(":", 1)
            counts[int(length_s)] = counts.get(int(length_s), 0) + int(count_s)
        except ValueError:
            raise click.UsageError(f"--lengths takes LENGTH:COUNT, got {spec!r}")
    try:
        mapping, process_model = parse_model(Path(model_path).read_text())
        manifest = generate_dataset(
            mapping,
            process_model,
            DatasetSpec(counts=counts, seed=seed, max_parallel=max_parallel),
            out,
        )
    except _DOMAIN_ERRORS as exc:
        _fail(exc)
    click.echo(f"wrote {out} ({manifest['n_traces']} traces, sha256 {manifest['sha256'][:12]})")


@main.group()
def tagger() -> None:
    """Neural sequence taggers."""


_ARCHES = ("ma", "mb3", "mb5", "mb7", "mb10")


def _arch_spec(arch: str, n_activities: int):
    if arch == "ma":
        return RecurrentSpec(n_activities=n_activities)
    return windowed(int(arch[2:]), n_activities)


@tagger.command("train")
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--arch", type=click.Choice(_ARCHES), default="mb5", show_default=True)
@click.option("--epochs", type=int, default=None, help="default: 10 for ma, 50 for mb")
@click.option("--lr", type=float, default=1e-4, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--embedding", type=click.Choice(["learned", "one_hot"]), default="learned", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def tagger_train(data_path, model_path, arch, epochs, lr, batch_size, seed, embedding, out) -> None:
    """Train a tagger on a labelled dataset."""
    try:
        mapping, _ = parse_model(Path(model_path).read_text())
        records = load_dataset(data_path, mapping)
        spec = _arch_spec(arch, mapping.n_activities)
        emb = EmbeddingConfig(
            n_event_types=mapping.n_event_types,
            mode=embedding,
            dim=spec.input_dim if embedding == "learned" else 4,
        )
        if embedding == "one_hot" and emb.output_dim != spec.input_dim:
            spec = (
                RecurrentSpec(n_activities=mapping.n_activities, input_dim=emb.output_dim)
                if arch == "ma"
                else windowed(int(arch[2:]), mapping.n_activities, input_dim=emb.output_dim)
            )
        labelled = [(r.trace, r.activity_labels()) for r in records]
        trained = train(
            spec,
            emb,
            labelled,
            TrainConfig(epochs=epochs, learning_rate=lr, batch_size=batch_size, seed=seed),
        )
    except _DOMAIN_ERRORS as exc:
        _fail(exc)
    trained.save(out)
    losses = trained.metadata["train_loss"]
    click.echo(f"wrote {out} (train loss {losses[0]:.4f} -> {losses[-1]:.4f})")


@main.group(name="eval")
def eval_group() -> None:
    """Accuracy/timing evaluation."""


def _load_eval_inputs(data_path, model_path, tagger_path):
    mapping, process_model = parse_model(Path(model_path).read_text())
    records = load_dataset(data_path, mapping)
    if tagger_path:
        tg = TrainedTagger.load(tagger_path)
    else:
        tg = UniformTagger(mapping.n_activities)
    return mapping, process_model, records, tg


def _pipeline_config(k: str, gamma: float) -> PipelineConfig:
    if k == "auto":
        return PipelineConfig(k=None, gamma=gamma)
    return PipelineConfig(k=int(k), gamma=gamma)


@eval_group.command("run")
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--tagger", "tagger_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--k", default="auto", show_default=True, help="beam width or 'auto'")
@click.option("--gamma", type=float, default=0.001, show_default=True)
@click.option("--test-fraction", type=float, default=0.0, show_default=True,
              help="evaluate only a held-out fraction (0 = whole file)")
@click.option("--split-seed", type=int, default=0, show_default=True)
def eval_run(data_path, model_path, tagger_path, k, gamma, test_fraction, split_seed) -> None:
    """Evaluate T / T+A / T+R accuracy and timing; CSV on stdout."""
    try:
        mapping, process_model, records, tg = _load_eval_inputs(data_path, model_path, tagger_path)
        if test_fraction:
            _, records = split_records(records, test_fraction, split_seed)
        cfg = _pipeline_config(k, gamma)
        rows = evaluate(records, tg, mapping, process_model, cfg)
    except _DOMAIN_ERRORS as exc:
        _fail(exc)
    click.echo(emit_report(rows), nl=False)


@eval_group.command("sweep")
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--arch", type=click.Choice(_ARCHES), default="mb5", show_default=True)
@click.option("--fractions", default="20,40,60,80,90,100", show_default=True)
@click.option("--k", default="auto", show_default=True)
@click.option("--gamma", type=float, default=0.001, show_default=True)
@click.option("--test-fraction", type=float, default=0.2, show_default=True)
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "plot-data"]), default="csv", show_default=True)
def eval_sweep(data_path, model_path, arch, fractions, k, gamma, test_fraction, epochs, seed, fmt) -> None:
    """Train on shrinking fractions of the training split and evaluate each."""
    try:
        fracs = tuple(int(x) for x in fractions.split(","))
    except ValueError:
        raise click.UsageError(f"--fractions takes comma-separated integers, got {fractions!r}")
    try:
        mapping, process_model, records, _ = _load_eval_inputs(data_path, model_path, None)
        train_recs, test_recs = split_records(records, test_fraction, seed)
        spec = _arch_spec(arch, mapping.n_activities)
        emb = EmbeddingConfig(n_event_types=mapping.n_event_types, dim=spec.input_dim)
        rows = sweep_training_fraction(
            train_recs,
            test_recs,
            spec,
            emb,
            mapping,
            process_model,
            fractions=fracs,
            hyper=TrainConfig(epochs=epochs, seed=seed),
            cfg=_pipeline_config(k, gamma),
            seed=seed,
        )
    except _DOMAIN_ERRORS as exc:
        _fail(exc)
    click.echo(emit_report(rows, fmt), nl=False)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8754, show_default=True)
@click.option("--model-dir", type=click.Path(file_okay=False), default=None,
              help="artifact directory (default: PROCSIFT_MODEL_DIR or cwd)")
@click.option("--session-ttl", type=float, default=3600.0, show_default=True)
def serve(host: str, port: int, model_dir: str | None, session_ttl: float) -> None:
    """Serve the interpretation-session HTTP API."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(model_dir, session_ttl), host=host, port=port, log_level="warning")


_REPL_HELP = """commands:
  event <type> [name=value ...]   feed the next event
  query <activity> [step] [instance] [skeptical]
  explain <activity> <step> <instance>
  finalize                        close the trace
  state                           show processed events
  quit
"""


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--tagger", "tagger_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--k", default="auto", show_default=True)
@click.option("--gamma", type=float, default=0.001, show_default=True)
def repl(model_path, tagger_path, k, gamma) -> None:
    """Interactive single-session terminal mode."""
    try:
        mapping, process_model = parse_model(Path(model_path).read_text())
        tg = TrainedTagger.load(tagger_path) if tagger_path else UniformTagger(mapping.n_activities)
        analysis = Analysis(Session(mapping, process_model), _pipeline_config(k, gamma), tagger=tg)
    except _DOMAIN_ERRORS as exc:
        _fail(exc)
    click.echo(_REPL_HELP, nl=False)
    while True:
        try:
            line = input("procsift> ").strip()
        except EOFError:
            break
        if not line:
            continue
        try:
            parts = shlex.split(line)
        except ValueError as exc:
            click.echo(f"error: {exc}")
            continue
        cmd, args = parts[0], parts[1:]
        try:
            if cmd == "quit":
                break
            elif cmd == "help":
                click.echo(_REPL_HELP, nl=False)
            elif cmd == "event":
                if not args:
                    click.echo("error: event <type> [name=value ...]")
                    continue
                attrs = tuple(
                    (kv.split("=", 1)[0], kv.split("=", 1)[1]) for kv in args[1:] if "=" in kv
                )
                event = Event(
                    analysis.session.prefix_length + 1,
                    mapping.event_type_id(args[0]),
                    attrs,
                )
                result = analysis.process_event(event)
                if result.deviation:
                    click.echo(f"e{result.index}: no valid interpretation (deviation)")
                else:
                    ranked = ", ".join(
                        f"{mapping.activities[a]}={p:.3f}" for a, p in result.ranking
                    )
                    click.echo(f"e{result.index}: {ranked}")
            elif cmd == "query":
                if not args:
                    click.echo("error: query <activity> [step] [instance] [skeptical]")
                    continue
                semantics = SKEPTICAL if "skeptical" in args[1:] else CREDULOUS
                rest = [a for a in args[1:] if a != "skeptical"]
                q = InterpretationQuery(
                    event_index=analysis.session.prefix_length,
                    activity=mapping.activity_id(args[0]),
                    step=step_from_name(rest[0]) if len(rest) > 0 else None,
                    instance=int(rest[1]) if len(rest) > 1 else None,
                    semantics=semantics,
                )
                answer = analysis.session.answer(q)
                if isinstance(answer, bool):
                    click.echo("YES" if answer else "NO")
                elif not answer:
                    click.echo("no valid interpretations")
                else:
                    for t in answer:
                        click.echo(
                            f"  {mapping.activities[t.activity]} {t.step.value} instance {t.instance}"
                        )
            elif cmd == "explain":
                if len(args) != 3:
                    click.echo("error: explain <activity> <step> <instance>")
                    continue
                q = InterpretationQuery(
                    event_index=analysis.session.prefix_length,
                    activity=mapping.activity_id(args[0]),
                    step=step_from_name(args[1]),
                    instance=int(args[2]),
                )
                reasons = analysis.session.explain(q)
                if not reasons:
                    click.echo("valid (no invalidity reasons)")
                for r in reasons:
                    loc = f" at e{','.join(map(str, r.indices))}" if r.indices else ""
                    con = f" (rule {r.constraint})" if r.constraint is not None else ""
                    click.echo(f"  {r.kind}{loc}{con}")
            elif cmd == "finalize":
                summary = analysis.finalize()
                click.echo(
                    f"finalized; inconsistent events: {list(summary.inconsistent) or 'none'}"
                )
            elif cmd == "state":
                for ev in analysis.session.prefix:
                    click.echo(f"  e{ev.index}: {mapping.event_types[ev.etype]}")
            else:
                click.echo(f"error: unknown command {cmd!r} (try 'help')")
        except _DOMAIN_ERRORS as exc:
            click.echo(f"error: {exc}")


if __name__ == "__main__":
    main()

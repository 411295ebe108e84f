"""Command-line interface: synth, train, eval, predict, serve.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  A TOML config file
can pre-set any option (sections named after subcommands); explicit flags win.
All artifacts are files; predict writes its JSON to stdout.
"""
from __future__ import annotations

import hashlib
import json
import logging
import sys
from pathlib import Path

import click

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .corpus import (
    CorpusError,
    corpus_to_support_set,
    load_support_json,
    read_bio_corpus,
    save_support_json,
    write_bio,
)
from .encoders import EncoderConfig, EncoderError, create_encoder
from .evaluation import EvalProtocol, run_protocol
from .scoring import ALGORITHMS, ScoringConfig, predict as run_predict
from .server import WorkspaceStore, create_app
from .synth import SynthError, default_spec, generate
from .training import TrainingConfig, TrainingError, train as run_train

log = logging.getLogger(__name__)

RUNTIME_ERRORS = (CorpusError, EncoderError, TrainingError, CheckpointError, SynthError, OSError)


def fail(message: str) -> "click.exceptions.Exit":
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="TOML config file; flags override its values.")
@click.option("-v", "--verbose", count=True, help="-v for info, -vv for debug.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, verbose: int) -> None:
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {}
    if config_path:
        with open(config_path, "rb") as handle:
            ctx.obj = tomllib.load(handle)


def from_config(ctx: click.Context, section: str, **values):
    """Fill in values the user did not set on the command line from the config file."""
    overrides = (ctx.obj or {}).get(section, {})
    merged = {}
    for name, value in values.items():
        source = ctx.get_parameter_source(name)
        if source is not None and source.name in ("COMMANDLINE", "ENVIRONMENT"):
            merged[name] = value
        elif name in overrides:
            merged[name] = overrides[name]
        else:
            merged[name] = value
    return merged


def parse_budgets(_ctx, _param, value: str) -> tuple[int, ...]:
    budgets = tuple(int(b) for b in value.split(",") if b.strip())
    if not budgets:
        raise click.UsageError("budget list must not be empty")
    return budgets


encoder_options = [
    click.option("--encoder", "encoder_kind", type=click.Choice(["toy-transformer", "static-hash"]),
                 default="toy-transformer", show_default=True),
    click.option("--dim", type=int, default=64, show_default=True),
    click.option("--layers", type=int, default=2, show_default=True),
    click.option("--heads", type=int, default=4, show_default=True),
    click.option("--hash-buckets", "vocab_hash_buckets", type=int, default=8192, show_default=True),
    click.option("--max-seq-len", "max_sequence_length", type=int, default=384, show_default=True),
]

scoring_options = [
    click.option("--algorithm", type=click.Choice(list(ALGORITHMS)),
                 default="hard-attention", show_default=True),
    click.option("--k", type=int, default=5, show_default=True,
                 help="Supports per type used by hard/top-K scoring and training."),
    click.option("--temperature", type=float, default=1.0, show_default=True),
    click.option("--top-n", type=int, default=5, show_default=True),
    click.option("--max-span-length", type=int, default=None),
]


def add_options(options):
    def wrap(func):
        for option in reversed(options):
            func = option(func)
        return func
    return wrap


@main.command("synth")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--train-size", type=int, default=400, show_default=True)
@click.option("--test-size", type=int, default=100, show_default=True)
@click.option("--pool-per-type", type=int, default=30, show_default=True)
@click.pass_context
def cmd_synth(ctx: click.Context, **params) -> None:
    """Generate a synthetic transfer task: train/test BIO files plus a support pool."""
    params = from_config(ctx, "synth", **params)
    out_dir = Path(params["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        spec = default_spec(
            seed=params["seed"],
            train_size=params["train_size"],
            test_size=params["test_size"],
            pool_per_type=params["pool_per_type"],
        )
        result = generate(spec)
        write_bio(result.train, out_dir / "train.bio")
        write_bio(result.test, out_dir / "test.bio")
        save_support_json(result.target_pool, out_dir / "support_pool.json")
        manifest = {
            "seed": params["seed"],
            "train_size": len(result.train),
            "test_size": len(result.test),
            "pool": {t: result.target_pool.count(t) for t in result.target_pool.entity_types},
            "source_types": sorted(spec.source_types),
            "target_types": sorted(spec.target_types),
        }
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
        )
    except RUNTIME_ERRORS as exc:
        fail(str(exc))
    click.echo(f"wrote {out_dir}/train.bio, test.bio, support_pool.json", err=True)


@main.command("train")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--support", "support_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Support pool JSON; defaults to exploding the corpus itself.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--loss-csv", "loss_csv", type=click.Path(dir_okay=False), default=None)
@add_options(encoder_options)
@click.option("--epochs", type=int, default=5, show_default=True)
@click.option("--batch-size", type=int, default=8, show_default=True)
@click.option("--lr", "learning_rate", type=float, default=5e-5, show_default=True)
@click.option("--weight-decay", type=float, default=0.0, show_default=True)
@click.option("--adam-epsilon", type=float, default=1e-8, show_default=True)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--temperature", type=float, default=1.0, show_default=True)
@click.option("--neg-pos-ratio", type=float, default=1.0, show_default=True)
@click.option("--squash", type=click.Choice(["sigmoid", "softmax"]), default="sigmoid",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def cmd_train(ctx: click.Context, **params) -> None:
    """Fine-tune the encoder on a BIO corpus and write a checkpoint."""
    params = from_config(ctx, "train", **params)
    try:
        corpus = read_bio_corpus(params["corpus_path"])
        pool = (
            load_support_json(params["support_path"])
            if params["support_path"]
            else corpus_to_support_set(corpus)
        )
        encoder_cfg = EncoderConfig(
            kind=params["encoder_kind"],
            dim=params["dim"],
            layers=params["layers"],
            heads=params["heads"],
            vocab_hash_buckets=params["vocab_hash_buckets"],
            seed=params["seed"],
            max_sequence_length=params["max_sequence_length"],
        )
        training_cfg = TrainingConfig(
            k=params["k"],
            temperature=params["temperature"],
            learning_rate=params["learning_rate"],
            adam_epsilon=params["adam_epsilon"],
            weight_decay=params["weight_decay"],
            max_sequence_length=params["max_sequence_length"],
            neg_pos_ratio=params["neg_pos_ratio"],
            batch_size=params["batch_size"],
            epochs=params["epochs"],
            seed=params["seed"],
            squash=params["squash"],
        )
        encoder = create_encoder(encoder_cfg)
        if params["encoder_kind"] == "toy-transformer":
            result = run_train(corpus, pool, encoder, training_cfg)
            curve = result.loss_curve
            optimizer_state = result.optimizer_state
        else:
            curve, optimizer_state = [], None
        save_checkpoint(
            params["out_path"],
            encoder,
            training_config=training_cfg.to_dict(),
            optimizer_state=optimizer_state,
            seed=params["seed"],
        )
        if params["loss_csv"]:
            lines = ["epoch,mean_loss"]
            lines += [f"{i},{loss!r}" for i, loss in enumerate(curve)]
            Path(params["loss_csv"]).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except RUNTIME_ERRORS as exc:
        fail(str(exc))
    click.echo(f"checkpoint written to {params['out_path']}", err=True)


@main.command("eval")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--support", "support_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--budgets", callback=parse_budgets, default="10,20,50,100,200,500",
              show_default=True, help="Comma-separated per-type support budgets.")
@click.option("--trials", type=int, default=10, show_default=True)
@click.option("--out-prefix", default="eval_report", show_default=True)
@add_options(scoring_options)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def cmd_eval(ctx: click.Context, **params) -> None:
    """Budgeted repeated evaluation of a checkpoint on a target-domain corpus."""
    params = from_config(ctx, "eval", **params)
    try:
        encoder, _ = load_checkpoint(params["checkpoint_path"])
        corpus = read_bio_corpus(params["corpus_path"])
        pool = load_support_json(params["support_path"])
        protocol = EvalProtocol(
            budgets=tuple(params["budgets"]), trials=params["trials"], seed=params["seed"]
        )
        scoring = ScoringConfig(
            algorithm=params["algorithm"],
            k=params["k"],
            temperature=params["temperature"],
            top_n=params["top_n"],
            max_span_length=params["max_span_length"],
        )
        report = run_protocol(corpus, pool, encoder, scoring, protocol)
        prefix = Path(params["out_prefix"])
        report.save(prefix.with_suffix(".csv"), prefix.with_suffix(".json"))
    except RUNTIME_ERRORS as exc:
        fail(str(exc))
    except ValueError as exc:
        raise click.UsageError(str(exc))
    click.echo(f"report written to {prefix.with_suffix('.csv')} and .json", err=True)


@main.command("predict")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--support", "support_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--query", required=True, help="Whitespace-tokenized query sentence.")
@add_options(scoring_options)
@click.pass_context
def cmd_predict(ctx: click.Context, **params) -> None:
    """Recognize entities in one query; prints the prediction JSON on stdout."""
    params = from_config(ctx, "predict", **params)
    tokens = params["query"].split()
    if not tokens:
        raise click.UsageError("query must contain at least one token")
    try:
        encoder, _ = load_checkpoint(params["checkpoint_path"])
        pool = load_support_json(params["support_path"])
        if len(pool) == 0:
            fail("support file contains no examples")
        cfg = ScoringConfig(
            algorithm=params["algorithm"],
            k=params["k"],
            temperature=params["temperature"],
            top_n=params["top_n"],
            max_span_length=params["max_span_length"],
        )
        prediction = run_predict(tokens, pool, encoder, cfg)
    except RUNTIME_ERRORS as exc:
        fail(str(exc))
    click.echo(prediction.to_json(indent=2))


@main.command("serve")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--data-dir", type=click.Path(file_okay=False), default=None,
              help="Journal/snapshot directory; omit for in-memory workspaces.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8601, show_default=True)
@add_options(scoring_options)
@click.pass_context
def cmd_serve(ctx: click.Context, **params) -> None:
    """Serve the workspace HTTP API until SIGTERM; shutdown writes snapshots."""
    import uvicorn

    params = from_config(ctx, "serve", **params)
    try:
        encoder, _ = load_checkpoint(params["checkpoint_path"])
        digest = hashlib.sha256(Path(params["checkpoint_path"]).read_bytes()).hexdigest()[:12]
        store = WorkspaceStore(
            encoder,
            data_dir=params["data_dir"],
            checkpoint_id=digest,
            scoring_defaults=ScoringConfig(
                algorithm=params["algorithm"],
                k=params["k"],
                temperature=params["temperature"],
                top_n=params["top_n"],
                max_span_length=params["max_span_length"],
            ),
        )
        app = create_app(store)
        uvicorn.run(app, host=params["host"], port=params["port"], log_level="warning")
    except RUNTIME_ERRORS as exc:
        fail(str(exc))
    except SystemExit:
        raise
    except Exception as exc:  # uvicorn wraps bind errors variously
        fail(str(exc))


if __name__ == "__main__":
    main()

"""``kgnn`` command line: corpus generation, graph dumps, training, evaluation, sweeps."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .data import CorpusError, read_corpus
from .knowledge import KnowledgeStoreError, RelationVocabulary, load_store
from .metrics import MetricsError, evaluate_predictions
from .synthetic import SyntheticSpecError, build_world, generate_questions, write_task
from .training import (
    TrainingDiverged,
    evaluate,
    gold_record,
    load_model,
    predict,
    prepare_corpus,
    read_predictions,
    save_model,
    train,
    write_predictions,
)

log = logging.getLogger("kgnn")

USER_ERRORS = (ConfigError, CorpusError, KnowledgeStoreError, SyntheticSpecError, MetricsError, TrainingDiverged, ValueError)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="sectioned key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config value")
    p.add_argument("--seed", type=int, help="seed for every random choice (run.seed)")
    p.add_argument("-v", "--verbose", action="store_true")


def _paths(p: argparse.ArgumentParser, *keys: str) -> None:
    for key in keys:
        p.add_argument(f"--{key.replace('_', '-')}", dest=f"path_{key}", metavar="PATH")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen-corpus", help="write a synthetic corpus with its entity and triple files")
    _common(p)
    _paths(p, "output_dir")
    p.add_argument("--questions", type=int, help="training questions (corpus.num_questions)")
    p.add_argument("--dev-questions", type=int, help="dev questions (sweep.dev_questions)")
    p.add_argument("--paragraphs", type=int, help="paragraphs per question")
    p.add_argument("--entities", type=int, help="entities in the knowledge base")

    p = sub.add_parser("build-graph", help="print the entity graph of one question as JSON")
    _common(p)
    _paths(p, "corpus", "entities", "triples")
    p.add_argument("--id", required=True, help="question id")

    p = sub.add_parser("train", help="train a model and save the best-dev checkpoint")
    _common(p)
    _paths(p, "corpus", "dev", "entities", "triples", "checkpoint", "output_dir")
    p.add_argument("--steps", type=int, help="reasoning steps T (train.num_steps)")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("eval", help="score a checkpoint (or a prediction file) against a corpus")
    _common(p)
    _paths(p, "corpus", "entities", "triples", "checkpoint", "predictions", "output_dir")

    p = sub.add_parser("predict", help="write JSON-lines predictions")
    _common(p)
    _paths(p, "corpus", "entities", "triples", "checkpoint", "predictions")

    p = sub.add_parser("gradcheck", help="finite-difference check of the full loss on a toy batch")
    _common(p)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)

    for name, help_text in (
        ("sweep-layers", "accuracy against the number of reasoning steps"),
        ("sweep-paragraphs", "joint F1 against the number of paragraphs, with and without the graph"),
    ):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        _paths(p, "output_dir")
        p.add_argument("--epochs", type=int)
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set {item!r}: expected SECTION.KEY=VALUE")
        overrides[key.strip()] = value
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    for name, value in vars(args).items():
        if name.startswith("path_") and value is not None:
            overrides[f"paths.{name[5:]}"] = value
    flags = {
        "questions": "corpus.num_questions",
        "dev_questions": "sweep.dev_questions",
        "paragraphs": "corpus.paragraphs_per_question",
        "entities": "corpus.num_entities",
        "steps": "train.num_steps",
        "epochs": "train.epochs",
    }
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = str(value)
    return load_config(args.config, overrides)


def _store(cfg: RunConfig):
    return load_store(
        cfg.path("entities", must_exist=True),
        cfg.path("triples", must_exist=True),
        RelationVocabulary(tuple(cfg.model.relations)),
    )


def cmd_gen_corpus(cfg: RunConfig, args) -> int:
    out = cfg.path("output_dir")
    world = build_world(cfg.corpus)
    train_examples = generate_questions(world, cfg.corpus)
    dev_spec = replace(cfg.corpus, num_questions=cfg.sweep.dev_questions, seed=cfg.corpus.seed + 1)
    dev_examples = generate_questions(world, dev_spec)
    paths = write_task(out, world, train_examples, cfg.corpus, "train")
    paths.update({f"dev_{k}": v for k, v in write_task(out, world, dev_examples, dev_spec, "dev").items()})
    summary = {
        "entities": len(world.store),
        "triples": len(world.store.triples),
        "train_questions": len(train_examples),
        "dev_questions": len(dev_examples),
        "files": {k: str(v) for k, v in sorted(paths.items()) if not k.startswith("dev_") or k == "dev_corpus"},
    }
    print(_dump(summary))
    return 0


def cmd_build_graph(cfg: RunConfig, args) -> int:
    store = _store(cfg)
    examples = {ex.id: ex for ex in read_corpus(cfg.path("corpus", must_exist=True))}
    if args.id not in examples:
        raise CorpusError(f"--id: question {args.id!r} not in {cfg.paths['corpus']}")
    prepared = prepare_corpus([examples[args.id]], store, cfg.model)[0]
    print(prepared.graph.dumps())
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    store = _store(cfg)
    train_set = prepare_corpus(read_corpus(cfg.path("corpus", must_exist=True)), store, cfg.model, require_span=True)
    dev_set = []
    if cfg.paths.get("dev"):
        dev_set = prepare_corpus(read_corpus(cfg.path("dev", must_exist=True)), store, cfg.model, require_span=True)
    checkpoint = cfg.path("checkpoint")
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    result = train(cfg.model, cfg.train, train_set, dev_set, checkpoint=checkpoint)
    if not dev_set:
        save_model(checkpoint, result.model, {"train_config": cfg.train.to_dict(), "epoch": result.best_epoch})
    summary = {"best_epoch": result.best_epoch, "best_dev": result.best_dev, "checkpoint": str(checkpoint), "updates": result.updates}
    if cfg.paths.get("output_dir"):
        out = cfg.path("output_dir")
        _write(out / "train_log.jsonl", "".join(json.dumps(e, sort_keys=True) + "\n" for e in result.history))
        _write(out / "run_config.json", _dump(cfg.to_dict()) + "\n")
    print(_dump(summary))
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    store = _store(cfg)
    examples = read_corpus(cfg.path("corpus", must_exist=True))
    echo = cfg.to_dict()
    if cfg.paths.get("predictions"):
        table = read_predictions(cfg.path("predictions", must_exist=True))
        prepared = prepare_corpus(examples, store, cfg.model)
        report = evaluate_predictions(table, [gold_record(p) for p in prepared], echo)
    else:
        model, _ = load_model(cfg.path("checkpoint", must_exist=True))
        prepared = prepare_corpus(examples, store, model.config)
        report, _ = evaluate(model, prepared, cfg.train.eval_batch_size, config=echo)
    if cfg.paths.get("output_dir"):
        _write(cfg.path("output_dir") / "metrics.json", _dump(report.to_json()) + "\n")
    print(_dump(report.to_json(per_question=False)))
    return 0


def cmd_predict(cfg: RunConfig, args) -> int:
    store = _store(cfg)
    model, _ = load_model(cfg.path("checkpoint", must_exist=True))
    prepared = prepare_corpus(read_corpus(cfg.path("corpus", must_exist=True)), store, model.config)
    out = cfg.path("predictions")
    out.parent.mkdir(parents=True, exist_ok=True)
    preds = predict(model, prepared, cfg.train.eval_batch_size)
    write_predictions(out, preds)
    print(_dump({"predictions": str(out), "count": len(preds)}))
    return 0


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    from .gradcheck import DEFAULT_SEED, run_gradcheck

    seed = args.seed if args.seed is not None else DEFAULT_SEED
    result = run_gradcheck(seed=seed, eps=args.eps)
    payload = result.to_json()
    payload["tolerance"] = args.tolerance
    payload["passed"] = result.max_relative_error < args.tolerance
    print(_dump(payload))
    if not payload["passed"]:
        print(f"gradcheck: max_relative_error {result.max_relative_error:.3e} >= tolerance {args.tolerance:g}", file=sys.stderr)
        return 1
    return 0


def _emit_table(table, out: Path, plot) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _write(out / f"{table.name}.json", table.dumps() + "\n")
    _write(out / f"{table.name}.tsv", table.to_tsv())
    _write(out / f"{table.name}.txt", table.to_text())
    plot(table, out / f"{table.name}.png")
    print(table.to_text(), end="")


def _sweep_data(cfg: RunConfig, paragraphs: int, dev_questions: int):
    spec = replace(cfg.corpus, num_questions=cfg.sweep.train_questions, paragraphs_per_question=paragraphs)
    world = build_world(spec)
    train_set = prepare_corpus(generate_questions(world, spec), world.store, cfg.model, require_span=True)
    dev_spec = replace(spec, num_questions=dev_questions, seed=spec.seed + 1)
    return world, train_set, dev_spec


def cmd_sweep_layers(cfg: RunConfig, args) -> int:
    from .plotting import plot_layer_sweep
    from .sweeps import layer_sweep

    world, train_set, dev_spec = _sweep_data(cfg, cfg.sweep.train_paragraphs, cfg.sweep.dev_questions)
    dev_set = prepare_corpus(generate_questions(world, dev_spec), world.store, cfg.model, require_span=True)
    table = layer_sweep(train_set, dev_set, cfg.model, cfg.train, cfg.sweep.t_values)
    table.meta["config"] = cfg.to_dict()
    _emit_table(table, cfg.path("output_dir"), plot_layer_sweep)
    return 0


def cmd_sweep_paragraphs(cfg: RunConfig, args) -> int:
    from .plotting import plot_paragraph_sweep
    from .sweeps import paragraph_sweep

    world, train_set, dev_spec = _sweep_data(cfg, cfg.sweep.train_paragraphs, cfg.sweep.paragraph_dev_questions)
    table = paragraph_sweep(world, train_set, cfg.model, cfg.train, dev_spec, cfg.sweep.paragraph_counts)
    table.meta["config"] = cfg.to_dict()
    _emit_table(table, cfg.path("output_dir"), plot_paragraph_sweep)
    return 0


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "build-graph": cmd_build_graph,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
    "sweep-layers": cmd_sweep_layers,
    "sweep-paragraphs": cmd_sweep_paragraphs,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # unknown command or flag: usage on stderr, exit 2
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except USER_ERRORS as exc:
        print(f"kgnn {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

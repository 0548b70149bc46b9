"""``sitkg`` command line entry point."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Sequence

from . import __version__
from .baselines import B1, B2, fit_next, fit_parent, ranked, write_table
from .embed import MODELS, EmbeddingConfig, load_checkpoint, save_checkpoint, train
from .evaluation import (
    BaselinePredictor,
    EmbeddingPredictor,
    MetricsTable,
    RandomPredictor,
    bootstrap,
    build_queries,
    evaluate,
    parse_csv,
    report,
)
from .ingest import AssociationPolicy, ingest_annotations, load_annotation_files, read_triples, write_triples
from .kg_core import DEFAULT_VOCABULARY, SituationalGraph, Vocabulary, label_projection, validate
from .llm_bridge import HttpTransport, LLMPredictor, MockTransport, PromptConfig
from .splitter import Split, apply_manifest, read_manifest, split_by_take, write_manifest
from .stats import compute_stats, format_csv, format_text
from .synthetic import generate_synthetic

logger = logging.getLogger("sitkg")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
PREDICTORS = ("b1", "b2", *MODELS, "llm", "random")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=1, help="single source of randomness")
    p.add_argument("--threads", type=int, default=1, help="worker threads for evaluation")
    p.add_argument("--vocab", help="JSON vocabulary file (parent_actions, sub_actions)")
    p.add_argument("--log-level", default="INFO")


def _graph_opt(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", default="graph.tsv", help="triple file (node file alongside)")
    p.add_argument("--split", dest="manifest", help="split manifest TSV; default: highest takes held out")
    p.add_argument("--test-takes", type=int, default=2)


def _embed_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=MODELS, default="transe")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--negatives", type=int, default=4)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--loss", choices=("margin", "softplus"), default=None)
    p.add_argument("--reg", type=float, default=1e-5)
    p.add_argument("--literal-dim", type=int, default=256)
    p.add_argument("--workers", type=int, default=1, help="sharded training (not bitwise deterministic)")


def _llm_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mock", help="JSON script replacing the HTTP transport")
    p.add_argument("--endpoint", default="", help="chat endpoint (default $SITKG_LLM_ENDPOINT)")
    p.add_argument("--llm-model", default="gpt-4o-mini")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--examples-per-class", type=int, default=1)
    p.add_argument("--max-triples", type=int, default=0)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--max-in-flight", type=int, default=4)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sitkg", description="Situational knowledge graph toolkit")
    parser.add_argument("--version", action="version", version=f"sitkg {__version__}")
    parser.add_argument("--config", help="key=value file; command-line flags win")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic corpus and its graph")
    _common(p)
    p.add_argument("--tasks", type=int, default=9)
    p.add_argument("--subjects", type=int, default=6)
    p.add_argument("--takes", type=int, default=10)
    p.add_argument("--min-overlap", type=float, default=0.5)
    p.add_argument("--annotations", action="store_true", help="also write annotation JSON files")
    p.add_argument("-o", "--out", required=True, help="output directory")

    p = sub.add_parser("ingest", help="build the graph from annotation JSON files")
    _common(p)
    p.add_argument("inputs", nargs="+", help="annotation files or directories")
    p.add_argument("--min-overlap", type=float, default=0.5)
    p.add_argument("-o", "--out", required=True, help="output directory")

    p = sub.add_parser("stats", help="print the graph statistics panel")
    _common(p)
    p.add_argument("graph")
    p.add_argument("--csv", action="store_true", help="print CSV instead of text")

    p = sub.add_parser("split", help="write the train/test split")
    _common(p)
    p.add_argument("graph")
    p.add_argument("--test-takes", type=int, default=2)
    p.add_argument("--manifest", help="load this manifest instead of computing one")
    p.add_argument("-o", "--out", required=True, help="output directory")

    p = sub.add_parser("baseline", help="fit and evaluate a frequency baseline")
    _common(p)
    _graph_opt(p)
    p.add_argument("--task", choices=("parent", "next"), required=True)
    p.add_argument("--variant", choices=(B1, B2), required=True)
    p.add_argument("--table-out", help="write the fitted table as TSV")
    p.add_argument("--out", help="write metrics CSV")

    p = sub.add_parser("train", help="train an embedding model on the training split")
    _common(p)
    _graph_opt(p)
    _embed_opts(p)
    p.add_argument("-o", "--out", required=True, help="checkpoint path")

    p = sub.add_parser("evaluate", help="evaluate one predictor on one task")
    _common(p)
    _graph_opt(p)
    _embed_opts(p)
    _llm_opts(p)
    p.add_argument("--predictor", choices=PREDICTORS, required=True)
    p.add_argument("--task", choices=("parent", "next"), required=True)
    p.add_argument("--checkpoint", help="trained model for embedding predictors")
    p.add_argument("--bootstrap", type=int, default=0, help="resample this many queries")
    p.add_argument("--out", help="write metrics CSV")

    p = sub.add_parser("llm-eval", help="evaluate the chat-model bridge")
    _common(p)
    _graph_opt(p)
    _llm_opts(p)
    p.add_argument("--task", choices=("parent", "next"), default="parent")
    p.add_argument("--out", help="write metrics CSV")

    p = sub.add_parser("report", help="render metrics CSV files")
    _common(p)
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", choices=("text", "csv", "markdown"), default="text")
    return parser


def _read_config(path: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, config: dict[str, str]) -> None:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for p in sub.choices.values():
        known = {a.dest: a for a in p._actions}
        values = {}
        for k, v in config.items():
            if k not in known:
                continue
            if isinstance(known[k], argparse._StoreTrueAction):
                values[k] = v.lower() in ("1", "true", "yes", "on")
            else:
                values[k] = v
        p.set_defaults(**values)


def _vocab(args) -> Vocabulary:
    return Vocabulary.load(args.vocab) if getattr(args, "vocab", None) else DEFAULT_VOCABULARY


def _write_provenance(outdir: Path, args: argparse.Namespace, outputs: Sequence[Path]) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    (outdir / "config.effective").write_text(
        "".join(f"{k}={'' if v is None else v}\n" for k, v in cfg.items()), encoding="utf-8"
    )
    manifest_path = outdir / "MANIFEST"
    entries: dict[str, str] = {}
    if manifest_path.exists():
        for line in manifest_path.read_text(encoding="utf-8").splitlines():
            digest, _, name = line.partition("  ")
            if name:
                entries[name] = digest
    for path in outputs:
        entries[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
    manifest_path.write_text("".join(f"{d}  {n}\n" for n, d in sorted(entries.items())), encoding="utf-8")


def _load_split(args) -> tuple[SituationalGraph, Split]:
    g = read_triples(args.graph)
    if args.manifest:
        return g, apply_manifest(g, read_manifest(args.manifest))
    return g, split_by_take(g, args.test_takes)


def _embedding_config(args, model: str | None = None) -> EmbeddingConfig:
    values = {f.name: getattr(args, f.name, None) for f in fields(EmbeddingConfig)}
    values["model"] = model or args.model
    values["loss"] = args.loss or ""
    values["seed"] = args.seed
    return EmbeddingConfig.from_mapping(values)


def _prompt_config(args) -> PromptConfig:
    return PromptConfig(
        examples_per_class=args.examples_per_class,
        max_triples_per_example=args.max_triples,
        endpoint=args.endpoint,
        model=args.llm_model,
        temperature=args.temperature,
        timeout=args.timeout,
        max_in_flight=args.max_in_flight,
    )


def _emit(table: MetricsTable, args) -> None:
    sys.stdout.write(report(table, "text"))
    if getattr(args, "out", None):
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report(table, "csv"), encoding="utf-8")
        _write_provenance(out.parent, args, [out])


# --- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    anns = generate_synthetic(args.tasks, args.subjects, args.takes, seed=args.seed)
    written = []
    if args.annotations:
        ann_dir = out / "annotations"
        ann_dir.mkdir(exist_ok=True)
        for a in anns:
            path = ann_dir / f"{a.task}__{a.subject}__{a.take:02d}.json"
            path.write_text(json.dumps(a.to_document()) + "\n", encoding="utf-8")
    g = ingest_annotations(anns, AssociationPolicy(args.min_overlap))
    write_triples(g, out / "graph.tsv")
    written += [out / "graph.tsv", out / "graph.nodes.tsv"]
    _write_provenance(out, args, written)
    logger.info("wrote %d recordings, %d nodes, %d triples to %s", len(anns), g.node_count, g.edge_count, out)
    return EXIT_OK


def cmd_ingest(args) -> int:
    out = Path(args.out)
    anns = load_annotation_files(args.inputs)
    g = ingest_annotations(anns, AssociationPolicy(args.min_overlap))
    problems = validate(g, _vocab(args))
    for v in problems:
        logger.warning("validation: %s", v)
    out.mkdir(parents=True, exist_ok=True)
    write_triples(g, out / "graph.tsv")
    _write_provenance(out, args, [out / "graph.tsv", out / "graph.nodes.tsv"])
    logger.info("ingested %d recordings: %d nodes, %d triples", len(anns), g.node_count, g.edge_count)
    return EXIT_OK


def cmd_stats(args) -> int:
    s = compute_stats(read_triples(args.graph))
    sys.stdout.write(format_csv(s) if args.csv else format_text(s))
    return EXIT_OK


def cmd_split(args) -> int:
    g = read_triples(args.graph)
    sp = apply_manifest(g, read_manifest(args.manifest)) if args.manifest else split_by_take(g, args.test_takes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(sp.manifest, out / "split.tsv")
    write_triples(sp.train, out / "train.tsv")
    test = g.subgraph(sp.test_graph_keys)
    write_triples(test, out / "test.tsv")
    files = [out / n for n in ("split.tsv", "train.tsv", "train.nodes.tsv", "test.tsv", "test.nodes.tsv")]
    _write_provenance(out, args, files)
    print(f"train: {sp.train.node_count} nodes, {sp.train.edge_count} triples")
    print(f"test: {len(sp.test_components)} components, {test.node_count} nodes, {test.edge_count} triples")
    return EXIT_OK


def cmd_baseline(args) -> int:
    _, sp = _load_split(args)
    vocab = _vocab(args)
    parents, nexts = build_queries(sp.test_components, vocab)
    if args.task == "parent":
        table = fit_parent(sp.train, args.variant)
        pred = BaselinePredictor(table, None, vocab, name=args.variant)
        queries = parents
    else:
        table = fit_next(sp.train, args.variant)
        pred = BaselinePredictor(None, table, vocab, name=args.variant)
        queries = nexts
    if args.table_out:
        path = Path(args.table_out)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_table(table, path)
        _write_provenance(path.parent, args, [path])
    _emit(evaluate(pred, queries, args.task, args.threads), args)
    return EXIT_OK


def cmd_train(args) -> int:
    _, sp = _load_split(args)
    cfg = _embedding_config(args)
    model = train(label_projection(sp.train), cfg, _vocab(args))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out)
    _write_provenance(out.parent, args, [out])
    logger.info("trained %s: final epoch loss %.6f", cfg.model, model.loss_trace[-1] if model.loss_trace else float("nan"))
    return EXIT_OK


def _llm_predictor(args, sp: Split, vocab: Vocabulary) -> LLMPredictor:
    cfg = _prompt_config(args)
    transport = MockTransport.from_file(args.mock) if args.mock else HttpTransport(cfg.endpoint)
    train_fit_p = fit_parent(sp.train, B1)
    train_fit_n = fit_next(sp.train, B1)
    return LLMPredictor(
        transport,
        list(sp.train.components().values()),
        cfg,
        vocab,
        parent_order=[label for label, _ in ranked(train_fit_p.fallback)],
        next_order=[label for label, _ in ranked(train_fit_n.fallback)],
    )


def cmd_evaluate(args) -> int:
    _, sp = _load_split(args)
    vocab = _vocab(args)
    parents, nexts = build_queries(sp.test_components, vocab)
    queries = parents if args.task == "parent" else nexts
    if args.bootstrap:
        queries = bootstrap(queries, args.bootstrap, args.seed)
    name = args.predictor
    if name == "random":
        pred = RandomPredictor(args.seed)
    elif name in (B1, B2):
        pred = BaselinePredictor(fit_parent(sp.train, name), fit_next(sp.train, name), vocab, name=name)
    elif name == "llm":
        pred = _llm_predictor(args, sp, vocab)
    else:
        if args.checkpoint:
            model = load_checkpoint(args.checkpoint)
            if model.config.model != name:
                raise UsageError(f"checkpoint holds {model.config.model}, not {name}")
        else:
            model = train(label_projection(sp.train), _embedding_config(args, name), vocab)
        pred = EmbeddingPredictor(model)
    table = evaluate(pred, queries, args.task, args.threads)
    if name == "llm" and pred.failures:
        logger.warning("%d unparseable answers scored as misses", len(pred.failures))
    _emit(table, args)
    return EXIT_OK


def cmd_llm_eval(args) -> int:
    _, sp = _load_split(args)
    vocab = _vocab(args)
    parents, nexts = build_queries(sp.test_components, vocab)
    queries = parents if args.task == "parent" else nexts
    pred = _llm_predictor(args, sp, vocab)
    threads = max(args.threads, pred.cfg.max_in_flight)
    table = evaluate(pred, queries, args.task, threads)
    if pred.failures:
        logger.warning("%d unparseable answers scored as misses", len(pred.failures))
    _emit(table, args)
    return EXIT_OK


def cmd_report(args) -> int:
    table = MetricsTable()
    for path in args.inputs:
        table.extend(parse_csv(Path(path).read_text(encoding="utf-8")))
    sys.stdout.write(report(table, args.format))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "split": cmd_split,
    "baseline": cmd_baseline,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "llm-eval": cmd_llm_eval,
    "report": cmd_report,
}


def _setup_logging(level: str) -> None:
    root = logging.getLogger()
    for h in list(root.handlers):
        if getattr(h, "_sitkg", False):
            root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler._sitkg = True  # type: ignore[attr-defined]
    handler.setFormatter(logging.Formatter("%(asctime)s level=%(levelname)s logger=%(name)s msg=%(message)s"))
    root.addHandler(handler)
    root.setLevel(level.upper())


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    try:
        if known.config:
            _apply_config(parser, _read_config(known.config))
    except (OSError, UsageError) as exc:
        print(f"sitkg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _setup_logging(args.log_level)
    except ValueError:
        print(f"sitkg: error: bad log level {args.log_level!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

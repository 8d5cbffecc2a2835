"""Command-line surface: parse, link, train, generate, eval.

Exit codes: 0 success, 1 io error, 2 validation error, 3 pipeline or
endpoint failure. Machine-readable output is byte-stable for a fixed seed
(timing fields excluded).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .decomposer import decompose, map_nodes, parse_rules
from .errors import (
    ComponentError,
    EndpointError,
    EvaluationError,
    PipelineStageError,
    StructSqlError,
    ValidationError,
)
from .evaluation import (
    Difficulty,
    EvalConfig,
    evaluate,
    load_dataset,
    load_predictions,
    resolve_db_path,
)
from .generation import make_endpoint, run_pipeline
from .linker import (
    LinkExample,
    TrainConfig,
    link,
    linking_accuracy,
    load_model,
    save_model,
    train_linker,
)
from .question import (
    build_query_graph,
    default_grammar,
    parse,
    parse_grammar,
    resolve_coreference,
    select_interpretation,
    tokenize,
)
from .schema_graph import build_schema_graph, load_spider_catalog, load_spider_catalogs

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="structsql",
        description="Structure-guided text-to-SQL: parse questions, link them "
        "to schemas, train the linker, generate SQL, and evaluate predictions.",
    )
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--seed", type=int, help="override linker seed")
    parser.add_argument("--format", choices=["text", "json", "tsv"], help="output format")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="print the query graph and syntax tree")
    p.add_argument("question")
    p.add_argument("--grammar", help="grammar file overriding the built-in one")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("link", help="link a question to a database schema")
    p.add_argument("question")
    p.add_argument("--db", required=True, help="db_id in the catalog")
    p.add_argument("--catalog", help="Spider-style tables.json")
    p.add_argument("--model", help="linker model file")
    p.add_argument("--no-model", action="store_true", help="force the string-match fallback")
    p.add_argument("--db-file", help="SQLite file for value-match probing")
    p.add_argument("-k", type=int, default=None, help="candidates per anchor")
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("train", help="train the linker on a mention dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--catalog", help="Spider-style tables.json")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("-k", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="translate question(s) to SQL")
    p.add_argument("question", nargs="?", help="single question (omit with --dataset)")
    p.add_argument("--db", help="db_id (single-question mode)")
    p.add_argument("--catalog", help="Spider-style tables.json")
    p.add_argument("--db-root", help="directory of SQLite files")
    p.add_argument("--dataset", help="batch mode: dataset file with questions")
    p.add_argument("--predictions", help="batch mode: output JSONL path")
    p.add_argument("--endpoint-mode", help="http | mock:echo | mock:oracle | mock:canned")
    p.add_argument("--model", help="linker model file")
    p.add_argument("--no-model", action="store_true")
    p.add_argument("--trace", help="write the pipeline trace JSON here")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score predictions against gold SQL")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--db-root", required=True)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--timeout", type=float)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.linker.seed = args.seed
        return args.func(args, cfg)
    except (ValidationError, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    except (PipelineStageError, EndpointError, ComponentError) as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 3
    except StructSqlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


# --------------------------------------------------------------------------
# Command implementations
# --------------------------------------------------------------------------


def _load_grammar(args, cfg: RunConfig):
    path = getattr(args, "grammar", None) or cfg.paths.grammar
    if path:
        return parse_grammar(Path(path).read_text(encoding="utf-8"))
    return default_grammar()


def _load_schema(args, cfg: RunConfig, db_id: str):
    catalog_path = getattr(args, "catalog", None) or cfg.paths.catalog
    if not catalog_path:
        raise ValidationError("no catalog file given (use --catalog or config paths.catalog)")
    data = Path(catalog_path).read_bytes()
    catalog = load_spider_catalog(data, db_id)
    return build_schema_graph(catalog)


def _analyze(question: str, grammar):
    tokens = tokenize(question)
    interpretations = parse(tokens, grammar)
    best = select_interpretation(interpretations)
    coref = resolve_coreference(tokens, best.tree)
    qg = build_query_graph(tokens, best.tree, coref)
    return tokens, interpretations, best, qg


def _render_tree(tree, tokens) -> str:
    lines = []

    def walk(node_id: int, depth: int):
        node = tree.node(node_id)
        label = node.symbol
        if node.is_terminal and node.span[1] > node.span[0]:
            label += f" {tokens[node.span[0]].surface!r}"
        lines.append("  " * depth + label)
        for child in node.children:
            walk(child, depth + 1)

    walk(tree.root_id, 0)
    return "\n".join(lines)


def cmd_parse(args, cfg: RunConfig) -> int:
    grammar = _load_grammar(args, cfg)
    tokens, interpretations, best, qg = _analyze(args.question, grammar)
    fmt = args.format or cfg.eval.format
    if fmt == "json":
        payload = {
            "tokens": [t.surface for t in tokens],
            "lemmas": [t.lemma for t in tokens],
            "n_interpretations": len(interpretations),
            "fallback": best.tree.fallback,
            "tree": [
                {
                    "id": n.node_id,
                    "symbol": n.symbol,
                    "span": list(n.span),
                    "children": list(n.children),
                }
                for n in best.tree.nodes
            ],
            "edges": [
                {"source": e.source, "target": e.target, "relation": e.relation.value}
                for e in qg.edges
            ],
            "coref_entities": [list(span) for span in qg.coref.entities],
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(f"tokens: {' '.join(t.surface for t in tokens)}")
        print(f"interpretations: {len(interpretations)} (fallback={best.tree.fallback})")
        print(_render_tree(best.tree, tokens))
        print("edges:")
        for e in qg.edges:
            print(f"  {e.source} -> {e.target} [{e.relation.value}]")
    return 0


def cmd_link(args, cfg: RunConfig) -> int:
    sg = _load_schema(args, cfg, args.db)
    grammar = _load_grammar(args, cfg)
    tokens, _interps, best, qg = _analyze(args.question, grammar)
    model = None
    model_path = args.model or cfg.paths.model
    if model_path and not args.no_model:
        model = load_model(model_path)
    k = args.k or cfg.linker.k
    result = link(qg, sg, model=model, k=k, db_path=args.db_file)
    fmt = args.format or cfg.eval.format
    if fmt == "json":
        payload = {
            "model": bool(model),
            "assignments": [
                {
                    "query_node": a.query_node,
                    "token": tokens[a.query_node].surface,
                    "schema_node": a.schema_node,
                    "label": sg.nodes[a.schema_node].label,
                    "score": round(a.score, 6),
                }
                for a in result.assignments
            ],
            "predefined": [
                {
                    "query_node": t.query_node,
                    "schema_node": t.schema_node,
                    "relation": t.relation.value,
                }
                for t in result.predefined_relations
            ],
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        scorer = "model" if model else "string fallback"
        print(f"scorer: {scorer}")
        for a in result.assignments:
            print(
                f"  {tokens[a.query_node].surface!r} -> "
                f"{sg.nodes[a.schema_node].label} (score {a.score:.4f})"
            )
        for t in result.predefined_relations:
            print(
                f"  {tokens[t.query_node].surface!r} ~ "
                f"{sg.nodes[t.schema_node].label} [{t.relation.value}]"
            )
    return 0


def _load_train_examples(path: str, args, cfg: RunConfig, grammar):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, list) or not doc:
        raise ValidationError("training dataset must be a non-empty JSON array")
    schemas: dict[str, object] = {}
    examples = []
    for entry in doc:
        db_id = entry["db_id"]
        if db_id not in schemas:
            schemas[db_id] = _load_schema(args, cfg, db_id)
        sg = schemas[db_id]
        tokens = tokenize(entry["question"])
        best = select_interpretation(parse(tokens, grammar))
        qg = build_query_graph(
            tokens, best.tree, resolve_coreference(tokens, best.tree)
        )
        anchor = entry["anchor"]
        if isinstance(anchor, str):
            matches = [t.position for t in tokens if t.lemma == anchor or t.surface.lower() == anchor.lower()]
            if not matches:
                raise ValidationError(
                    f"anchor {anchor!r} not found in question {entry['question']!r}"
                )
            anchor = matches[0]
        gold = entry["gold"]
        if "." in gold:
            table, column = gold.split(".", 1)
            node = sg.node_for_column(table, column)
        else:
            node = sg.node_for_table(gold)
        if node is None:
            raise ValidationError(f"gold element {gold!r} not in schema {db_id}")
        examples.append((LinkExample(query_graph=qg, anchor=anchor, gold=node.node_id), sg))
    db_ids = {entry["db_id"] for entry in doc}
    if len(db_ids) > 1:
        raise ValidationError("training dataset must target a single db_id")
    return [e for e, _ in examples], examples[0][1]


def cmd_train(args, cfg: RunConfig) -> int:
    grammar = _load_grammar(args, cfg)
    examples, sg = _load_train_examples(args.dataset, args, cfg, grammar)
    tc = TrainConfig(
        epochs=args.epochs if args.epochs is not None else cfg.linker.epochs,
        lr=args.lr if args.lr is not None else cfg.linker.lr,
        k=args.k if args.k is not None else cfg.linker.k,
        dim=args.dim if args.dim is not None else cfg.linker.dim,
        layers=cfg.linker.layers,
        buckets=cfg.linker.buckets,
        seed=cfg.linker.seed,
    )
    result = train_linker(examples, sg, tc)
    for epoch, loss in enumerate(result.epoch_losses):
        print(f"epoch {epoch} loss {loss:.6f}")
    accuracy = linking_accuracy(result.model, examples, sg, k=tc.k)
    print(f"trained {result.trained} examples, skipped {result.skipped}")
    print(f"top-1 linking accuracy {accuracy:.4f}")
    save_model(result.model, args.out)
    print(f"model written to {args.out}")
    return 0


def _build_endpoint(args, cfg: RunConfig, dataset_path: str | None):
    mode = args.endpoint_mode or cfg.endpoint.mode
    gold_by_question = {}
    if mode == "mock:oracle":
        source = dataset_path or args.dataset
        if not source:
            raise ValidationError("mock:oracle needs --dataset for gold components")
        for record in load_dataset(source):
            gold_by_question[record.question] = record.gold_sql
    return make_endpoint(
        mode,
        base_url=cfg.endpoint.base_url,
        model=cfg.endpoint.model,
        gold_by_question=gold_by_question,
    )


def cmd_generate(args, cfg: RunConfig) -> int:
    grammar = _load_grammar(args, cfg)
    rules = None
    if cfg.paths.rules:
        rules = parse_rules(Path(cfg.paths.rules).read_text(encoding="utf-8"))
    model = None
    model_path = args.model or cfg.paths.model
    if model_path and not args.no_model:
        model = load_model(model_path)
    endpoint = _build_endpoint(args, cfg, args.dataset)
    db_root = args.db_root or cfg.paths.db_root

    if args.dataset and not args.question:
        if not args.predictions:
            raise ValidationError("batch generate needs --predictions OUT")
        records = load_dataset(args.dataset)
        lines = []
        failures = 0
        for record in records:
            sg = _load_schema(args, cfg, record.db_id)
            db_path = resolve_db_path(db_root, record.db_id) if db_root else None
            try:
                result = run_pipeline(
                    record.question,
                    sg,
                    endpoint,
                    linker_model=model,
                    grammar=grammar,
                    rules=rules,
                    db_path=db_path,
                    k=cfg.linker.k,
                    endpoint_model=cfg.endpoint.model,
                    max_tokens=cfg.endpoint.max_tokens,
                )
                sql = result.sql
            except (PipelineStageError, EndpointError, ComponentError) as exc:
                logger.warning("question %r failed: %s", record.question, exc)
                sql = ""
                failures += 1
            lines.append(json.dumps({"id": record.example_id, "sql": sql}, sort_keys=True))
        Path(args.predictions).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {len(lines)} predictions ({failures} failures) to {args.predictions}")
        return 0 if failures < len(lines) else 3

    if not args.question or not args.db:
        raise ValidationError("single-question generate needs QUESTION and --db")
    sg = _load_schema(args, cfg, args.db)
    db_path = resolve_db_path(db_root, args.db) if db_root else None
    result = run_pipeline(
        args.question,
        sg,
        endpoint,
        linker_model=model,
        grammar=grammar,
        rules=rules,
        db_path=db_path,
        k=cfg.linker.k,
        endpoint_model=cfg.endpoint.model,
        max_tokens=cfg.endpoint.max_tokens,
    )
    if args.trace:
        Path(args.trace).write_text(result.trace.to_json() + "\n", encoding="utf-8")
    print(result.sql)
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    examples = load_dataset(args.dataset)
    predictions = load_predictions(args.predictions)
    eval_cfg = EvalConfig(
        timeout_s=args.timeout if args.timeout is not None else cfg.eval.timeout_s,
        timing_runs=cfg.eval.timing_runs,
        jobs=args.jobs,
    )
    report = evaluate(examples, predictions, args.db_root, eval_cfg)
    fmt = args.format or cfg.eval.format
    if fmt == "tsv":
        output = report.to_tsv()
    elif fmt == "json":
        output = report.to_json()
    else:
        output = report.to_tsv()
    if args.out:
        Path(args.out).write_text(output + "\n", encoding="utf-8")
    else:
        print(output)
    all_failed = all(r.error is not None for r in report.records)
    return 1 if all_failed and report.records else 0


if __name__ == "__main__":
    sys.exit(main())

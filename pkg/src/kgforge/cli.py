"""Command-line interface: ingest, mine, review-queue and serve.

Exit codes: 0 success, 1 usage error, 2 runtime error.  Every randomized
stage takes --seed, and stdout for a fixed command line and seed is
byte-identical across runs.  Flat `key = value` config files supply
defaults (--config flag, KGFORGE_CONFIG fallback).
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import apps
from . import phrase_mining as pm
from . import pipelines as pl
from . import relation_extraction as rx
from .corpus import Lexicon, count_ngrams, export_stats, ingest, read_documents_jsonl
from .kg_store import KnowledgeGraph
from .sequence_tagger import DictionaryTagger
from .service import ServiceConfig, serve


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def load_config(args) -> dict[str, str]:
    path = getattr(args, "config", None) or os.environ.get("KGFORGE_CONFIG")
    if path:
        return read_config_file(path)
    return {}


def cfg_get(args, config: dict[str, str], key: str, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def read_lexicon(path: str) -> Lexicon:
    with open(path, encoding="utf-8") as f:
        return Lexicon({line.strip() for line in f if line.strip()})


def mining_config(args, config: dict[str, str]) -> pm.MiningConfig:
    values = {}
    for key, cast in (
        ("min_count", int), ("max_phrase_len", int), ("rf_threshold", float),
        ("rf_trees", int), ("rf_k", int), ("rf_depth", int), ("seg_floor", float),
        ("mlm_top_n", int), ("seed", int), ("rectified_min_count", int),
    ):
        raw = cfg_get(args, config, key)
        if raw is not None:
            values[key] = cast(raw)
    return pm.MiningConfig(**values)


def load_kg(path: str) -> KnowledgeGraph:
    if os.path.exists(path):
        return KnowledgeGraph.load(path)
    return KnowledgeGraph()


def load_queue(path: str) -> pl.AnnotationQueue:
    if os.path.exists(path):
        return pl.AnnotationQueue.load(path)
    return pl.AnnotationQueue()


def emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True, ensure_ascii=False))


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(args, config):
    docs = read_documents_jsonl(args.input)
    corpus = ingest(docs)
    table = count_ngrams(corpus, args.max_n)
    if args.stats_out:
        export_stats(table, args.stats_out)
    emit({"documents": corpus.n_docs, "sentences": len(corpus),
          "tokens": corpus.token_count(), "stats_out": args.stats_out})
    return 0


def cmd_mine_phrases(args, config):
    docs = read_documents_jsonl(args.input)
    corpus = ingest(docs)
    lexicon = read_lexicon(args.lexicon)
    outcome = pm.mine(corpus, lexicon, mining_config(args, config))
    with open(args.output, "w", encoding="utf-8") as f:
        for c in sorted(outcome.candidates, key=lambda c: c.tokens):
            f.write(json.dumps({
                "tokens": list(c.tokens), "frequency": c.frequency,
                "rectified_frequency": c.rectified_frequency,
                "quality": c.quality, "status": c.status,
            }, sort_keys=True, ensure_ascii=False) + "\n")
    emit(outcome.stage_counts())
    return 0


def _phrase_pipeline_config(args, config) -> pl.PhrasePipelineConfig:
    cfg = pl.PhrasePipelineConfig(mining=mining_config(args, config))
    threshold = cfg_get(args, config, "queue_threshold")
    if threshold is not None:
        cfg.queue_threshold = float(threshold)
    auto_at = cfg_get(args, config, "auto_accept_at")
    if auto_at is not None:
        cfg.auto_accept_at = float(auto_at)
    return cfg


def _run_phrase_pipeline(args, config, runner):
    docs = read_documents_jsonl(args.input)
    corpus = ingest(docs)
    lexicon = read_lexicon(args.lexicon)
    kg = load_kg(args.kg)
    queue = load_queue(args.queue)
    labeler = (lambda task: "accept") if args.auto_accept else None
    written = runner(corpus, kg, queue, lexicon, _phrase_pipeline_config(args, config),
                     auto_labeler=labeler)
    kg.persist(args.kg)
    queue.save(args.queue)
    emit({"queued": len(queue.tasks), "written": len(written)})
    return 0


def cmd_mine_poi(args, config):
    return _run_phrase_pipeline(args, config, pl.poi_pipeline)


def cmd_mine_problems(args, config):
    return _run_phrase_pipeline(args, config, pl.problem_pipeline)


def cmd_mine_ipv(args, config):
    kg = load_kg(args.kg)
    tagger = DictionaryTagger(kg.typed_value_dictionary())
    pairs = []
    with open(args.qa, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                data = json.loads(line)
                pairs.append(pl.QAPair(
                    question=data["question"], answer=data["answer"],
                    item_id=data.get("item_id"),
                ))
    written = pl.ipv_pipeline(pairs, tagger, kg, pl.IPVPipelineConfig(min_freq=args.min_freq))
    kg.persist(args.kg)
    emit({"pairs": len(pairs), "written": len(written)})
    return 0


def cmd_mine_relations(args, config):
    docs = read_documents_jsonl(args.input)
    corpus = ingest(docs)
    kg = load_kg(args.kg)
    queue = load_queue(args.queue)
    tagger = DictionaryTagger(kg.typed_value_dictionary())
    if args.pois:
        pois = read_lexicon(args.pois)
    else:
        pois = Lexicon(set(kg.surfaces_of_kind("POI")) or {"<none>"})
    classifier = (rx.RelationClassifier.load(args.classifier)
                  if args.classifier else rx.RelationClassifier(seed=args.seed or 0))
    labeler = (lambda task: "accept") if args.auto_accept else None
    written = pl.relation_pipeline(
        corpus, kg, tagger, pois, classifier, queue,
        pl.RelationPipelineConfig(relation=args.relation, queue_threshold=args.queue_threshold),
        auto_labeler=labeler,
    )
    kg.persist(args.kg)
    queue.save(args.queue)
    emit({"queued": len(queue.tasks), "written": len(written)})
    return 0


def cmd_queue(args, config):
    queue = load_queue(args.queue)
    if args.queue_action == "export":
        n = pl.queue_export(queue, args.out, kind=args.kind, status=args.status,
                            sample_rate=args.sample_rate, seed=args.seed or 0)
        emit({"exported": n})
    else:  # import
        applied, errors = pl.queue_import(queue, args.labels)
        queue.save(args.queue)
        for err in errors:
            print(f"error: {err}", file=sys.stderr)
        emit({"applied": applied, "errors": len(errors)})
    return 0


def cmd_kg(args, config):
    kg = load_kg(args.kg)
    if args.kg_action == "import":
        counts = kg.import_catalog([args.catalog])
        kg.persist(args.kg)
        emit(counts)
    elif args.kg_action == "export":
        kg.persist(args.out)
        emit({"exported": args.out})
    elif args.kg_action == "stats":
        emit(kg.stats())
    elif args.kg_action == "inherit":
        derived = kg.inherit()
        kg.persist(args.kg)
        emit({"derived": len(derived)})
    elif args.kg_action == "index":
        index = kg.build_inverted_index()
        lines = [f"{poi}\t{','.join(items)}" for poi, items in sorted(index.mapping.items())]
        if args.out:
            with open(args.out, "w", encoding="utf-8") as f:
                f.write("\n".join(lines) + ("\n" if lines else ""))
            emit({"pois": len(lines), "out": args.out})
        else:
            for line in lines:
                print(line)
    return 0


def cmd_rewrite(args, config):
    kg = load_kg(args.kg)
    result = apps.rewrite_query(args.utterance, kg)
    emit({
        "detected_problems": result.detected_problems,
        "pois": result.pois,
        "category_hint": result.category_hint,
        "rewritten_query": result.rewritten_query,
    })
    return 0


def cmd_qa(args, config):
    kg = load_kg(args.kg)
    tagger = DictionaryTagger(kg.typed_value_dictionary())
    answer = apps.answer_property_question(args.question, args.item, tagger, kg)
    emit({
        "queried_property": answer.queried_property,
        "matched_values": answer.matched_values,
        "verdict": answer.verdict,
        "answer_text": answer.answer_text,
    })
    return 0


def cmd_reason(args, config):
    kg = load_kg(args.kg)
    templates = apps.TemplateSet.from_file(args.templates) if args.templates else None
    reason = apps.generate_reason(args.item, kg, templates)
    category, value, prop, pois = reason.slots
    emit({
        "item": reason.item,
        "slots": {"category": category, "value": value, "property": prop, "pois": list(pois)},
        "text": reason.text,
    })
    return 0


def cmd_serve(args, config):
    kg_path = cfg_get(args, config, "kg")
    queue_path = cfg_get(args, config, "queue")
    if not kg_path or not queue_path:
        print("error: serve needs --kg and --queue (flags or config file)", file=sys.stderr)
        return 1
    service_config = ServiceConfig(
        kg_path=kg_path,
        queue_path=queue_path,
        listen_address=cfg_get(args, config, "listen", "127.0.0.1:8776"),
        auth_token=cfg_get(args, config, "auth_token"),
        static_dir=cfg_get(args, config, "static_dir"),
    )
    serve(service_config)
    return 0


# --------------------------------------------------------------------------
# argument wiring


def build_parser() -> Parser:
    parser = Parser(prog="kgforge", description=__doc__)
    parser.add_argument("--config", help="flat key = value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        return p

    p = add("ingest", cmd_ingest, help="tokenize documents and export n-gram statistics")
    p.add_argument("--input", required=True)
    p.add_argument("--max-n", type=int, default=3, dest="max_n")
    p.add_argument("--stats-out", dest="stats_out")

    def mining_args(p):
        p.add_argument("--seed", type=int)
        for key in ("min_count", "max_phrase_len", "rf_trees", "rf_k", "rf_depth",
                    "mlm_top_n", "rectified_min_count"):
            p.add_argument(f"--{key.replace('_', '-')}", type=int, dest=key)
        for key in ("rf_threshold", "seg_floor"):
            p.add_argument(f"--{key.replace('_', '-')}", type=float, dest=key)

    p = add("mine-phrases", cmd_mine_phrases, help="run quality phrase mining")
    p.add_argument("--input", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--output", required=True)
    mining_args(p)

    for name, fn in (("mine-poi", cmd_mine_poi), ("mine-problems", cmd_mine_problems)):
        p = add(name, fn, help=f"{name.replace('-', ' ')} into the queue and KG")
        p.add_argument("--input", required=True)
        p.add_argument("--lexicon", required=True)
        p.add_argument("--kg", required=True)
        p.add_argument("--queue", required=True)
        p.add_argument("--auto-accept", action="store_true", dest="auto_accept")
        p.add_argument("--queue-threshold", type=float, dest="queue_threshold")
        p.add_argument("--auto-accept-at", type=float, dest="auto_accept_at")
        mining_args(p)

    p = add("mine-ipv", cmd_mine_ipv, help="mine item property values from QA pairs")
    p.add_argument("--qa", required=True)
    p.add_argument("--kg", required=True)
    p.add_argument("--min-freq", type=int, default=3, dest="min_freq")

    p = add("mine-relations", cmd_mine_relations, help="mine cause/need candidates")
    p.add_argument("--input", required=True)
    p.add_argument("--kg", required=True)
    p.add_argument("--queue", required=True)
    p.add_argument("--relation", choices=("cause", "need"), default="cause")
    p.add_argument("--pois", help="POI lexicon file; defaults to stored POI surfaces")
    p.add_argument("--classifier", help="trained relation classifier file")
    p.add_argument("--queue-threshold", type=float, default=0.0, dest="queue_threshold")
    p.add_argument("--auto-accept", action="store_true", dest="auto_accept")
    p.add_argument("--seed", type=int)

    p = add("queue", cmd_queue, help="export tasks or import labels")
    qsub = p.add_subparsers(dest="queue_action", required=True)
    pe = qsub.add_parser("export")
    pe.add_argument("--queue", required=True)
    pe.add_argument("--out", required=True)
    pe.add_argument("--kind")
    pe.add_argument("--status")
    pe.add_argument("--sample-rate", type=float, dest="sample_rate")
    pe.add_argument("--seed", type=int)
    pe.set_defaults(fn=cmd_queue)
    pi = qsub.add_parser("import")
    pi.add_argument("--queue", required=True)
    pi.add_argument("--labels", required=True)
    pi.set_defaults(fn=cmd_queue)

    p = add("kg", cmd_kg, help="import/export/stats/inherit/index")
    ksub = p.add_subparsers(dest="kg_action", required=True)
    for action in ("import", "export", "stats", "inherit", "index"):
        pk = ksub.add_parser(action)
        pk.add_argument("--kg", required=True)
        if action == "import":
            pk.add_argument("--catalog", required=True)
        if action == "export":
            pk.add_argument("--out", required=True)
        if action == "index":
            pk.add_argument("--out")
        pk.set_defaults(fn=cmd_kg)

    p = add("rewrite", cmd_rewrite, help="rewrite an utterance into POI keywords")
    p.add_argument("--kg", required=True)
    p.add_argument("--utterance", required=True)

    p = add("qa", cmd_qa, help="answer a property question about an item")
    p.add_argument("--kg", required=True)
    p.add_argument("--item", required=True)
    p.add_argument("--question", required=True)

    p = add("reason", cmd_reason, help="generate a recommendation reason")
    p.add_argument("--kg", required=True)
    p.add_argument("--item", required=True)
    p.add_argument("--templates")

    p = add("serve", cmd_serve, help="run the HTTP service")
    p.add_argument("--kg")
    p.add_argument("--queue")
    p.add_argument("--listen")
    p.add_argument("--auth-token", dest="auth_token")
    p.add_argument("--static-dir", dest="static_dir")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    config = {}
    try:
        config = load_config(args)
        return args.fn(args, config)
    except KeyboardInterrupt:
        return 2
    except Exception as e:  # runtime failures are exit code 2
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

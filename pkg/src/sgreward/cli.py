"""Command-line front end.

Subcommands:

    score      completions + ground truth -> reward breakdowns (JSONL)
    eval       completions + ground truth -> evaluation report (JSON)
    filter     candidate relations -> retained (JSONL) + drop log (JSONL)
    build-cot  ground truth (+ retained candidates) -> CoT records (JSONL)
    stats      ground truth -> corpus statistics (JSON)
    serve      start the HTTP service

Flags override the optional JSON config file, which overrides built-in
defaults. Outputs are deterministic: rerunning a command on identical inputs
writes byte-identical artifacts, and every output document embeds the
resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .augment import FilterConfig, build_sft_record, corpus_stats, filter_candidates
from .embeddings import EmbeddingSource, EmbeddingTable, RemoteEmbeddingProvider
from .errors import EngineError
from .evaluation import EvalConfig, aggregate, evaluate_scene, partition_predicates
from .parsing import parse_completion
from .rewards import RewardConfig
from .scoring import SCHEMA_VERSION, score_batch
from .store import GroundTruthStore, load_candidates, load_completions, load_graphs


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _embedding_source(args, file_cfg: dict) -> EmbeddingSource:
    table = args.embeddings or file_cfg.get("embeddings")
    url = args.provider_url or file_cfg.get("provider_url")
    if table and url:
        raise EngineError("give either an embedding table or a provider URL, not both")
    if table:
        return EmbeddingTable.load(table)
    if url:
        return RemoteEmbeddingProvider(url)
    raise EngineError("an embedding table (--embeddings) or provider URL is required")


def _reward_config(args, file_cfg: dict) -> RewardConfig:
    doc = dict(file_cfg.get("reward", {}))
    if getattr(args, "tau", None) is not None:
        doc["tau"] = args.tau
    return RewardConfig.from_dict(doc)


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_jsonl(path, rows) -> None:
    with Path(path).open("w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def cmd_score(args) -> int:
    file_cfg = _load_config_file(args.config)
    store = GroundTruthStore.load(args.profile, args.gt)
    source = _embedding_source(args, file_cfg)
    cfg = _reward_config(args, file_cfg)
    items = load_completions(args.completions)
    response = score_batch(items, store, cfg, source, workers=args.workers)
    _write_jsonl(args.out, response["items"])
    _write_json(args.summary_out, {
        "schema_version": SCHEMA_VERSION,
        "config": response["config"],
        "summary": response["summary"],
    })
    return 0


def cmd_eval(args) -> int:
    store = GroundTruthStore.load(args.profile, args.gt)
    items = load_completions(args.completions)
    eval_cfg = EvalConfig(iou_threshold=args.iou_threshold, top_k=args.top_k)
    tallies = []
    for item in items:
        gt = store.get(str(item["image_id"]))
        parsed = parse_completion(item["text"], store.profile, gt.width, gt.height)
        tallies.append(evaluate_scene(gt, parsed.graph, store.profile, eval_cfg))
    partition = partition_predicates(store.profile)
    report = aggregate(tallies, store.profile, partition)
    _write_json(args.out, {
        "schema_version": SCHEMA_VERSION,
        "config": {"iou_threshold": args.iou_threshold, "top_k": args.top_k,
                   "partition": partition.to_dict()},
        "report": report.to_dict(),
    })
    return 0


def cmd_filter(args) -> int:
    file_cfg = _load_config_file(args.config)
    store = GroundTruthStore.load(args.profile, args.gt)
    source = _embedding_source(args, file_cfg)
    theta = args.theta if args.theta is not None else file_cfg.get("theta", 0.80)
    cfg = FilterConfig(theta=theta)
    candidates = load_candidates(args.candidates)

    by_image: dict[str, list] = {}
    for c in candidates:
        by_image.setdefault(c.image_id, []).append(c)

    retained_rows, drop_rows = [], []
    for image_id in sorted(by_image):
        gt = store.get(image_id)
        retained, dropped = filter_candidates(by_image[image_id], gt, cfg, source,
                                              store.profile)
        retained_rows.extend(
            {"image_id": c.image_id, "subject": c.subject, "predicate": c.predicate,
             "object": c.object, "provenance": c.provenance}
            for c in retained)
        drop_rows.extend(d.to_dict() for d in dropped)

    _write_jsonl(args.out, retained_rows)
    _write_jsonl(args.drop_log, drop_rows)
    _write_json(args.summary_out, {
        "schema_version": SCHEMA_VERSION,
        "config": {"theta": theta},
        "summary": {"input": len(candidates), "retained": len(retained_rows),
                    "dropped": len(drop_rows)},
    })
    return 0


def cmd_build_cot(args) -> int:
    store = GroundTruthStore.load(args.profile, args.gt)
    retained_by_image: dict[str, list] = {}
    if args.retained:
        for c in load_candidates(args.retained):
            retained_by_image.setdefault(c.image_id, []).append(c)

    rows = []
    for image_id in sorted(store.graphs):
        record = build_sft_record(store.graphs[image_id],
                                  retained_by_image.get(image_id, []), store.profile)
        rows.append({"prompt_ref": record.prompt_ref, "response": record.response_text})
    _write_jsonl(args.out, rows)
    return 0


def cmd_stats(args) -> int:
    store = GroundTruthStore.load(args.profile, args.gt)
    graphs = load_graphs(args.graphs) if args.graphs else list(store.graphs.values())
    partition = partition_predicates(store.profile)
    stats = corpus_stats(graphs, store.profile, partition)
    _write_json(args.out, {
        "schema_version": SCHEMA_VERSION,
        "config": {"partition": partition.to_dict()},
        "stats": stats,
    })
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    file_cfg = _load_config_file(args.config)
    store = GroundTruthStore.load(args.profile, args.gt)
    source = _embedding_source(args, file_cfg)
    cfg = _reward_config(args, file_cfg)
    app = build_app(store, source, cfg, max_batch=args.max_batch, workers=args.workers)
    host, _, port = args.listen.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def _add_common(parser, embeddings: bool = True):
    parser.add_argument("--profile", required=True, help="dataset profile JSON")
    parser.add_argument("--gt", required=True, help="ground-truth scene graphs (JSONL)")
    parser.add_argument("--config", default=None, help="optional JSON config file")
    if embeddings:
        parser.add_argument("--embeddings", default=None, help="embedding table (JSONL)")
        parser.add_argument("--provider-url", default=None, help="remote embedding service")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgreward", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score completions against ground truth")
    _add_common(p)
    p.add_argument("--completions", required=True)
    p.add_argument("--out", required=True, help="per-item breakdowns (JSONL)")
    p.add_argument("--summary-out", required=True, help="batch summary (JSON)")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="evaluate completions under the detection protocol")
    _add_common(p, embeddings=False)
    p.add_argument("--completions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--top-k", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("filter", help="filter candidate relations by embedding similarity")
    _add_common(p)
    p.add_argument("--candidates", required=True)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--out", required=True, help="retained candidates (JSONL)")
    p.add_argument("--drop-log", required=True)
    p.add_argument("--summary-out", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("build-cot", help="serialize training records from ground truth")
    _add_common(p, embeddings=False)
    p.add_argument("--retained", default=None, help="retained candidates to merge (JSONL)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_cot)

    p = sub.add_parser("stats", help="corpus statistics")
    _add_common(p, embeddings=False)
    p.add_argument("--graphs", default=None, help="graphs to analyze (defaults to --gt)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("serve", help="start the HTTP service")
    _add_common(p)
    p.add_argument("--listen", default="127.0.0.1:8080")
    p.add_argument("--max-batch", type=int, default=4096)
    p.add_argument("--workers", type=int, default=1, help="scoring worker processes")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EngineError as exc:
        print(json.dumps({"error": exc.to_dict()}), file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(json.dumps({"error": {"code": "BAD_INPUT", "message": str(exc)}}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

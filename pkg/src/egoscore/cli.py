"""``egoscore`` command-line interface."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from . import builder, evaluation, graph, heuristics, pipeline, synthetic
from .walkgnn import (
    OptimizerConfig,
    TrainHistory,
    WalkGNN,
    WalkGNNConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)

log = logging.getLogger("egoscore")


def load_model(spec: str):
    """A heuristic name (``aa``, ``cn``, ``waa``, ``fs``) or a WalkGNN checkpoint path."""
    if spec in heuristics.HEURISTICS:
        return heuristics.get_heuristic(spec)
    if os.path.exists(spec):
        params, cfg = load_checkpoint(spec)
        return WalkGNN(params, cfg)
    raise SystemExit(f"--model: {spec!r} is neither a known heuristic {sorted(heuristics.HEURISTICS)} "
                     "nor an existing checkpoint")


def _read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _builder_config(args) -> builder.BuilderConfig:
    return builder.BuilderConfig(
        cap=args.cap,
        bloom_bits_per_edge=args.bloom_bpe,
        include_pendants=not args.no_pendants,
        partitions=args.partitions,
        workers=args.threads,
    )


def cmd_build_egonets(args) -> int:
    g = graph.load_graph(args.graph, num_types=args.num_types)
    t0 = time.monotonic()
    count = builder.build_all_egonets(g, _builder_config(args), args.out)
    log.info("wrote %d ego-nets to %s in %.2fs", count, args.out, time.monotonic() - t0)
    print(count)
    return 0


def cmd_train(args) -> int:
    conf = _read_json(args.config) if args.config else {}
    model_conf = dict(conf.get("model", {}))
    opt_conf = dict(conf.get("optimizer", {}))
    model_conf.setdefault("seed", args.seed)
    opt_conf.setdefault("seed", args.seed)
    if args.epochs is not None:
        opt_conf["epochs"] = args.epochs
    cfg = WalkGNNConfig.from_dict(model_conf)
    opt = OptimizerConfig(**opt_conf)
    data = graph.read_egonets(args.data)
    valid = graph.read_egonets(args.valid) if args.valid else None
    history = TrainHistory()
    params = train(data, cfg, opt, valid, history=history)
    save_checkpoint(args.out, params, cfg)
    log.info("saved checkpoint to %s (best epoch %s, valid %s)", args.out, history.best_epoch, history.best_valid)
    if args.figure:
        from .plotting import learning_curve

        learning_curve(history, args.figure)
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.ckpt)
    lines = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for ls in pipeline.score_egonets(graph.iter_egonets(args.data), model, workers=args.threads):
            fh.write(f"{ls.ego} {ls.u} {ls.v} {graph.format_float(ls.score)}\n")
            lines += 1
    log.info("wrote %d pair scores to %s", lines, args.out)
    return 0


def cmd_run(args) -> int:
    g = graph.load_graph(args.graph, num_types=args.num_types)
    model = load_model(args.model)
    report = pipeline.ScoreReport()
    sugg = pipeline.run_gefs(g, model, args.agg, _builder_config(args), args.k, workers=args.threads,
                             report=report)
    n = pipeline.write_suggestions(sugg, args.out)
    log.info("scored %d ego-nets (%d failed), wrote %d suggestions for %d users",
             report.scored, report.failed, n, len(sugg))
    if args.figure:
        from .plotting import suggestion_scores

        suggestion_scores(sugg, args.figure)
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    egonets = [e for e in graph.iter_egonets(args.data) if e.ground_truth]
    report = evaluation.evaluate(model, egonets, args.bootstrap, args.seed, args.k)
    text = evaluation.format_report(report, args.model, {"bootstrap": args.bootstrap, "seed": args.seed})
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    if args.figure:
        from .plotting import ndcg_histogram

        ndcg_histogram(report, args.figure, title=f"{args.model}: {report.metric}")
    return 0


def cmd_synth(args) -> int:
    conf = _read_json(args.config) if args.config else {}
    conf.setdefault("seed", args.seed)
    if args.n_egonets is not None:
        conf["n_egonets"] = args.n_egonets
    cfg = synthetic.SyntheticConfig.from_dict(conf)
    n = graph.write_egonets(synthetic.iter_synthetic(cfg), args.out)
    log.info("wrote %d synthetic ego-nets to %s", n, args.out)
    return 0


def cmd_split(args) -> int:
    parts = evaluation.split_dataset(graph.iter_egonets(args.data), tuple(args.ratios), args.seed)
    for name, part in zip(("train", "valid", "test"), parts):
        path = f"{args.out_prefix}.{name}.egonets"
        graph.write_egonets(part, path)
        log.info("%s: %d ego-nets -> %s", name, len(part), path)
    return 0


def _add_builder_flags(p) -> None:
    p.add_argument("--cap", type=int, default=300, help="max nodes per ego-net, ego included")
    p.add_argument("--bloom-bpe", type=float, default=10.0, help="Bloom filter bits per edge")
    p.add_argument("--partitions", type=int, default=1)
    p.add_argument("--no-pendants", action="store_true", help="drop neighbors that close no triangle")
    p.add_argument("--num-types", type=int, default=graph.DEFAULT_NUM_TYPES)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="egoscore", description="Ego-net friend suggestion toolkit")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-egonets", help="materialize ego-nets from an edge list")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    _add_builder_flags(p)
    p.set_defaults(func=cmd_build_egonets)

    p = sub.add_parser("train", help="train WalkGNN on an ego-net file")
    p.add_argument("--data", required=True)
    p.add_argument("--valid")
    p.add_argument("--config", help="JSON with optional 'model' and 'optimizer' sections")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--figure", help="write a learning-curve PNG here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score every candidate pair of every ego-net")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True, help="checkpoint path or heuristic name")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("run", help="full pipeline: ego-nets, scoring, aggregation, top-k")
    p.add_argument("--graph", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--agg", choices=["sum", "max"], default="sum")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--figure", help="write a suggestion score PNG here")
    _add_builder_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="NDCG@k with a bootstrap confidence interval")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--report")
    p.add_argument("--figure", help="write a per-ego-net NDCG histogram PNG here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic planted-rule dataset")
    p.add_argument("--config")
    p.add_argument("--n-egonets", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="hash-split an ego-net file into train/valid/test")
    p.add_argument("--data", required=True)
    p.add_argument("--ratios", type=float, nargs=3, default=[0.8, 0.1, 0.1])
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_split)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(asctime)s %(levelname)s %(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args)
    except (graph.GraphFormatError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface binding every stage of the pipeline.

Exit codes: 0 success, 1 usage error, 2 data error, 3 upstream-service
error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .chat import HttpChatClient, MockChatClient, StaticChatClient, TransportError
from .config import ConfigError, load_config
from .evalharness import (evaluate, load_dataset_jsonl, load_manual_csv,
                          load_responses_jsonl, record_manual)
from .ingest import ingest_files
from .nlp_metrics import bleu, rouge_l_corpus, tokenize
from .oracle import Category, answer_question
from .pipeline import DependencyError, emit_report_files, write_eval_report
from .qagen import GenerationSettings, emit_jsonl, generate_dataset, split_dataset
from .sampler import load_context, load_contexts, sample_contexts, write_context
from .stats import (cost_projection, cost_ratio, scenario_from_dict,
                    two_proportion_z, wilson_interval)
from .store import RecordStore
from .train_config import RopeScalingConfig, emit_training_config
from .util import config_digest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_UPSTREAM = 3


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, default=str))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maritime-intel",
                                     description="AIS intelligence pipeline")
    parser.add_argument("--config", help="JSON config file overriding defaults")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and store AIS CSV files")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--store", required=True)

    p = sub.add_parser("sample", help="build stratified vessel contexts")
    p.add_argument("--store", required=True)
    p.add_argument("--contexts", type=int, required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)

    p = sub.add_parser("oracle", help="compute a reference answer for a context")
    p.add_argument("--context", required=True)
    p.add_argument("--category", required=True,
                   choices=[c.value for c in Category])
    p.add_argument("--mmsi")
    p.add_argument("--minutes", type=float, default=60.0)
    p.add_argument("--filter-category", dest="filter_category")

    p = sub.add_parser("generate", help="generate the synthetic Q&A dataset")
    p.add_argument("--contexts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--client", choices=["live", "mock"], default="mock")
    p.add_argument("--mock-mode", choices=["echo", "perturb", "fail"], default="echo")
    p.add_argument("--perturbation", type=float, default=0.15)
    p.add_argument("--endpoint", default="")
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--split-seed", type=int, default=13)
    p.add_argument("--train-fraction", type=float, default=0.9)

    p = sub.add_parser("evaluate", help="judge responses against a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--manual")
    p.add_argument("--report", required=True)

    p = sub.add_parser("metrics", help="BLEU and ROUGE-L over candidate/reference JSONL")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)

    p = sub.add_parser("stats", help="proportion statistics")
    stats_sub = p.add_subparsers(dest="stats_command", required=True)
    z = stats_sub.add_parser("ztest")
    z.add_argument("--x1", type=int, required=True)
    z.add_argument("--n1", type=int, required=True)
    z.add_argument("--x2", type=int, required=True)
    z.add_argument("--n2", type=int, required=True)
    w = stats_sub.add_parser("wilson")
    w.add_argument("--k", type=int, required=True)
    w.add_argument("--n", type=int, required=True)
    w.add_argument("--confidence", type=float, default=0.95)
    c = stats_sub.add_parser("cost")
    c.add_argument("--config", dest="cost_config")

    p = sub.add_parser("cost", help="annual cost projections (alias of stats cost)")
    p.add_argument("--config", dest="cost_config")

    p = sub.add_parser("train-config", help="training configuration emission")
    tc_sub = p.add_subparsers(dest="tc_command", required=True)
    e = tc_sub.add_parser("emit")
    e.add_argument("--out", required=True)
    e.add_argument("--head-dim", type=int, default=128)
    e.add_argument("--scale", type=float, default=4.0)

    p = sub.add_parser("serve", help="run the HTTP query service")
    p.add_argument("--store", required=True)
    p.add_argument("--endpoint", default="")
    p.add_argument("--mock", action="store_true",
                   help="use a canned mock instead of a live inference endpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    p = sub.add_parser("report", help="emit plot-ready CSV files")
    p.add_argument("--eval", dest="eval_path", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fixture", help="write the bundled synthetic AIS fixture")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=20240315)

    return parser


def _cmd_ingest(args, cfg) -> int:
    with RecordStore(args.store) as store:
        stats = ingest_files(args.input, store)
        payload = stats.to_dict()
        payload["record_count"] = store.count()
    _print_json(payload)
    return EXIT_OK


def _cmd_sample(args, cfg) -> int:
    with RecordStore(args.store) as store:
        contexts, plan = sample_contexts(store, args.contexts, seed=args.seed)
        for ctx in contexts:
            write_context(ctx, args.out)
    _print_json({
        "contexts": len(contexts),
        "out": args.out,
        "plan": [{"stratum": s.to_dict(), "count": n} for s, n in plan.allocations],
        "warnings": plan.warnings,
    })
    return EXIT_OK


def _cmd_oracle(args, cfg) -> int:
    ctx = load_context(args.context)
    category = Category(args.category)
    params: dict = {}
    if category in (Category.TRAJECTORY, Category.MOVEMENT):
        params["mmsi"] = args.mmsi or ctx.vessels[0].mmsi
    if category == Category.TRAJECTORY:
        params["minutes"] = args.minutes
    if category == Category.COUNT:
        params["category"] = args.filter_category
    answer = answer_question(ctx, category, params)
    _print_json(answer.to_dict())
    return EXIT_OK


def _cmd_generate(args, cfg) -> int:
    contexts = load_contexts(args.contexts)
    if not contexts:
        raise FileNotFoundError(f"no context files under {args.contexts}")
    if args.client == "live":
        client = HttpChatClient(endpoint=args.endpoint or cfg["generation"]["endpoint"],
                                api_key_env=cfg["generation"]["api_key_env"],
                                timeout_s=cfg["generation"]["timeout_s"],
                                max_retries=cfg["generation"]["max_retries"])
    else:
        client = MockChatClient(mode=args.mock_mode, perturbation=args.perturbation)
    settings = GenerationSettings(
        model_a=cfg["generation"]["model_a"], model_b=cfg["generation"]["model_b"],
        temperature_a=cfg["generation"]["temperature_a"],
        temperature_b=cfg["generation"]["temperature_b"],
        judge_rel_tol=cfg["thresholds"]["judge"]["rel_tol"],
        max_retries=cfg["generation"]["max_retries"],
    )
    pairs = generate_dataset(contexts, client, seed=args.seed, settings=settings,
                             concurrency=args.concurrency)
    if contexts and not pairs:
        raise TransportError("generation produced no pairs: every context failed")
    pairs = split_dataset(pairs, train_fraction=args.train_fraction,
                          rng_seed=args.split_seed)
    manifest = emit_jsonl(pairs, args.out, config_hash=config_digest(cfg), seed=args.seed)
    _print_json(manifest)
    return EXIT_OK


def _cmd_evaluate(args, cfg) -> int:
    pairs = load_dataset_jsonl(args.dataset)
    responses = load_responses_jsonl(args.responses)
    report = evaluate(pairs, responses,
                      rel_tol=cfg["thresholds"]["judge"]["rel_tol"],
                      modular_degrees=cfg["thresholds"]["judge"]["modular_degrees"])
    report_dir = Path(args.report)
    write_eval_report(report, report_dir)
    payload = {"overall_accuracy": report.overall_accuracy, "total": report.total,
               "report": str(report_dir / "eval_report.json")}
    if args.manual:
        payload["manual"] = record_manual(load_manual_csv(args.manual))
    _print_json(payload)
    return EXIT_OK


def _cmd_metrics(args, cfg) -> int:
    def _texts(path: str) -> list[str]:
        texts = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    texts.append(obj["text"] if isinstance(obj, dict) else str(obj))
        return texts

    candidates = [tokenize(t) for t in _texts(args.candidates)]
    references = [tokenize(t) for t in _texts(args.references)]
    result = {
        "bleu": bleu(candidates, references).to_dict(),
        "rouge_l": rouge_l_corpus(candidates, references),
    }
    _print_json(result)
    return EXIT_OK


def _cmd_stats(args, cfg) -> int:
    if args.stats_command == "ztest":
        _print_json(two_proportion_z(args.x1, args.n1, args.x2, args.n2).to_dict())
    elif args.stats_command == "wilson":
        _print_json(wilson_interval(args.k, args.n, args.confidence).to_dict())
    else:
        return _cmd_cost(args, cfg)
    return EXIT_OK


def _cmd_cost(args, cfg) -> int:
    scenarios_cfg = cfg["cost_scenarios"]
    if getattr(args, "cost_config", None):
        scenarios_cfg = json.loads(Path(args.cost_config).read_text(encoding="utf-8"))
        scenarios_cfg = scenarios_cfg.get("scenarios", scenarios_cfg)
    costs = {name: cost_projection(scenario_from_dict(name, spec))
             for name, spec in scenarios_cfg.items()}
    cheapest = min(costs.values()) if costs else 0.0
    _print_json({
        "annual_costs": costs,
        "ratios_vs_cheapest": {name: (cost_ratio(c, cheapest) if cheapest > 0 else None)
                               for name, c in costs.items()},
    })
    return EXIT_OK


def _cmd_train_config(args, cfg) -> int:
    rope = RopeScalingConfig(head_dim=args.head_dim, scale=args.scale)
    emitted = emit_training_config(args.out, rope)
    _print_json({"out": args.out, "context_length": emitted["context_length"]})
    return EXIT_OK


def _cmd_serve(args, cfg) -> int:
    import uvicorn

    from .service import create_app
    store = RecordStore(args.store)
    if args.mock or not (args.endpoint or cfg["service"]["endpoint"]):
        client = StaticChatClient(
            "Mock inference: no model endpoint configured. Retrieval metadata is "
            "included in the meta chunk of this stream.")
    else:
        client = HttpChatClient(endpoint=args.endpoint or cfg["service"]["endpoint"],
                                api_key_env=cfg["service"]["api_key_env"])
    app = create_app(store, client, max_vessels=cfg["service"]["max_vessels"])
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def _cmd_report(args, cfg) -> int:
    eval_report = json.loads(Path(args.eval_path).read_text(encoding="utf-8"))
    if not eval_report.get("total"):
        raise ValueError("evaluation report is empty; nothing to chart")
    rows = emit_report_files(eval_report, cfg["cost_scenarios"], args.out)
    _print_json({"out": args.out, "category_rows": rows})
    return EXIT_OK


def _cmd_fixture(args, cfg) -> int:
    from .fixtures import write_fixture_csv
    rows = write_fixture_csv(args.out, seed=args.seed)
    _print_json({"out": args.out, "rows": rows})
    return EXIT_OK


_HANDLERS = {
    "ingest": _cmd_ingest,
    "sample": _cmd_sample,
    "oracle": _cmd_oracle,
    "generate": _cmd_generate,
    "evaluate": _cmd_evaluate,
    "metrics": _cmd_metrics,
    "stats": _cmd_stats,
    "cost": _cmd_cost,
    "train-config": _cmd_train_config,
    "serve": _cmd_serve,
    "report": _cmd_report,
    "fixture": _cmd_fixture,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems and 0 on --help/--version
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    try:
        cfg = load_config(args.config)
        return _HANDLERS[args.command](args, cfg)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_USAGE
    except TransportError as exc:
        logger.error("upstream service error: %s", exc)
        return EXIT_UPSTREAM
    except DependencyError as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except (OSError, ValueError, KeyError) as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

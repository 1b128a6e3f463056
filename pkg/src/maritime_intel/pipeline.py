"""End-to-end pipeline: ingest -> sample -> generate -> evaluate -> stats.

Each stage is idempotent given identical inputs and seeds, writes its
artifacts under the configured paths, and stamps a manifest carrying the
resolved config hash. No stage mutates a prior stage's artifacts; the
evaluate stage consumes the generation stage's reference/response files
through the same JSONL formats the CLI exposes.
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Sequence

from .chat import HttpChatClient, MockChatClient
from .config import config_hash
from .evalharness import (EvalReport, evaluate, load_dataset_jsonl,
                          load_responses_jsonl)
from .ingest import ingest_files
from .qagen import (GenerationSettings, emit_jsonl, generate_dataset,
                    split_dataset)
from .sampler import sample_contexts, write_context
from .stats import cost_projection, cost_ratio, scenario_from_dict, wilson_interval
from .store import RecordStore

logger = logging.getLogger(__name__)

STAGES = ("ingest", "sample", "generate", "evaluate", "stats", "train_config", "report")

# Artifact each stage must find before running, and the stage that makes it.
_STAGE_REQUIRES = {
    "sample": ("store", "ingest"),
    "generate": ("contexts_dir", "sample"),
    "evaluate": ("dataset_dir", "generate"),
    "report": ("reports_dir", "evaluate"),
}


class DependencyError(RuntimeError):
    """A stage ran before the stage that produces its input artifact."""

    def __init__(self, stage: str, missing: str, prior_stage: str):
        super().__init__(f"stage '{stage}' needs artifact '{missing}' — "
                         f"run stage '{prior_stage}' first")
        self.stage = stage
        self.prior_stage = prior_stage


def _require(cfg: dict, stage: str) -> None:
    spec = _STAGE_REQUIRES.get(stage)
    if spec is None:
        return
    key, prior = spec
    path = Path(cfg["paths"][key])
    if not path.exists():
        raise DependencyError(stage, str(path), prior)


def _write_manifest(directory: Path, stage: str, cfg: dict, payload: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"stage": stage, "config_hash": config_hash(cfg), **payload}
    (directory / f"{stage}_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def stage_ingest(cfg: dict, inputs: Sequence[str]) -> dict:
    if not inputs:
        raise ValueError("ingest stage needs at least one input CSV")
    store_path = Path(cfg["paths"]["store"])
    store_path.parent.mkdir(parents=True, exist_ok=True)
    if store_path.exists():
        store_path.unlink()  # stages are idempotent: rebuild, never append
    with RecordStore(store_path) as store:
        stats = ingest_files(inputs, store)
        count = store.count()
    payload = {"ingest_stats": stats.to_dict(), "record_count": count,
               "inputs": sorted(str(p) for p in inputs)}
    _write_manifest(store_path.parent, "ingest", cfg, payload)
    return payload


def stage_sample(cfg: dict) -> dict:
    _require(cfg, "sample")
    out_dir = Path(cfg["paths"]["contexts_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for stale in out_dir.glob("context_*.json"):
        stale.unlink()
    with RecordStore(cfg["paths"]["store"]) as store:
        contexts, plan = sample_contexts(store, cfg["sampling"]["target_contexts"],
                                         seed=cfg["seeds"]["sample"])
        for ctx in contexts:
            write_context(ctx, out_dir)
    payload = {
        "contexts": len(contexts),
        "plan": [{"stratum": s.to_dict(), "count": n} for s, n in plan.allocations],
        "warnings": plan.warnings,
    }
    _write_manifest(out_dir, "sample", cfg, payload)
    return payload


def build_client(cfg: dict):
    gen = cfg["generation"]
    if gen["client"] == "live":
        return HttpChatClient(endpoint=gen["endpoint"], api_key_env=gen["api_key_env"],
                              timeout_s=gen["timeout_s"], max_retries=gen["max_retries"])
    return MockChatClient(mode=gen.get("mock_mode", "echo"),
                          perturbation=gen.get("perturbation", 0.15))


def stage_generate(cfg: dict, client=None) -> dict:
    _require(cfg, "generate")
    from .sampler import load_contexts
    contexts = sorted(load_contexts(cfg["paths"]["contexts_dir"]),
                      key=lambda c: c.context_id)
    if not contexts:
        raise DependencyError("generate", cfg["paths"]["contexts_dir"], "sample")
    gen = cfg["generation"]
    settings = GenerationSettings(
        model_a=gen["model_a"], model_b=gen["model_b"],
        temperature_a=gen["temperature_a"], temperature_b=gen["temperature_b"],
        judge_rel_tol=cfg["thresholds"]["judge"]["rel_tol"],
        max_retries=gen["max_retries"],
    )
    client = client or build_client(cfg)
    pairs = generate_dataset(contexts, client, seed=cfg["seeds"]["generate"],
                             settings=settings, concurrency=gen["concurrency"])
    pairs = split_dataset(pairs, train_fraction=gen["train_fraction"],
                          rng_seed=cfg["seeds"]["split"])

    out_dir = Path(cfg["paths"]["dataset_dir"])
    manifest = emit_jsonl(pairs, out_dir, config_hash=config_hash(cfg),
                          seed=cfg["seeds"]["generate"])
    _write_manifest(out_dir, "generate", cfg, {"dataset": manifest})
    return {"dataset": manifest, "pairs": len(pairs)}


def stage_evaluate(cfg: dict, dataset_path: str | Path | None = None,
                   responses_path: str | Path | None = None) -> dict:
    _require(cfg, "evaluate")
    dataset_dir = Path(cfg["paths"]["dataset_dir"])
    dataset_path = Path(dataset_path) if dataset_path else dataset_dir / "references.jsonl"
    responses_path = (Path(responses_path) if responses_path
                      else dataset_dir / "generated_responses.jsonl")
    if not dataset_path.exists() or not responses_path.exists():
        raise DependencyError("evaluate", str(dataset_path), "generate")
    pairs = load_dataset_jsonl(dataset_path)
    responses = load_responses_jsonl(responses_path)
    report = evaluate(pairs, responses,
                      rel_tol=cfg["thresholds"]["judge"]["rel_tol"],
                      modular_degrees=cfg["thresholds"]["judge"]["modular_degrees"])
    reports_dir = Path(cfg["paths"]["reports_dir"])
    write_eval_report(report, reports_dir)
    _write_manifest(reports_dir, "evaluate", cfg,
                    {"total": report.total, "overall_accuracy": report.overall_accuracy})
    return {"overall_accuracy": report.overall_accuracy, "total": report.total}


def write_eval_report(report: EvalReport, reports_dir: str | Path) -> Path:
    reports_dir = Path(reports_dir)
    reports_dir.mkdir(parents=True, exist_ok=True)
    path = reports_dir / "eval_report.json"
    path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    with open(reports_dir / "eval_report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["category", "n", "correct", "accuracy"])
        writer.writeheader()
        writer.writerows(report.category_csv_rows())
    return path


def stage_stats(cfg: dict) -> dict:
    """Wilson intervals per category from the eval report plus cost model."""
    reports_dir = Path(cfg["paths"]["reports_dir"])
    eval_path = reports_dir / "eval_report.json"
    if not eval_path.exists():
        raise DependencyError("stats", str(eval_path), "evaluate")
    eval_report = json.loads(eval_path.read_text(encoding="utf-8"))
    intervals = {}
    for category, group in eval_report["by_category"].items():
        if group["n"]:
            ci = wilson_interval(group["correct"], group["n"])
            intervals[category] = ci.to_dict()
    scenarios = {name: scenario_from_dict(name, spec)
                 for name, spec in cfg["cost_scenarios"].items()}
    costs = {name: cost_projection(s) for name, s in scenarios.items()}
    cheapest = min(costs.values()) if costs else 0.0
    payload = {
        "wilson_intervals": intervals,
        "annual_costs": costs,
        "cost_ratios_vs_cheapest": {name: (cost_ratio(c, cheapest) if cheapest > 0 else None)
                                    for name, c in costs.items()},
    }
    (reports_dir / "stats.json").write_text(json.dumps(payload, indent=2) + "\n",
                                            encoding="utf-8")
    _write_manifest(reports_dir, "stats", cfg, {"categories": sorted(intervals)})
    return payload


def stage_train_config(cfg: dict) -> dict:
    from .train_config import emit_training_config
    reports_dir = Path(cfg["paths"]["reports_dir"])
    reports_dir.mkdir(parents=True, exist_ok=True)
    out = reports_dir / "training_config.json"
    emitted = emit_training_config(out)
    _write_manifest(reports_dir, "train_config", cfg, {"path": str(out)})
    return {"path": str(out), "context_length": emitted["context_length"]}


def stage_report(cfg: dict) -> dict:
    """Plot-ready CSVs: per-category accuracy with CI columns, and costs."""
    _require(cfg, "report")
    reports_dir = Path(cfg["paths"]["reports_dir"])
    eval_path = reports_dir / "eval_report.json"
    if not eval_path.exists():
        raise DependencyError("report", str(eval_path), "evaluate")
    eval_report = json.loads(eval_path.read_text(encoding="utf-8"))
    if not eval_report["total"]:
        raise ValueError("evaluation report is empty; nothing to chart")
    rows = emit_report_files(eval_report, cfg["cost_scenarios"], reports_dir)
    _write_manifest(reports_dir, "report", cfg, {"category_rows": rows})
    return {"category_rows": rows}


def emit_report_files(eval_report: dict, cost_scenarios: dict,
                      out_dir: str | Path) -> int:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = 0
    with open(out_dir / "category_metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["category", "n", "correct", "accuracy",
                                                "ci_low", "ci_high"])
        writer.writeheader()
        for category, group in eval_report["by_category"].items():
            if not group["n"]:
                continue
            ci = wilson_interval(group["correct"], group["n"])
            writer.writerow({
                "category": category, "n": group["n"], "correct": group["correct"],
                "accuracy": f"{group['correct'] / group['n']:.6f}",
                "ci_low": f"{ci.low:.6f}", "ci_high": f"{ci.high:.6f}",
            })
            rows += 1

    scenarios = {name: scenario_from_dict(name, spec)
                 for name, spec in cost_scenarios.items()}
    costs = {name: cost_projection(s) for name, s in scenarios.items()}
    cheapest = min(costs.values()) if costs else 0.0
    with open(out_dir / "cost_comparison.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["scenario", "annual_cost", "ratio_vs_cheapest"])
        writer.writeheader()
        for name in sorted(costs):
            ratio = cost_ratio(costs[name], cheapest) if cheapest > 0 else ""
            writer.writerow({"scenario": name, "annual_cost": f"{costs[name]:.2f}",
                             "ratio_vs_cheapest": f"{ratio:.2f}" if ratio != "" else ""})
    return rows


def run_pipeline(cfg: dict, stages: Sequence[str] | None = None,
                 inputs: Sequence[str] = (), client=None) -> dict:
    """Run the requested stages in canonical order; returns per-stage payloads."""
    selected = list(stages) if stages else list(STAGES)
    unknown = [s for s in selected if s not in STAGES]
    if unknown:
        raise ValueError(f"unknown stages: {unknown}")
    results: dict[str, dict] = {}
    for stage in STAGES:
        if stage not in selected:
            continue
        logger.info("pipeline stage: %s", stage)
        if stage == "ingest":
            results[stage] = stage_ingest(cfg, inputs)
        elif stage == "sample":
            results[stage] = stage_sample(cfg)
        elif stage == "generate":
            results[stage] = stage_generate(cfg, client=client)
        elif stage == "evaluate":
            results[stage] = stage_evaluate(cfg)
        elif stage == "stats":
            results[stage] = stage_stats(cfg)
        elif stage == "train_config":
            results[stage] = stage_train_config(cfg)
        elif stage == "report":
            results[stage] = stage_report(cfg)
    return results

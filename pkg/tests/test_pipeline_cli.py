import json
from pathlib import Path

import pytest

from maritime_intel import cli
from maritime_intel.config import ConfigError, config_hash, default_config, load_config
from maritime_intel.pipeline import (DependencyError, run_pipeline, stage_evaluate,
                                     stage_generate, stage_sample)


@pytest.fixture()
def pipeline_cfg(tmp_path, fixture_csv):
    cfg = default_config()
    cfg["paths"] = {
        "store": str(tmp_path / "records.db"),
        "contexts_dir": str(tmp_path / "contexts"),
        "dataset_dir": str(tmp_path / "dataset"),
        "reports_dir": str(tmp_path / "reports"),
    }
    return cfg


# --- config ------------------------------------------------------------------------

def test_config_rejects_unknown_keys(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"seeds": {"sample": 1}, "bogus": 1}))
    with pytest.raises(ConfigError):
        load_config(bad)
    nested = tmp_path / "nested.json"
    nested.write_text(json.dumps({"generation": {"not_a_key": True}}))
    with pytest.raises(ConfigError):
        load_config(nested)


def test_config_overrides_merge(tmp_path):
    override = tmp_path / "cfg.json"
    override.write_text(json.dumps({"seeds": {"sample": 42}}))
    cfg = load_config(override)
    assert cfg["seeds"]["sample"] == 42
    assert cfg["seeds"]["generate"] == 11  # untouched default


def test_config_partial_threshold_override_keeps_siblings(tmp_path):
    override = tmp_path / "cfg.json"
    override.write_text(json.dumps({"thresholds": {"judge": {"rel_tol": 0.2}}}))
    cfg = load_config(override)
    assert cfg["thresholds"]["judge"]["rel_tol"] == 0.2
    assert cfg["thresholds"]["judge"]["modular_degrees"] is False
    assert cfg["thresholds"]["speed_caps_kn"]["cargo"] == 25.0


def test_config_hash_changes_with_any_threshold():
    a = default_config()
    b = default_config()
    assert config_hash(a) == config_hash(b)
    b["thresholds"]["judge"]["rel_tol"] = 0.2
    assert config_hash(a) != config_hash(b)


# --- pipeline stages -----------------------------------------------------------------

def test_stage_dependencies_enforced(pipeline_cfg):
    with pytest.raises(DependencyError) as err:
        stage_sample(pipeline_cfg)
    assert err.value.prior_stage == "ingest"
    with pytest.raises(DependencyError):
        stage_generate(pipeline_cfg)
    with pytest.raises(DependencyError):
        stage_evaluate(pipeline_cfg)


def test_full_pipeline_echo_mock(pipeline_cfg, fixture_csv):
    results = run_pipeline(pipeline_cfg, inputs=[str(fixture_csv)])
    assert results["ingest"]["ingest_stats"]["rejected"] == 0
    assert results["sample"]["contexts"] == 8
    assert results["generate"]["dataset"]["counts"]["rejected"] == 0
    assert results["evaluate"]["overall_accuracy"] == 1.0
    reports = Path(pipeline_cfg["paths"]["reports_dir"])
    assert (reports / "eval_report.json").exists()
    assert (reports / "stats.json").exists()
    assert (reports / "training_config.json").exists()
    assert (reports / "category_metrics.csv").exists()
    assert (reports / "cost_comparison.csv").exists()
    stats = json.loads((reports / "stats.json").read_text())
    assert "wilson_intervals" in stats and stats["annual_costs"]
    # every artifact manifest carries the resolved config hash
    manifest = json.loads((Path(pipeline_cfg["paths"]["dataset_dir"])
                           / "generate_manifest.json").read_text())
    assert manifest["config_hash"] == config_hash(pipeline_cfg)


def test_pipeline_rerun_is_byte_identical(pipeline_cfg, fixture_csv):
    run_pipeline(pipeline_cfg, stages=["ingest", "sample", "generate"],
                 inputs=[str(fixture_csv)])
    dataset = Path(pipeline_cfg["paths"]["dataset_dir"])
    first = {p.name: p.read_bytes() for p in dataset.iterdir()}
    run_pipeline(pipeline_cfg, stages=["ingest", "sample", "generate"],
                 inputs=[str(fixture_csv)])
    second = {p.name: p.read_bytes() for p in dataset.iterdir()}
    assert first == second


def test_report_requires_nonempty_eval(pipeline_cfg, tmp_path):
    from maritime_intel.pipeline import stage_report
    reports = Path(pipeline_cfg["paths"]["reports_dir"])
    reports.mkdir(parents=True)
    (reports / "eval_report.json").write_text(json.dumps({"total": 0, "by_category": {}}))
    with pytest.raises(ValueError):
        stage_report(pipeline_cfg)


def test_report_ratio_from_golden_endpoint_totals(tmp_path):
    # fed the two golden dollar totals directly, the ratio column is 260.71
    from maritime_intel.pipeline import emit_report_files
    eval_report = {
        "total": 6,
        "by_category": {"count": {"n": 6, "correct": 4}},
    }
    scenarios = {
        "api_priced": {"fixed_annual": 2_190_000.0},
        "self_hosted": {"fixed_annual": 8_400.0},
    }
    emit_report_files(eval_report, scenarios, tmp_path)
    rows = (tmp_path / "cost_comparison.csv").read_text().splitlines()
    api_row = next(row for row in rows if row.startswith("api_priced"))
    assert api_row.split(",")[-1] == "260.71"
    category_rows = (tmp_path / "category_metrics.csv").read_text().splitlines()
    assert len(category_rows) == 2  # header + one populated category


# --- CLI ------------------------------------------------------------------------------

def test_cli_usage_errors_exit_1():
    assert cli.main(["no-such-command"]) == cli.EXIT_USAGE
    assert cli.main(["ingest"]) == cli.EXIT_USAGE  # missing required flags


def test_cli_missing_file_exits_2(tmp_path):
    code = cli.main(["evaluate", "--dataset", str(tmp_path / "none.jsonl"),
                     "--responses", str(tmp_path / "none2.jsonl"),
                     "--report", str(tmp_path / "out")])
    assert code == cli.EXIT_DATA


def test_cli_dead_upstream_exits_3(tmp_path, sampled_contexts):
    from maritime_intel.sampler import write_context
    contexts_dir = tmp_path / "ctx"
    write_context(sampled_contexts[0], contexts_dir)
    code = cli.main(["generate", "--contexts", str(contexts_dir),
                     "--out", str(tmp_path / "ds"), "--client", "mock",
                     "--mock-mode", "fail"])
    assert code == cli.EXIT_UPSTREAM


def test_cli_stats_commands(capsys):
    assert cli.main(["stats", "ztest", "--x1", "75", "--n1", "100",
                     "--x2", "354", "--n2", "500"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["p_pool"] == 0.715
    assert cli.main(["stats", "wilson", "--k", "75", "--n", "100"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert round(out["low"], 3) == 0.657
    assert cli.main(["cost"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["annual_costs"]["self_hosted_7b"] == 8400.0


def test_cli_train_config(tmp_path, capsys):
    out_path = tmp_path / "training.json"
    assert cli.main(["train-config", "emit", "--out", str(out_path)]) == 0
    emitted = json.loads(out_path.read_text())
    assert emitted["context_length"] == 131072


def test_cli_end_to_end_flow(tmp_path, fixture_csv, capsys):
    store = tmp_path / "records.db"
    contexts = tmp_path / "contexts"
    dataset = tmp_path / "dataset"
    report_dir = tmp_path / "report"

    assert cli.main(["ingest", "--input", str(fixture_csv), "--store", str(store)]) == 0
    ingest_out = json.loads(capsys.readouterr().out)
    assert ingest_out["accepted"] >= 5000

    assert cli.main(["sample", "--store", str(store), "--contexts", "4",
                     "--seed", "7", "--out", str(contexts)]) == 0
    capsys.readouterr()

    assert cli.main(["generate", "--contexts", str(contexts), "--out", str(dataset),
                     "--client", "mock", "--seed", "11"]) == 0
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["counts"]["total"] == 48

    # judge the emitted teacher answers against their own dataset references
    train = dataset / "train.jsonl"
    responses = tmp_path / "responses.jsonl"
    with open(train) as fh, open(responses, "w") as out:
        for i, line in enumerate(fh):
            obj = json.loads(line)
            out.write(json.dumps({"pair_id": str(i), "response_text": obj["answer"]}) + "\n")
    assert cli.main(["evaluate", "--dataset", str(train),
                     "--responses", str(responses), "--report", str(report_dir)]) == 0
    eval_out = json.loads(capsys.readouterr().out)
    assert eval_out["overall_accuracy"] == 1.0

    assert cli.main(["report", "--eval", str(report_dir / "eval_report.json"),
                     "--out", str(tmp_path / "figures")]) == 0
    capsys.readouterr()
    cost_rows = (tmp_path / "figures" / "cost_comparison.csv").read_text().splitlines()
    api_row = next(row for row in cost_rows if row.startswith("api_large_model"))
    ratio = float(api_row.split(",")[-1])
    assert round(ratio) == 261  # shipped scenario approximates the endpoint totals


def test_cli_oracle_command(tmp_path, sampled_contexts, capsys):
    from maritime_intel.sampler import write_context
    path = write_context(sampled_contexts[0], tmp_path)
    assert cli.main(["oracle", "--context", str(path), "--category", "count"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["category"] == "count"
    assert out["numeric_values"]


def test_cli_metrics_command(tmp_path, capsys):
    cands = tmp_path / "cands.jsonl"
    refs = tmp_path / "refs.jsonl"
    cands.write_text(json.dumps({"text": "three ships heading north"}) + "\n")
    refs.write_text(json.dumps({"text": "three ships heading north"}) + "\n")
    assert cli.main(["metrics", "--candidates", str(cands),
                     "--references", str(refs)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["bleu"]["score"] == pytest.approx(1.0)
    assert out["rouge_l"]["f1"] == pytest.approx(1.0)


def test_cli_fixture_command(tmp_path, capsys):
    out_csv = tmp_path / "fx.csv"
    assert cli.main(["fixture", "--out", str(out_csv)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["rows"] >= 5000
    assert out_csv.exists()

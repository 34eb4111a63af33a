import json
import subprocess
import sys

import pytest

from specdec.cli import main
from specdec.pipeline import PipelineConfig, Paths

SMALL_CONFIG = {
    "corpus_sequences": 120,
    "num_label_prompts": 40,
    "num_calibration_prompts": 12,
    "num_eval_prompts": 12,
    "max_new_tokens": 24,
    "c_grid": [0.01, 1.0, 100.0],
    "check_samples": 30_000,
    "check_tv_bound": 0.06,
    "theorem_trials": 100,
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config_path = root / "config.json"
    config_path.write_text(json.dumps(SMALL_CONFIG))
    return root, config_path


@pytest.fixture(scope="module")
def trained(workdir):
    root, config = workdir
    out = root / "run"
    assert main(["train-models", "--config", str(config), "--out", str(out)]) == 0
    assert main(["gen-labels", "--config", str(config), "--out", str(out)]) == 0
    assert main(["train-judge", "--config", str(config), "--out", str(out)]) == 0
    return out, config


class TestPipelineCommands:
    def test_train_models_writes_loadable_files(self, trained):
        out, _ = trained
        paths = Paths(out)
        from specdec import load_model

        target = load_model(paths.target_model)
        draft_model = load_model(paths.draft_model)
        assert target.order == 3
        assert draft_model.order == 2
        assert target.vocab == draft_model.vocab

    def test_tiny_corpus_round_trip(self, tmp_path):
        corpus = tmp_path / "corpus.txt"
        corpus.write_text("the cat sat\nthe dog sat\nthe cat ran\n")
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"corpus_path": str(corpus), "tokenizer": "whitespace"}))
        out = tmp_path / "run"
        assert main(["train-models", "--config", str(config), "--out", str(out)]) == 0
        from specdec import load_model

        target = load_model(Paths(out).target_model)
        assert "cat" in target.vocab.tokens

    def test_gen_labels_artifacts(self, trained):
        out, _ = trained
        paths = Paths(out)
        rows = [json.loads(l) for l in paths.dataset.read_text().splitlines()]
        assert rows and {"s", "s_prefix", "suffix_delta", "label", "features"} <= set(rows[0])
        summary = json.loads(paths.dataset_summary.read_text())
        assert summary["num_mismatches"] == len(rows)
        assert summary["meta"]["seed"] == 0

    def test_train_judge_artifact(self, trained):
        out, _ = trained
        doc = json.loads(Paths(out).verifier.read_text())
        assert doc["feature_dim"] == 16
        assert set(doc["thresholds"]) == {"recall", "f1"}

    def test_eval_writes_report_and_traces(self, trained):
        out, config = trained
        code = main([
            "eval", "--config", str(config), "--out", str(out),
            "--policy", "greedy", "--policy", "rejection", "--policy", "judge",
            "--theta", "f1",
        ])
        assert code == 0
        paths = Paths(out)
        report = [json.loads(l) for l in paths.report_jsonl.read_text().splitlines()
                  if json.loads(l).get("type") != "meta"]
        by_policy = {r["policy"]: r for r in report}
        assert by_policy["greedy"]["exact_match_rate"] == 1.0
        assert by_policy["rejection"]["exact_match_rate"] == 1.0
        assert paths.traces.exists()
        assert paths.report_txt.exists()

    def test_eval_without_verifier_is_usage_error(self, workdir):
        root, config = workdir
        out = root / "noverifier"
        assert main(["train-models", "--config", str(config), "--out", str(out)]) == 0
        code = main(["eval", "--config", str(config), "--out", str(out), "--policy", "judge"])
        assert code == 2

    def test_gen_labels_without_models_is_usage_error(self, workdir):
        root, config = workdir
        code = main(["gen-labels", "--config", str(config), "--out", str(root / "missing")])
        assert code == 2

    def test_check_theorem_passes(self, workdir):
        root, config = workdir
        out = root / "checks"
        code = main(["check-theorem", "--config", str(config), "--out", str(out)])
        assert code == 0
        doc = json.loads(Paths(out).theorem_result.read_text())
        assert doc["passed"] is True
        assert doc["violations"] == 0

    def test_check_distribution_passes_small(self, workdir):
        root, config = workdir
        out = root / "checks"
        code = main(["check-distribution", "--config", str(config), "--out", str(out)])
        assert code == 0
        doc = json.loads(Paths(out).distribution_result.read_text())
        assert doc["tv"] < doc["bound"] <= doc["control_tv"]

    def test_theta_sweep_adds_one_row_per_threshold(self, trained):
        out, config = trained
        code = main([
            "eval", "--config", str(config), "--out", str(out),
            "--policy", "judge", "--theta", "f1", "--theta", "recall", "--theta", "0.9",
        ])
        assert code == 0
        report = [json.loads(l) for l in Paths(out).report_jsonl.read_text().splitlines()
                  if json.loads(l).get("type") != "meta"]
        assert [r["policy"] for r in report] == ["judge:f1", "judge:recall", "judge:0.9"]

    def test_self_draft_greedy_eval_reaches_gamma_plus_one(self, workdir):
        root, _ = workdir
        config = root / "selfdraft.json"
        small = dict(SMALL_CONFIG, draft_order=3)  # draft == target model
        config.write_text(json.dumps(small))
        out = root / "selfdraft"
        assert main(["train-models", "--config", str(config), "--out", str(out)]) == 0
        assert main(["eval", "--config", str(config), "--out", str(out),
                     "--policy", "greedy"]) == 0
        report = [json.loads(l) for l in Paths(out).report_jsonl.read_text().splitlines()
                  if json.loads(l).get("type") != "meta"]
        gamma = json.loads(Paths(out).resolved_config.read_text())["gamma"]
        assert report[0]["m"] == gamma + 1

    def test_failed_check_exits_1(self, workdir):
        root, _ = workdir
        config = root / "strict.json"
        config.write_text(json.dumps(dict(SMALL_CONFIG, check_samples=5000,
                                          check_tv_bound=1e-9)))
        code = main(["check-distribution", "--config", str(config),
                     "--out", str(root / "strict")])
        assert code == 1

    def test_unknown_argument_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main(["train-models", "--bogus"])
        assert err.value.code == 2

    def test_unknown_config_key_rejected(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"not_a_key": 1}))
        assert main(["train-models", "--config", str(config), "--out", str(tmp_path)]) == 2

    def test_console_module_entry(self, workdir):
        proc = subprocess.run(
            [sys.executable, "-m", "specdec", "--help"], capture_output=True, text=True
        )
        assert proc.returncode == 0
        assert "check-distribution" in proc.stdout


class TestReportIntegrity:
    def test_report_rows_recomputable_from_traces(self, trained):
        # Every report number must be derivable from the stored traces by
        # the independent reducer.
        out, config_path = trained
        assert main(["eval", "--config", str(config_path), "--out", str(out),
                     "--policy", "greedy", "--policy", "rejection",
                     "--policy", "judge"]) == 0
        paths = Paths(out)
        config = PipelineConfig.from_file(config_path).with_overrides(out_dir=str(out))
        from specdec import load_model
        from specdec.pipeline import eval_prompts
        from specdec.reports import read_report, read_traces, reduce_traces

        target = load_model(paths.target_model)
        reduced = reduce_traces(read_traces(paths.traces), target,
                                eval_prompts(config), config.max_new_tokens)
        for row in read_report(paths.report_jsonl):
            twin = reduced[row["policy"]]
            assert row["m"] == pytest.approx(twin.m, abs=1e-12)
            assert row["mean_accepted_draft"] == pytest.approx(
                twin.mean_accepted_draft, abs=1e-12)
            assert row["exact_match_rate"] == twin.exact_match_rate
            assert row["mean_token_logprob"] == pytest.approx(
                twin.mean_token_logprob, abs=1e-12)
            assert row["cycles"] == twin.cycles


class TestDeterminism:
    def test_pipeline_reruns_are_byte_identical(self, workdir):
        # Smaller twin of the acceptance reproducibility criterion.
        root, config = workdir
        outputs = []
        for name in ("repro_a", "repro_b"):
            out = root / name
            for cmd in ("train-models", "gen-labels", "train-judge"):
                assert main([cmd, "--config", str(config), "--out", str(out)]) == 0
            assert main(["eval", "--config", str(config), "--out", str(out),
                         "--policy", "rejection", "--policy", "judge"]) == 0
            outputs.append(out)
        a, b = outputs
        for rel in ("target.model.json", "draft.model.json", "dataset.jsonl",
                    "dataset.summary.json", "verifier.json", "traces.jsonl",
                    "report.jsonl", "report.txt", "resolved_config.json"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

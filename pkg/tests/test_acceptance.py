"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL
line (run with ``pytest tests/test_acceptance.py -s`` to see them). All
criteria run on the default pipeline configuration with seed 0."""

import time

import numpy as np
import pytest

from specdec import (
    DecodeConfig,
    GreedyPolicy,
    JudgePolicy,
    MismatchRecord,
    RejectionPolicy,
    TrainConfig,
    alignment_accept_count,
    decode,
    find_mismatches,
    generate_response,
    grid_search,
    roc_auc,
    semantic_score,
)
from specdec.labeling import read_dataset
from specdec.ngram import load_model
from specdec.pipeline import (
    PipelineConfig,
    eval_prompts,
    label_prompts,
    run_check_distribution,
    run_check_theorem,
    run_eval,
    run_gen_labels,
    run_train_judge,
    run_train_models,
)
from specdec.reports import read_report
from specdec.verifier import load_verifier, logistic_loss_grad

from test_labeling import bidirectional_score_oracle
from test_verifier import fd_gradient, planted_problem


def report(criterion: str, passed: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} ({detail})")


@pytest.fixture(scope="module")
def config(tmp_path_factory) -> PipelineConfig:
    out = tmp_path_factory.mktemp("acceptance")
    return PipelineConfig(out_dir=str(out), seed=0)


@pytest.fixture(scope="module")
def pipeline(config):
    """One full pipeline run shared by the end-to-end criteria."""
    started = time.perf_counter()
    paths = run_train_models(config)
    run_gen_labels(config)
    run_train_judge(config)
    run_eval(config, ("greedy", "rejection", "topk", "judge"))
    elapsed = time.perf_counter() - started
    return paths, elapsed


@pytest.fixture(scope="module")
def models(pipeline):
    paths, _ = pipeline
    return load_model(paths.target_model), load_model(paths.draft_model)


def test_criterion_1_losslessness(config, models):
    target, draft_model = models
    prompts = eval_prompts(config)
    assert len(prompts) == 100
    started = time.perf_counter()
    matches = 0
    for policy in (RejectionPolicy(), GreedyPolicy()):
        for pid, prompt in enumerate(prompts):
            cfg = DecodeConfig(gamma=config.gamma, max_new_tokens=config.max_new_tokens,
                               temperature=0.0, seed=pid, policy=policy)
            tokens, _, _ = decode(target, draft_model, prompt, cfg)
            matches += tokens == generate_response(target, prompt, config.max_new_tokens)
    elapsed = time.perf_counter() - started
    passed = matches == 200 and elapsed < 10.0
    report("1 losslessness", passed,
           f"{matches}/200 exact matches over both policies, {elapsed:.2f}s")
    assert matches == 200
    assert elapsed < 10.0


def test_criterion_2_distribution_preservation(config):
    started = time.perf_counter()
    _, result = run_check_distribution(config)
    elapsed = time.perf_counter() - started
    passed = result.tv < 0.02 and result.control_tv >= 0.02 and elapsed < 60.0
    report("2 distribution preservation", passed,
           f"tv={result.tv:.5f} < 0.02, control_tv={result.control_tv:.3f}, {elapsed:.1f}s")
    assert result.tv < 0.02
    assert result.control_tv >= 0.02, "accept-all negative control must fail the bound"
    assert elapsed < 60.0


@pytest.fixture(scope="module")
def mismatch_records(config, models):
    target, draft_model = models
    records = []
    for pid, prompt in enumerate(label_prompts(config)):
        response = generate_response(target, prompt, config.response_len)
        records.extend(find_mismatches(draft_model, response, prompt, prompt_id=pid))
        if len(records) >= 500:
            break
    return records[:500]


def test_criterion_3_bidirectional_exactness(models, mismatch_records, config):
    target, _ = models
    assert len(mismatch_records) >= 500
    worst = 0.0
    for record in mismatch_records:
        window = len(record.response)  # covers the whole remaining response
        got = semantic_score(target, record, window).s
        expected = bidirectional_score_oracle(target, record)
        worst = max(worst, abs(got - expected))
    passed = worst < 1e-9
    report("3 bidirectional exactness", passed,
           f"max |score - joint enumeration| = {worst:.2e} over {len(mismatch_records)} records")
    assert worst < 1e-9


def test_criterion_4_identity_score(models, mismatch_records, config):
    target, _ = models
    checked = 0
    for record in mismatch_records:
        twin = MismatchRecord(record.prompt_id, record.position, record.original,
                              record.original, record.prompt, record.response)
        b = semantic_score(target, twin, config.suffix_len)
        assert b.s_prefix == 0.0 and b.suffix_delta == 0.0 and b.s == 0.0
        checked += 1
    report("4 identity score", True, f"exact zeros on all {checked} records")


def test_criterion_5_two_stage_dominance(config, models, pipeline):
    target, draft_model = models
    paths, _ = pipeline
    verifier = load_verifier(paths.verifier)
    policy = JudgePolicy(verifier=verifier, theta=verifier.thresholds_["f1"])
    cycles = 0
    strict = 0
    pid = 0
    prompts = eval_prompts(config)
    while cycles < 500:
        prompt = prompts[pid % len(prompts)]
        cfg = DecodeConfig(gamma=config.gamma, max_new_tokens=config.max_new_tokens,
                           temperature=0.0, policy=policy)
        _, _, traces = decode(target, draft_model, prompt, cfg,
                              rng=np.random.default_rng((7, pid)))
        for trace in traces:
            fallback = alignment_accept_count(trace)
            assert trace.accepted_count >= fallback, "two-stage fell below its fallback"
            strict += trace.accepted_count > fallback
            cycles += 1
        pid += 1
    passed = strict >= 1
    report("5 two-stage dominance", passed,
           f"{cycles} cycles, dominance everywhere, strict on {strict}")
    assert strict >= 1


def test_criterion_6_end_to_end_speedup(pipeline):
    paths, elapsed = pipeline
    rows = {r["policy"]: r for r in read_report(paths.report_jsonl)}
    m_rej = rows["rejection"]["m"]
    m_judge = rows["judge"]["m"]
    ll_rej = rows["rejection"]["mean_token_logprob"]
    ll_judge = rows["judge"]["mean_token_logprob"]
    degradation = (ll_rej - ll_judge) / abs(ll_rej)
    passed = m_judge > m_rej and degradation <= 0.05 and elapsed < 300.0
    report("6 end-to-end speedup", passed,
           f"m_judge={m_judge:.3f} > m_rej={m_rej:.3f}, "
           f"log-likelihood degradation={degradation:+.2%} <= 5%, pipeline {elapsed:.1f}s")
    assert m_judge > m_rej
    assert degradation <= 0.05
    assert elapsed < 300.0


def test_criterion_7_verifier_numerics():
    rng = np.random.default_rng(2718)
    worst_rel = 0.0
    for _ in range(20):
        n, d = 150, 8
        X = rng.standard_normal((n, d))
        y = (rng.random(n) < 0.5).astype(float)
        w = rng.standard_normal(d)
        b = float(rng.standard_normal())
        C = float(rng.uniform(0.005, 50))
        _, gw, gb = logistic_loss_grad(w, b, X, y, C)
        fw, fb = fd_gradient(w, b, X, y, C)
        rel = max(
            float((np.abs(gw - fw) / np.maximum(np.abs(fw), 1e-6)).max()),
            abs(gb - fb) / max(abs(fb), 1e-6),
        )
        worst_rel = max(worst_rel, rel)

    scores = np.round(rng.random(400), 2)
    labels = rng.random(400) < 0.5
    pos, neg = scores[labels], scores[~labels]
    wins = sum(int((sp > neg).sum()) for sp in pos)
    ties = sum(int((sp == neg).sum()) for sp in pos)
    brute = (wins + 0.5 * ties) / (len(pos) * len(neg))
    auc_err = abs(roc_auc(scores, labels) - brute)

    X, y = planted_problem(1200, 8, seed=22)
    model = grid_search(X, y, TrainConfig(seed=0))  # default grid: 0.001..100
    auc = model.training_meta_["auc"]

    passed = worst_rel < 1e-4 and auc_err < 1e-12 and auc >= 0.95
    report("7 verifier numerics", passed,
           f"max grad rel err={worst_rel:.2e}, auc err={auc_err:.2e}, planted auc={auc:.4f}")
    assert worst_rel < 1e-4
    assert auc_err < 1e-12
    assert auc >= 0.95


def test_criterion_8_entropy_reduction(config):
    started = time.perf_counter()
    _, result = run_check_theorem(config)
    elapsed = time.perf_counter() - started
    passed = result.passed and result.trials >= 1000 and elapsed < 10.0
    report("8 entropy reduction", passed,
           f"{result.trials} joints, {result.violations} violations, "
           f"{result.strict_failures} strict failures, {elapsed:.2f}s")
    assert result.trials >= 1000
    assert result.violations == 0
    assert result.strict_failures == 0
    assert elapsed < 10.0


def test_criterion_9_reproducibility(tmp_path_factory):
    artifacts = ("target.model.json", "draft.model.json", "dataset.jsonl",
                 "dataset.summary.json", "verifier.json", "traces.jsonl",
                 "report.jsonl", "report.txt", "resolved_config.json",
                 "check_theorem.json")
    outs = []
    for name in ("first", "second"):
        out = tmp_path_factory.mktemp(f"repro_{name}")
        cfg = PipelineConfig(out_dir=str(out), seed=0)
        run_train_models(cfg)
        run_gen_labels(cfg)
        run_train_judge(cfg)
        run_eval(cfg, ("rejection", "judge"))
        run_check_theorem(cfg)
        outs.append(out)
    a, b = outs
    diffs = [rel for rel in artifacts if (a / rel).read_bytes() != (b / rel).read_bytes()]
    report("9 reproducibility", not diffs,
           f"{len(artifacts)} artifacts byte-compared, diffs={diffs or 'none'}")
    assert not diffs

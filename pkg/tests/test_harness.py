"""Harness contracts: metric arithmetic, model selection, the sequential
baseline, experiment orchestration, and report/summary outputs."""

import json
import math

import numpy as np
import pytest

from latopt.data import GeneratorConfig, prepare_transfer_pair
from latopt.harness import (
    ExperimentSpec,
    MetricsReport,
    _splits,
    analyze,
    run_experiment,
    select_model,
    sequential_finetune,
    summary_rows,
    SUMMARY_COLUMNS,
)
from latopt.metrics import f_score, paired_sign_test, spearman_rank_correlation
from latopt.model import ModelConfig, init_params
from latopt.training import TrainingConfig

FAST_GEN = GeneratorConfig(source_train_size=320, target_train_size=160, test_size=96, seed=21)
FAST_MODEL = ModelConfig(vocab_size=4096, embed_dim=8, latent_dim=8)


@pytest.fixture(scope="module")
def fast_pair():
    return prepare_transfer_pair(FAST_GEN)


def test_f_score_all_correct():
    f, r, p = f_score([1, 0, 1, 0], [1, 0, 1, 0])
    assert (f, r, p) == (1.0, 1.0, 1.0)


def test_f_score_no_positive_predictions():
    f, r, p = f_score([0, 0, 0], [1, 0, 1])
    assert (f, r, p) == (0.0, 0.0, 0.0)


def test_f_score_hand_counted():
    # TP=3, FP=1, FN=2
    preds = [1, 1, 1, 1, 0, 0, 0]
    labels = [1, 1, 1, 0, 1, 1, 0]
    f, r, p = f_score(preds, labels)
    assert abs(p - 0.75) < 1e-12
    assert abs(r - 0.6) < 1e-12
    assert abs(f - 2 * 0.45 / 1.35) < 1e-12


def test_f_score_length_mismatch():
    with pytest.raises(ValueError):
        f_score([1, 0], [1])


def test_f_score_harmonic_identity_random():
    rng = np.random.default_rng(1)
    for _ in range(100):
        preds = rng.integers(0, 2, 20)
        labels = rng.integers(0, 2, 20)
        f, r, p = f_score(preds, labels)
        if p + r > 0:
            assert abs(f - 2 * p * r / (p + r)) < 1e-12


def test_sign_test_values():
    assert paired_sign_test([1, 1, 1], [0, 0, 0]) == pytest.approx(0.25)
    assert paired_sign_test([1, 1], [1, 1]) == 1.0
    # 9/10 wins: two-sided binomial
    a = [1.0] * 9 + [0.0]
    b = [0.0] * 9 + [1.0]
    expected = 2 * (math.comb(10, 0) + math.comb(10, 1)) / 2**10
    assert paired_sign_test(a, b) == pytest.approx(expected)


def test_spearman_perfect_and_reversed():
    assert spearman_rank_correlation([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert spearman_rank_correlation([1, 2, 3], [3, 1, 0]) == pytest.approx(-1.0)


def test_select_model_rules():
    with pytest.raises(ValueError):
        select_model([], [])
    assert select_model(["a"], [0.3]) == 0
    assert select_model(list("abcd"), [0.3, 0.5, 0.5, 0.4]) == 1  # earliest max
    assert select_model(list("abc"), [0.1, 0.2, 0.3]) == 2


def test_sequential_finetune_zero_phase_one(fast_pair):
    src, tgt = fast_pair
    ss, ts = _splits(src), _splits(tgt)
    config = TrainingConfig(lr=2e-3, batch_size=32, epochs=2)
    init = init_params(FAST_MODEL, 0)

    selected, run, epoch = sequential_finetune(init, ss, ts, config, seed=0, phase1_epochs=0)
    base = init.copy()
    from latopt.training import train_run

    run_direct = train_run("single:target", base, ss, ts, config, seed=1)
    assert run.dev_f == run_direct.dev_f  # phase 2 seed offset matches
    sel_direct = run_direct.checkpoints[select_model(run_direct.checkpoints, run_direct.dev_f)]
    for name in selected.tensors:
        np.testing.assert_array_equal(selected.tensors[name], sel_direct.tensors[name])


def test_sequential_finetune_warm_start_helps_on_identical_domains(fast_pair):
    # with source == target, phase 2 should start from lower initial dev
    # loss than a fresh model, on average over seeds
    src, _ = fast_pair
    ss = _splits(src)
    config = TrainingConfig(lr=2e-3, batch_size=32, epochs=2)
    from latopt.metrics import f_score as _f
    from latopt.model import predict

    wins = 0
    for seed in range(5):
        init = init_params(FAST_MODEL, seed)
        selected, _, _ = sequential_finetune(init, ss, ss, config, seed=seed, phase1_epochs=2)

        dev = ss["dev"]
        seqs = [e[0] for e in dev]
        labels = np.array([e[1] for e in dev])
        f_warm = _f(predict(selected, seqs, "target"), labels)[0]
        f_fresh = _f(predict(init, seqs, "target"), labels)[0]
        wins += f_warm >= f_fresh
    assert wins >= 4


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(strategies=[])
    with pytest.raises(ValueError):
        ExperimentSpec(seeds=[])
    with pytest.raises(ValueError):
        ExperimentSpec(lr_grid=[])
    with pytest.raises(ValueError):
        ExperimentSpec(strategies=["adversary"])  # unknown name


def test_spec_json_roundtrip(tmp_path):
    spec = ExperimentSpec(strategies=["adv"], seeds=[0], lr_grid=[1e-3], generator=FAST_GEN)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_json()))
    loaded = ExperimentSpec.from_json(path)
    assert loaded.strategies == ["adv"]
    assert loaded.generator == FAST_GEN
    assert loaded.model == spec.model


def test_run_experiment_counts_and_outputs(tmp_path, fast_pair):
    src, tgt = fast_pair
    spec = ExperimentSpec(
        strategies=["adv", "adv+lo"],
        seeds=[0, 1],
        lr_grid=[1e-3, 3e-3],
        gamma=0.1,
        epochs=2,
        batch_size=32,
        model=FAST_MODEL,
    )
    reports, analysis = run_experiment(spec, out_dir=tmp_path, source=src, target=tgt)
    assert len(reports) == 4  # 2 strategies x 2 seeds
    assert analysis["n_failed"] == 0
    assert "adv+lo vs adv" in analysis["comparisons"]
    assert 0 <= analysis["comparisons"]["adv+lo vs adv"]["sign_test_p"] <= 1

    lines = (tmp_path / "reports.jsonl").read_text().strip().splitlines()
    assert len(lines) == 4
    header = (tmp_path / "summary.csv").read_text().splitlines()[0]
    assert header == ",".join(SUMMARY_COLUMNS)

    # lookahead variant inherits the base strategy's selected rate
    by = {(r.strategy, r.seed): r for r in reports}
    for seed in (0, 1):
        assert by[("adv+lo", seed)].lr == by[("adv", seed)].lr


def test_experiment_reproducible(fast_pair):
    src, tgt = fast_pair
    spec = ExperimentSpec(
        strategies=["mtl"], seeds=[3], lr_grid=[2e-3], epochs=2, batch_size=32, model=FAST_MODEL
    )
    r1, _ = run_experiment(spec, source=src, target=tgt)
    r2, _ = run_experiment(spec, source=src, target=tgt)
    a, b = r1[0], r2[0]
    assert (a.dev_f, a.test_f, a.test_r, a.test_p, a.selected_epoch) == (
        b.dev_f,
        b.test_f,
        b.test_r,
        b.test_p,
        b.selected_epoch,
    )


def test_failed_runs_are_recorded(fast_pair, monkeypatch):
    src, tgt = fast_pair
    spec = ExperimentSpec(
        strategies=["mtl"], seeds=[0], lr_grid=[1e-3], epochs=1, batch_size=32, model=FAST_MODEL
    )
    from latopt import harness
    from latopt.training import TrainingAborted

    def boom(*args, **kwargs):
        raise TrainingAborted("mtl", 0, 0, "synthetic failure")

    monkeypatch.setattr(harness, "train_run", boom)
    reports, analysis = run_experiment(spec, source=src, target=tgt)
    assert len(reports) == 1
    assert reports[0].failed and "synthetic failure" in reports[0].error
    assert analysis["n_failed"] == 1


def test_summary_relative_columns(fast_pair):
    spec = ExperimentSpec(
        strategies=["adv", "adv+lo", "adv+maml", "mtl+lo"],
        seeds=[0],
        lr_grid=[1e-3],
        batch_size=32,
        model=FAST_MODEL,
    )
    wb = init_params(FAST_MODEL, 0).size_of("w_b")
    quantum = 2 * spec.batch_size * FAST_MODEL.latent_dim
    reports = [
        MetricsReport("adv", 0, 1e-3, 0.5, 0.5, 0.5, 0.5, 1, 100.0, 0),
        MetricsReport("adv+lo", 0, 1e-3, 0.5, 0.5, 0.5, 0.5, 1, 150.0, quantum),
        MetricsReport("adv+maml", 0, 1e-3, 0.5, 0.5, 0.5, 0.5, 1, 400.0, wb),
        MetricsReport("mtl+lo", 0, 1e-3, 0.5, 0.5, 0.5, 0.5, 1, 90.0, quantum),
    ]
    rows = {r["strategy"]: r for r in summary_rows(spec, reports)}
    assert rows["adv"]["rel_time"] == 1.0 and rows["adv"]["rel_state"] == 1.0
    assert rows["adv+lo"]["rel_time"] == 1.5
    assert rows["adv+lo"]["rel_state"] == 1.0  # latent lookahead stays in the quantum
    assert rows["adv+maml"]["rel_state"] == pytest.approx((wb + quantum) / quantum)
    assert rows["mtl+lo"]["rel_state"] == 1.0


def test_thread_env_reproduces_serial_reports(fast_pair, monkeypatch):
    src, tgt = fast_pair
    spec = ExperimentSpec(
        strategies=["mtl", "adv"], seeds=[0, 1], lr_grid=[2e-3], epochs=1, batch_size=32, model=FAST_MODEL
    )
    serial, _ = run_experiment(spec, source=src, target=tgt)
    monkeypatch.setenv("LATOPT_THREADS", "2")
    threaded, _ = run_experiment(spec, source=src, target=tgt)
    for a, b in zip(serial, threaded):
        assert (a.strategy, a.seed, a.dev_f, a.test_f, a.selected_epoch) == (
            b.strategy,
            b.seed,
            b.dev_f,
            b.test_f,
            b.selected_epoch,
        )


def test_analyze_mean_and_std():
    spec = ExperimentSpec(strategies=["adv"], seeds=[0, 1], lr_grid=[1e-3])
    reports = [
        MetricsReport("adv", 0, 1e-3, 0.5, 0.6, 0.5, 0.5, 1, 10.0, 0),
        MetricsReport("adv", 1, 1e-3, 0.5, 0.8, 0.5, 0.5, 1, 10.0, 0),
    ]
    out = analyze(spec, reports)
    assert out["strategies"]["adv"]["mean_test_f"] == pytest.approx(0.7)
    assert out["strategies"]["adv"]["std_test_f"] == pytest.approx(0.1)

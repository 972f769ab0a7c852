"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. Every grid here is
synth-generated; no extracted bundles are required.
"""

import json
import math
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np

from oms_bench import (
    EvalSetting,
    MonitorConfig,
    ScoreVector,
    SynthConfig,
    evaluate_binary,
    fit,
    generate,
    label_ground_truth,
    optimal_f1_threshold,
    score,
    simulate_perfect_ood,
    wilcoxon_one_sided,
)
from oms_bench.cli import eval_split

from conftest import make_bundle, make_head, make_split
from oracles import brute_force_best_f1, enumerate_wilcoxon_p


def check(name: str, ok: bool, detail: str = "") -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def novelty_config(seed, **overrides):
    base = dict(
        seed=seed, num_classes=4, dim=6, n_train=50, n_test=25, class_sep=2.0,
        sigma=0.8, ood_kind="novelty", ood_shift=8.0, outlier_fraction=0.02,
    )
    base.update(overrides)
    return SynthConfig(**base)


def test_novelty_precision_theorem():
    started = time.monotonic()
    for seed in range(2000, 2020):
        cfg = novelty_config(seed, sigma=0.3 + 0.03 * (seed % 7), n_train=30, n_test=20)
        report = simulate_perfect_ood(generate(cfg))
        assert report.precision == 1.0, f"seed {seed}: precision {report.precision}"
    elapsed = time.monotonic() - started
    check(
        "novelty-precision theorem: perfect-OOD precision == 1.0 on 20 novelty bundles",
        elapsed < 10.0,
        f"{elapsed:.2f}s",
    )


def test_false_sense_of_safety():
    recalls = []
    error_rates = []
    for seed in range(1000, 1020):
        bundle = generate(novelty_config(seed))
        report = simulate_perfect_ood(bundle)
        # independent direct count: rejected = the ood split, so the only
        # undetected OMS positives are the test_id errors
        id_errors = int(np.count_nonzero(bundle.test_id.predictions != bundle.test_id.labels))
        n_ood = len(bundle.ood)
        oracle_recall = n_ood / (n_ood + id_errors)
        assert report.recall == oracle_recall, f"seed {seed}"
        recalls.append(report.recall)
        error_rates.append(id_errors / len(bundle.test_id))
    median = float(np.median(recalls))
    check(
        "false-sense-of-safety: median perfect-OOD OMS recall in (0.80, 0.95)",
        0.80 < median < 0.95,
        f"median={median:.4f}, mean ID error={np.mean(error_rates):.2%}",
    )


def test_threshold_oracle_equivalence():
    rng = np.random.default_rng(77)
    for i in range(1000):
        n = int(rng.integers(1, 201))
        scores = np.round(rng.normal(size=n), 3)
        positives = rng.random(n) < rng.random()
        truth_positives = positives.astype(bool)
        from oms_bench.evaluation import GroundTruth

        truth = GroundTruth(positives=truth_positives, n_test_id=n, n_ood=0)
        tau, report = optimal_f1_threshold(ScoreVector(scores=scores), truth)
        _, oracle_f1 = brute_force_best_f1(scores, truth_positives, extra_grid=25)
        got = 0.0 if math.isnan(report.f1) else report.f1
        assert got == oracle_f1, f"instance {i}: {got} != {oracle_f1}"
        rejected = scores > tau
        assert report.tp == int(np.count_nonzero(rejected & truth_positives))
    check("threshold search equals dense brute force on 1000 instances (bit-equal F1)", True)


def test_wilcoxon_oracle_equivalence():
    spot3 = wilcoxon_one_sided(np.array([1.0, 2.0, 3.0]), np.zeros(3))
    spot5 = wilcoxon_one_sided(np.arange(1.0, 6.0), np.zeros(5))
    assert spot3 == 1 / 8 and spot5 == 1 / 32
    rng = np.random.default_rng(88)
    for n in range(1, 13):
        for _ in range(5):
            diffs = rng.normal(size=n)
            while len(np.unique(np.abs(diffs))) != n or (diffs == 0).any():
                diffs = rng.normal(size=n)
            got = wilcoxon_one_sided(diffs, np.zeros(n))
            want = enumerate_wilcoxon_p(diffs, np.zeros(n))
            assert got == want, f"n={n}"
    check("Wilcoxon exact DP equals full 2^n enumeration (n <= 12; spots 1/8, 1/32)", True)


def test_monitor_math_suite():
    started = time.monotonic()

    # msp on uniform logits scores 1 - 1/K
    for k in (2, 4, 7):
        head = make_head(np.zeros((k, 3)), np.zeros(k))
        split = make_split(np.ones((3, 3)), [0, 0, 0], [0, 0, 0])
        bundle = make_bundle(split, split, split, head)
        sv = score(fit(bundle, MonitorConfig(kind="msp")), split, head)
        assert np.allclose(sv.scores, 1.0 - 1.0 / k, atol=1e-12)

    # logit shift: msp unchanged, energy shifted by exactly -gamma*T at T=1
    # (gamma is dyadic so its f32 storage adds exactly gamma to every logit)
    bundle = generate(novelty_config(4242, sigma=0.5))
    gamma = 0.375
    shifted = make_head(bundle.head.weights, bundle.head.bias + np.float32(gamma))
    msp_model = fit(bundle, MonitorConfig(kind="msp"))
    assert (
        np.abs(
            score(msp_model, bundle.test_id, shifted).scores
            - score(msp_model, bundle.test_id, bundle.head).scores
        ).max()
        <= 1e-9
    )
    energy_model = fit(bundle, MonitorConfig(kind="energy", energy_temperature=1.0))
    delta = (
        score(energy_model, bundle.test_id, shifted).scores
        - score(energy_model, bundle.test_id, bundle.head).scores
    )
    assert np.abs(delta + gamma * 1.0).max() <= 1e-9

    # react degeneracy: p=100 on the data that set the percentile, and c = +inf
    react = fit(bundle, MonitorConfig(kind="react_energy", react_percentile=100.0))
    base = fit(bundle, MonitorConfig(kind="energy"))
    assert (
        np.abs(
            score(react, bundle.train, bundle.head).scores
            - score(base, bundle.train, bundle.head).scores
        ).max()
        <= 1e-9
    )
    unclipped = replace(react, clip_threshold=float("inf"))
    assert np.array_equal(
        score(unclipped, bundle.ood, bundle.head).scores,
        score(base, bundle.ood, bundle.head).scores,
    )

    # mahalanobis == squared euclidean when the fitted covariance is I
    s = math.sqrt(2.0)
    star = np.array([[s, 0.0], [-s, 0.0], [0.0, s], [0.0, -s]])
    mean0, mean1 = np.array([8.0, 0.0]), np.array([0.0, 8.0])
    pts = np.concatenate([star + mean0, star + mean1]).astype(np.float32)
    head = make_head(np.eye(2), [0.0, 0.0])
    preds = np.argmax(pts @ head.weights.T, axis=1).astype(np.int32)
    train = make_split(pts, [0] * 4 + [1] * 4, preds)
    iso_bundle = make_bundle(train, train, train, head)
    model = fit(iso_bundle, MonitorConfig(kind="mahalanobis", covariance_ridge=0.0))
    probe = np.array([[9.5, 3.0], [-1.0, 2.0], [4.0, 4.0]], dtype=np.float32)
    sv = score(model, make_split(probe, [0, 0, 0], [0, 0, 0]), head)
    expected = np.minimum(
        ((probe.astype(np.float64) - mean0) ** 2).sum(1),
        ((probe.astype(np.float64) - mean1) ** 2).sum(1),
    )
    assert np.abs(sv.scores - expected).max() / expected.max() <= 1e-6

    # filtering can only shrink OtB boxes
    noisy = generate(novelty_config(997, outlier_fraction=0.05))
    plain = fit(noisy, MonitorConfig(kind="otb"))
    filtered = fit(noisy, MonitorConfig(kind="otb", filter_misclassified=True))
    for k in range(noisy.num_classes):
        pi = list(plain.box_classes).index(k)
        fi = list(filtered.box_classes).index(k)
        assert (filtered.box_lowers[fi] >= plain.box_lowers[pi]).all()
        assert (filtered.box_uppers[fi] <= plain.box_uppers[pi]).all()

    elapsed = time.monotonic() - started
    check("monitor math suite (msp/energy/react/mahalanobis/otb identities)", elapsed < 60.0, f"{elapsed:.2f}s")


def test_trick_study_directionality():
    recalls = {False: [], True: []}
    precisions = {False: [], True: []}
    for seed in range(5000, 5020):
        cfg = novelty_config(seed, sigma=0.4, n_train=150, n_test=40)
        bundle = generate(cfg)
        split = eval_split(bundle)
        truth = label_ground_truth(bundle, EvalSetting.OMS)
        for filtered in (False, True):
            model = fit(bundle, MonitorConfig(kind="otb", filter_misclassified=filtered))
            report = evaluate_binary(score(model, split, bundle.head), truth)
            recalls[filtered].append(report.recall)
            precisions[filtered].append(report.precision)
    mean_recall = {f: float(np.mean(v)) for f, v in recalls.items()}
    mean_precision = {f: float(np.mean(v)) for f, v in precisions.items()}
    p_recall = wilcoxon_one_sided(np.array(recalls[True]), np.array(recalls[False]))
    precision_gap = abs(mean_precision[True] - mean_precision[False])
    ok = (
        mean_recall[True] >= mean_recall[False]
        and p_recall <= 0.05
        and precision_gap <= 0.02
    )
    check(
        "trick study: filtered OtB recall up (p <= 0.05), precision within 0.02",
        ok,
        f"recall {mean_recall[False]:.4f}->{mean_recall[True]:.4f}, "
        f"p={p_recall:.3g}, |dprecision|={precision_gap:.4f}",
    )


def test_ood_vs_oms_divergence_regression():
    cfg = SynthConfig(
        seed=3, num_classes=3, dim=4, n_train=40, n_test=30, class_sep=2.0,
        sigma=0.8, ood_kind="covariate", ood_shift=2.0, outlier_fraction=0.0,
    )
    bundle = generate(cfg)
    split = eval_split(bundle)
    rankings = {}
    recalls_by_setting = {}
    for setting in (EvalSetting.OOD, EvalSetting.OMS):
        truth = label_ground_truth(bundle, setting)
        recalls = {}
        for kind in ("msp", "energy", "react_msp", "react_energy", "mahalanobis", "otb"):
            sv = score(fit(bundle, MonitorConfig(kind=kind)), split, bundle.head)
            report = evaluate_binary(sv, truth) if sv.binary else optimal_f1_threshold(sv, truth)[1]
            recalls[kind] = report.recall
        rankings[setting] = tuple(sorted(recalls, key=lambda m: (-recalls[m], m)))
        recalls_by_setting[setting] = recalls
    differs = rankings[EvalSetting.OOD] != rankings[EvalSetting.OMS]
    # concrete rank flip with wide margins: msp wins under OOD, loses under OMS
    ood, oms = recalls_by_setting[EvalSetting.OOD], recalls_by_setting[EvalSetting.OMS]
    flips = (ood["msp"] > ood["mahalanobis"]) and (oms["mahalanobis"] > oms["msp"])
    check(
        "OOD-vs-OMS divergence: recall ranking differs on the frozen scenario",
        differs and flips,
        f"OOD={rankings[EvalSetting.OOD]}, OMS={rankings[EvalSetting.OMS]}",
    )


def test_run_determinism(tmp_path):
    config = {
        "seed": 12,
        "scenarios": [
            {"synth": {"num_classes": 3, "dim": 4, "n_train": 30, "n_test": 15,
                       "class_sep": 2.0, "sigma": 0.6, "ood_kind": "novelty",
                       "ood_shift": 6.0, "outlier_fraction": 0.02}},
            {"synth": {"num_classes": 3, "dim": 4, "n_train": 30, "n_test": 15,
                       "class_sep": 2.0, "sigma": 0.5, "ood_kind": "covariate",
                       "ood_shift": 3.0}},
        ],
        "monitors": [
            {"kind": "msp"}, {"kind": "energy"}, {"kind": "react_msp"},
            {"kind": "react_energy"}, {"kind": "mahalanobis"}, {"kind": "otb"},
        ],
        "settings": ["OOD", "OMS"],
        "include_perfect_ood": True,
        "output_dir": "unused",
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))
    outputs = []
    for run_dir in ("r1", "r2"):
        result = subprocess.run(
            [sys.executable, "-m", "oms_bench", "run", "--config", str(config_path),
             "--out", str(tmp_path / run_dir)],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0, result.stderr
        outputs.append({f.name: f.read_bytes() for f in sorted((tmp_path / run_dir).iterdir())})
    check(
        "determinism: two identical `run` invocations write byte-identical reports",
        outputs[0] == outputs[1],
        f"{len(outputs[0])} files compared",
    )

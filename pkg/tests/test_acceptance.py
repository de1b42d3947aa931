"""Acceptance suite: one test per headline criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they are
also repeated in the terminal summary.
"""

import math
import resource
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from quadcal import baselines as B
from quadcal import calibration as C
from quadcal.metrics import balanced_accuracy, evaluate, nll
from quadcal.protocol import random_row
from quadcal.sim import OpKind, generate_tree, sample_pipelines, simulate_dataset
from quadcal.types import Label

from conftest import matched_fixture, matched_sweep, record_criterion, two_source_dataset


def test_01_corrected_logit_oracle():
    rng = np.random.default_rng(2024)
    n = 10_000
    l = rng.uniform(-20, 20, n)
    q = rng.uniform(0, 1, n)
    coefs = np.column_stack([rng.uniform(-5, 5, (n, 2)), rng.uniform(-3, 3, (n, 2)),
                             rng.uniform(-5, 5, (n, 2)), rng.uniform(-3, 3, (n, 2))])

    t0 = time.perf_counter()
    ours = np.empty(n)
    for i in range(n):
        model = C.CalibrationModel(C.ClassCoefficients(*coefs[i, :4]), C.ClassCoefficients(*coefs[i, 4:]), 0.0, 1.0)
        ours[i] = C.corrected_logit(l[i], q[i], model)
    elapsed = time.perf_counter() - t0

    mu0, s0 = coefs[:, 0] * q + coefs[:, 1], coefs[:, 2] * q + coefs[:, 3]
    mu1, s1 = coefs[:, 4] * q + coefs[:, 5], coefs[:, 6] * q + coefs[:, 7]
    oracle = stats.norm.logpdf(l, mu1, np.exp(s1 / 2)) - stats.norm.logpdf(l, mu0, np.exp(s0 / 2))
    err = np.max(np.abs(ours - oracle))

    # the vectorized scoring path must agree with the oracle too
    vec = np.array([C.corrected_logits([l[i]], [q[i]], C.CalibrationModel(
        C.ClassCoefficients(*coefs[i, :4]), C.ClassCoefficients(*coefs[i, 4:]), 0.0, 1.0))[0] for i in range(0, n, 10)])
    err_vec = np.max(np.abs(vec - oracle[::10]))

    ok = err < 1e-9 and err_vec < 1e-9 and elapsed < 1.0
    record_criterion(1, "corrected logit vs log-pdf ratio", ok,
                     f"max |err| {err:.2e} (vectorized {err_vec:.2e}), {elapsed:.2f} s for 10,000 draws")
    assert ok


TRUE_FAKE = (4.0, -1.0, -2.0, 0.5)
TRUE_REAL = (-3.0, 0.5, -1.0, 0.2)


def test_02_mle_recovery():
    t0 = time.perf_counter()
    good, worst = 0, []
    for seed in range(20):
        ds = two_source_dataset(np.random.default_rng(seed), TRUE_REAL, TRUE_FAKE, 10_000)
        model = C.fit(ds)
        dev = max(np.max(np.abs(model.real.theta - TRUE_REAL)), np.max(np.abs(model.fake.theta - TRUE_FAKE)))
        worst.append(float(dev))
        good += dev <= 0.1
    elapsed = time.perf_counter() - t0
    ok = good >= 18 and elapsed < 30
    record_criterion(2, "MLE coefficient recovery", ok,
                     f"{good}/20 seeds within 0.1 (largest deviations "
                     f"{', '.join(f'{d:.3f}' for d in sorted(worst)[-3:][::-1])}), "
                     f"{elapsed:.1f} s")
    assert ok


def test_03_gradient_check():
    rng = np.random.default_rng(3)
    l = rng.normal(0, 2, 300)
    q = rng.uniform(0, 1, 300)
    h = 1e-5
    worst = 0.0
    for _ in range(100):
        theta = rng.uniform(-2, 2, 4)
        g = C.class_nll_grad(theta, l, q)
        fd = np.empty(4)
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            fd[k] = (C.class_nll(theta + e, l, q) - C.class_nll(theta - e, l, q)) / (2 * h)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), np.linalg.norm(fd)))
    ok = worst < 1e-4
    record_criterion(3, "analytic vs finite-difference gradient", ok,
                     f"max relative error {worst:.2e} over 100 points")
    assert ok


def test_04_tree_structure():
    a = generate_tree("acceptance", Label.FAKE, 123)
    b = generate_tree("acceptance", Label.FAKE, 123)
    sizes = a.level_sizes()
    ok = len(a.near_duplicates) == 124 and sizes == [4, 8, 16, 32, 64] and a.to_json() == b.to_json()
    record_criterion(4, "degradation tree structure", ok,
                     f"{len(a.near_duplicates)} nodes, level sizes {sizes}, deterministic={a.to_json() == b.to_json()}")
    assert ok


def test_05_op_probabilities():
    t0 = time.perf_counter()
    pipes = sample_pipelines(np.random.default_rng(5), 100_000)
    counts = dict.fromkeys(OpKind, 0)
    in_range = True
    for pipe in pipes:
        for op in pipe:
            counts[op.kind] += 1
            if op.kind == OpKind.CROP:
                in_range &= 0.6 <= op.crop.keep_fraction <= 0.999 and 0 <= op.crop.offset_fraction <= 1
            elif op.kind == OpKind.RESIZE:
                in_range &= 256 <= op.resize.short_side <= 2048
            else:
                in_range &= 1 <= op.compress.qf <= 100 and op.compress.format in ("JPEG", "WEBP")
    elapsed = time.perf_counter() - t0
    rates = [counts[k] / 100_000 for k in (OpKind.CROP, OpKind.RESIZE, OpKind.COMPRESS)]
    ok = all(abs(r - p) <= 0.01 for r, p in zip(rates, (0.5, 0.6, 0.95))) and in_range and elapsed < 10
    record_criterion(5, "pipeline op probabilities", ok,
                     f"rates crop/resize/compress {rates[0]:.4f}/{rates[1]:.4f}/{rates[2]:.4f}, "
                     f"params in range={in_range}, {elapsed:.1f} s")
    assert ok


@pytest.mark.slow
def test_06_end_to_end_ordering():
    t0 = time.perf_counter()
    iqa10 = B.RankingStrategy("iqa", 10)
    acc = {m: [] for m in ("QuAD", "IQA10", "naive", "random")}
    nlls = {"QuAD": [], "naive": []}
    for seed in range(10):
        dev, _ = simulate_dataset(100, 100, seed=10_000 + seed)
        ev, _ = simulate_dataset(100, 100, seed=seed)
        model = C.fit(dev)
        b, n = evaluate(ev, lambda qs: C.fuse_corrected(qs, model))
        acc["QuAD"].append(b)
        nlls["QuAD"].append(n)
        acc["IQA10"].append(evaluate(ev, lambda qs: B.aggregate_topk(qs, iqa10, seed))[0])
        b, n = evaluate(ev, B.naive_mean)
        acc["naive"].append(b)
        nlls["naive"].append(n)
        acc["random"].append(random_row(ev, seed, reps=10).bacc)
    elapsed = time.perf_counter() - t0
    m = {k: float(np.mean(v)) for k, v in acc.items()}
    nq, nn = float(np.mean(nlls["QuAD"])), float(np.mean(nlls["naive"]))
    ok = (m["QuAD"] >= m["IQA10"] >= m["naive"] >= m["random"] and m["QuAD"] - m["naive"] >= 0.03
          and nq < nn and elapsed < 120)
    record_criterion(6, "end-to-end method ordering", ok,
                     f"bAcc QuAD {m['QuAD']:.3f} >= IQA10 {m['IQA10']:.3f} >= naive {m['naive']:.3f} >= "
                     f"random {m['random']:.3f}; NLL QuAD {nq:.3f} < naive {nn:.3f}; {elapsed:.0f} s")
    assert ok


def test_07_k_all_rankings_coincide():
    ev, _ = matched_fixture(0)
    results = {kind.value: evaluate(ev, lambda qs, k=kind: B.aggregate_topk(qs, B.RankingStrategy(k, B.ALL), 7))
               for kind in B.RankKind}
    naive = evaluate(ev, B.naive_mean)
    ok = all(r == naive for r in results.values())
    record_criterion(7, "k=ALL identical across rankings", ok,
                     f"{len(results)} rankings, distinct (bAcc, NLL) values: {len(set(results.values()) | {naive})}")
    assert ok


@pytest.mark.slow
def test_08_availability_sweep_direction():
    curves = matched_sweep()
    q1, q124 = curves["QuAD"][0], curves["QuAD"][-1]
    ok = q124 >= q1
    record_criterion(8, "QuAD improves with availability", ok,
                     f"10-seed mean bAcc at n=1 {q1:.3f}, at n=124 {q124:.3f}")
    assert ok


def test_09_metric_units():
    F, R = Label.FAKE, Label.REAL
    perfect = balanced_accuracy([(F, F), (R, R), (F, F), (R, R)])
    zero = nll([(0.0, F), (0.0, R), (0.0, F)])
    ok = perfect == 1.0 and zero == math.log(2)
    record_criterion(9, "metric unit examples", ok, f"perfect bAcc {perfect!r}, all-zero NLL {zero!r} (ln 2 = {math.log(2)!r})")
    assert ok


@pytest.mark.slow
def test_10_full_scale_smoke(tmp_path):
    run = [sys.executable, "-m", "quadcal.cli"]
    steps = [
        ["simulate", "--out", str(tmp_path), "--n-real", "100", "--n-fake", "1000", "--seed", "0"],
        ["fit", str(tmp_path / "dataset.csv"), "--out", str(tmp_path / "model.json"), "--min-short-side", "0"],
        ["evaluate", str(tmp_path / "dataset.csv"), "--model", str(tmp_path / "model.json"),
         "--min-short-side", "0", "--out-json", str(tmp_path / "report.json")],
    ]
    t0 = time.perf_counter()
    peak_kb = 0
    for argv in steps:
        before = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss
        proc = subprocess.run(run + argv, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        peak_kb = max(peak_kb, resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss, before)
    elapsed = time.perf_counter() - t0
    rows = sum(1 for _ in open(tmp_path / "dataset.csv")) - 1
    peak_mb = peak_kb / 1024
    ok = rows == 136_400 and elapsed < 300 and peak_mb < 2048
    record_criterion(10, "full-scale simulate + fit + evaluate", ok,
                     f"{rows} rows, {elapsed:.0f} s wall, peak child RSS {peak_mb:.0f} MB")
    assert ok

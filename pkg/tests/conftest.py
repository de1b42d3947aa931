import functools

import numpy as np
import pytest

from quadcal.calibration import CalibrationModel, ClassCoefficients
from quadcal.types import Dataset, ImageFormat, InstanceMeta, InstanceRecord, Label, QuerySet


def make_set(source_id, logits, label=Label.FAKE, qualities=None, metas=None):
    qualities = qualities if qualities is not None else [0.5] * len(logits)
    metas = metas if metas is not None else [InstanceMeta()] * len(logits)
    recs = tuple(
        InstanceRecord(source_id, f"i{i:03d}", float(l), float(q), label, m)
        for i, (l, q, m) in enumerate(zip(logits, qualities, metas))
    )
    return QuerySet(source_id, recs, label)


def identity_model():
    """Constant unit-variance classes at -1/2 and +1/2, so corrected logit == raw logit."""
    return CalibrationModel(
        real=ClassCoefficients(0.0, -0.5, 0.0, 0.0),
        fake=ClassCoefficients(0.0, 0.5, 0.0, 0.0),
        q_min=0.0, q_max=1.0,
    )


def draw_class(rng, coefs, n):
    q = rng.uniform(0.0, 1.0, n)
    mu = coefs[0] * q + coefs[1]
    sd = np.exp(0.5 * (coefs[2] * q + coefs[3]))
    return rng.normal(mu, sd), q


def two_source_dataset(rng, real, fake, n):
    """One source per class holding ``n`` synthetic draws from the given coefficients."""
    sets = []
    for label, coefs in ((Label.REAL, real), (Label.FAKE, fake)):
        l, q = draw_class(rng, coefs, n)
        sets.append(make_set(label.name.lower(), l, label, q))
    return Dataset(tuple(sets))


@pytest.fixture
def small_labeled():
    rng = np.random.default_rng(7)
    sets = []
    for i in range(6):
        label = Label.FAKE if i % 2 else Label.REAL
        sign = 1 if label == Label.FAKE else -1
        q = rng.uniform(0, 1, 12)
        l = sign * (1 + 2 * q) + rng.normal(0, 0.5, 12)
        metas = [InstanceMeta(width=1000 + 10 * j, height=800, jpeg_qf=60 + j, format=ImageFormat.JPEG,
                              timestamp=1e9 + j) for j in range(12)]
        sets.append(make_set(f"s{i}", l, label, q, metas))
    return Dataset(tuple(sets))


MATCHED_SEEDS = range(10)


@functools.lru_cache(maxsize=None)
def matched_fixture(seed):
    """200-source eval fixture for ``seed`` and a model fitted on an independent dev fixture."""
    from quadcal.calibration import fit
    from quadcal.sim import simulate_dataset
    dev, _ = simulate_dataset(100, 100, seed=10_000 + seed)
    ev, _ = simulate_dataset(100, 100, seed=seed)
    return ev, fit(dev)


@functools.lru_cache(maxsize=None)
def matched_sweep(grid=(1, 2, 4, 8, 16, 32, 64, 124), reps=10):
    """Seed-averaged availability sweep: {method: array of bacc over ``grid``}."""
    from quadcal.protocol import availability_sweep
    total = {}
    for seed in MATCHED_SEEDS:
        ev, model = matched_fixture(seed)
        for p in availability_sweep(ev, model, grid=grid, reps=reps, seed=seed):
            total.setdefault(p.method, np.zeros(len(grid)))[grid.index(p.n)] += p.bacc
    return {m: v / len(MATCHED_SEEDS) for m, v in total.items()}


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    """Print and remember one PASS/FAIL line for an acceptance criterion."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)

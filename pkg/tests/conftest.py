"""Session fixtures for the expensive default pipeline (22 simulated runs,
the pooled dataset, a 50-tree forest) and the acceptance summary."""

import time

import pytest

from exoshape.estimator import ablate_stretch, fit_forest
from exoshape.harness.cli import forest_seed
from exoshape.plant import ExoModel
from exoshape.protocol import VirtualSubject, build_dataset, default_runs, run_experiment

SEED = 0
TIMINGS = {}
ACCEPTANCE = []


def _timed(name, fn):
    t0 = time.perf_counter()
    out = fn()
    TIMINGS[name] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def default_logs():
    subject = VirtualSubject()
    exo = ExoModel(m_e=0.1, m_he=0.1 + subject.p.m_h)
    return _timed("simulate", lambda: [run_experiment(s, subject, exo) for s in default_runs(SEED)])


@pytest.fixture(scope="session")
def default_dataset(default_logs):
    return _timed("dataset", lambda: build_dataset(default_logs, SEED, 5))


@pytest.fixture(scope="session")
def default_model(default_dataset):
    X, y = default_dataset.train
    return _timed("fit", lambda: fit_forest(X, y, 50, 10, 5, forest_seed(SEED)))


@pytest.fixture(scope="session")
def default_ablation(default_dataset, default_model):
    return _timed("ablation", lambda: ablate_stretch(
        default_dataset.train, default_dataset.val, trees=50, depth=10, min_leaf=5,
        seed=forest_seed(SEED), full_model=default_model))


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line; the caller still asserts."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number} {title}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
        ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)

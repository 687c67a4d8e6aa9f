"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Criterion 8 runs the full default preset (11 head restarts) and the
specialist preset through the CLI; criterion 9 reruns the default preset
and compares CSV bytes. Together they take a few minutes on one core.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from idealdefer.cli import main
from idealdefer.experiment import curves_from_csv
from idealdefer import verify

SEED = 7


def report(number, ok, summary):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {summary}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def timed(func, **kwargs):
    start = time.perf_counter()
    ok, detail = func(**kwargs)
    return ok, detail, time.perf_counter() - start


@pytest.mark.parametrize("number, func, kwargs, budget, label", [
    (1, verify.check_chow_marginal, dict(instances=200), 5.0, "marginal rule equals converted Chow"),
    (2, verify.check_joint_containment, dict(instances=200), 5.0, "joint deferral inside tilted Chow"),
    (3, verify.check_jensen_sandwich, dict(instances=500, slack=1e-9), 10.0,
     "marginal <= joint and gap sandwich"),
    (4, verify.check_gamma_limits, dict(gamma=1e-6, rtol=1e-4), 1.0, "small-temperature limits"),
    (5, verify.check_phi_ratio, dict(instances=100, atol=1e-8), 5.0, "phi ratio vs KL weights"),
    (6, verify.check_lemma5, dict(tuples=10_000), 1.0, "ratio and scorer thresholds agree"),
    (7, verify.check_gradients, dict(points=100, rtol=1e-5), 30.0, "analytic vs finite-difference"),
])
def test_property_criterion(number, func, kwargs, budget, label):
    ok, detail, seconds = timed(func, **kwargs)
    passed = bool(ok) and seconds < budget
    report(number, passed, f"{label} ({seconds:.2f}s of {budget:.0f}s) {detail}")
    assert ok, detail
    assert seconds < budget


@pytest.fixture(scope="session")
def benchmark(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    start = time.perf_counter()
    assert main(["run", "--preset", "default", "--seed", str(SEED),
                 "--out", str(root / "default")]) == 0
    assert main(["run", "--preset", "specialist", "--seed", str(SEED),
                 "--out", str(root / "specialist")]) == 0
    seconds = time.perf_counter() - start
    load = lambda name: {c.method: c for c in
                         curves_from_csv((root / name / "curves.csv").read_text())}
    return {"root": root, "seconds": seconds, "default": load("default"),
            "specialist": load("specialist")}


def test_criterion_8a_beats_random(benchmark):
    dr, rnd = benchmark["default"]["drcpe"], benchmark["default"]["random"]
    margin = dr.accuracies - (rnd.accuracies - dr.stds)
    ok = bool(np.all(margin >= 0))
    report("8a", ok, f"min DR - (random - std) = {margin.min():+.4f}")
    assert ok


def test_criterion_8b_specialist_gap(benchmark):
    curves = benchmark["specialist"]
    dr, conf = curves["drcpe"].at(0.25), curves["conf"].at(0.25)
    gap = dr.accuracy - conf.accuracy
    ok = gap >= dr.std
    report("8b", ok, f"DR {dr.accuracy:.4f} - Conf {conf.accuracy:.4f} = {gap:+.4f}, "
                     f"std {dr.std:.4f}")
    assert ok


def test_criterion_8c_close_to_oracle(benchmark):
    dr, oracle = benchmark["default"]["drcpe"], benchmark["default"]["chow-oracle"]
    dev = np.abs(dr.accuracies - oracle.accuracies)
    ok = bool(np.all(dev <= 0.02))
    report("8c", ok, f"max |DR - oracle| = {dev.max():.4f}")
    assert ok


def test_criterion_8_runtime(benchmark):
    ok = benchmark["seconds"] < 600
    report("8-runtime", ok, f"default + specialist in {benchmark['seconds']:.0f}s of 600s")
    assert ok


def test_criterion_9_determinism(benchmark):
    root = benchmark["root"]
    assert main(["run", "--preset", "default", "--seed", str(SEED),
                 "--out", str(root / "again")]) == 0
    first = (root / "default" / "curves.csv").read_bytes()
    second = (root / "again" / "curves.csv").read_bytes()
    ok = first == second
    report(9, ok, f"run --seed {SEED} twice, {len(first)} CSV bytes, identical={ok}")
    assert ok

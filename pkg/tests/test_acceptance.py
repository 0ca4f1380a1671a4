"""End-to-end acceptance checks, one test group per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary prints a
PASS/FAIL line for each criterion. Thresholds are the stated ones; observed
values are printed (``-s``) so a failing run shows how far off it was.
"""
import hashlib
import time

import numpy as np
import pytest

from advconf.attack import STATIONARY, AttackParams, batch_evade, evade
from advconf.encoding import build_encoder, configs_equal, encode, project
from advconf.loop import ORACLE_LABEL, SOURCE_LABEL, LoopParams, run_adversarial_loop, run_random_loop
from advconf.oracle import make_scenario
from advconf.rules import distill_tree, extract_constraints, inject_constraints
from advconf.svm import SvmModel, TrainParams, evaluate, gradient, train_svm
from advconf.varmodel import parse_model, sample_valid, serialize_model, validate

from .oracles import central_difference, grid_search_dual_1d, kkt_violations

crit = pytest.mark.criterion


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# 1. gradient correctness

@crit(1, "analytic gradient matches central differences on 100 random rbf models (< 10 s)")
def test_gradient_correctness():
    def run():
        rng = np.random.default_rng(2024)
        worst = 0.0
        for i in range(100):
            d = (2, 10, 50)[i % 3]
            k = int(rng.integers(1, 21))
            m = SvmModel(rng.random((k, d)), rng.normal(size=k), float(rng.normal()), "rbf",
                         float(rng.uniform(0.1, 5.0) / d), d)
            for x in rng.random((10, d)):
                g = gradient(m, x)
                fd = central_difference(m.decision, x, h=1e-5)
                norm = np.linalg.norm(g)
                if norm < 1e-6:
                    assert np.linalg.norm(g - fd) < 1e-7
                else:
                    rel = np.linalg.norm(g - fd) / norm
                    worst = max(worst, rel)
                    assert rel < 1e-4
        return worst

    worst, secs = timed(run)
    print(f"worst relative error {worst:.2e}, {secs:.2f} s")
    assert secs < 10


# 2. SMO correctness

@crit(2, "SMO reproduces the dual-QP oracle, fits XOR, meets KKT on 20 datasets (< 30 s)")
def test_smo_two_point_oracle():
    X, y = np.array([[0.0], [1.0]]), np.array([-1, 1])
    ref = grid_search_dual_1d(X[:, 0], y, C=1.0)
    m = train_svm(X, y, TrainParams(kernel="linear", C=1.0))
    assert list(m.predict(X)) == ref["predictions"] == [-1, 1]


@crit(2, "SMO reproduces the dual-QP oracle, fits XOR, meets KKT on 20 datasets (< 30 s)")
def test_smo_xor():
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
    y = np.array([-1, -1, 1, 1])
    m = train_svm(X, y, TrainParams(kernel="rbf", gamma=1.0, C=10.0))
    assert list(m.predict(X)) == list(y)
    assert evaluate(m, X, y).error_rate == 0.0


def separable_2d(seed, n=40):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=2)
    X = rng.random((n * 4, 2))
    s = X @ w - np.median(X @ w)
    keep = np.abs(s) > 0.05 * np.linalg.norm(w)
    X, s = X[keep][:n], s[keep][:n]
    return X, np.where(s > 0, 1, -1)


@crit(2, "SMO reproduces the dual-QP oracle, fits XOR, meets KKT on 20 datasets (< 30 s)")
def test_smo_kkt_twenty_datasets():
    def run():
        for seed in range(20):
            X, y = separable_2d(seed)
            assert len(X) == 40 and len(set(y)) == 2
            p = TrainParams(seed=seed)
            m = train_svm(X, y, p)
            assert kkt_violations(m, X, y, p.C, p.tol) == [], f"dataset {seed}"

    _, secs = timed(run)
    print(f"20 datasets in {secs:.2f} s")
    assert secs < 30


# 3. attack mechanics

LINE = SvmModel(np.array([[1.0]]), np.array([2.0]), -1.0, "linear", 0.0, 1)  # g(x) = 2x - 1


@crit(3, "hand trace, box, frozen features and stationary start")
def test_attack_hand_trace():
    t = evade(LINE, [0.9], AttackParams(target=-1, step=0.002, iterations=100))
    xs = [0.9]
    for _ in range(100):
        xs.append(min(max(xs[-1] - 0.002, 0.0), 1.0))
    np.testing.assert_array_equal(t.points[:, 0], xs)
    assert abs(t.points[-1, 0] - 0.7) < 1e-12


@crit(3, "hand trace, box, frozen features and stationary start")
def test_attack_box_and_frozen():
    rng = np.random.default_rng(3)
    m = SvmModel(rng.random((8, 5)), rng.normal(size=8), 0.1, "rbf", 3.0, 5)
    for target in (1, -1):
        traces = batch_evade(m, rng.random((30, 5)),
                             AttackParams(target=target, step=0.05, iterations=60, frozen_features=frozenset({1, 3})))
        for t in traces:
            assert np.all((t.points >= 0.0) & (t.points <= 1.0))
            assert np.all(t.points[:, [1, 3]] == t.points[0, [1, 3]])


@crit(3, "hand trace, box, frozen features and stationary start")
def test_attack_stationary():
    bump = SvmModel(np.array([[0.5, 0.5]]), np.array([1.0]), -0.5, "rbf", 1.0, 2)
    t = evade(bump, [0.5, 0.5], AttackParams())
    assert t.status == STATIONARY and t.moves == 0


# 4. attack effectiveness

def band_setup(seed=42, n=200):
    s = make_scenario("band2d", seed)
    enc = build_encoder(s.model)
    configs = sample_valid(s.model, n, seed)
    X = enc.transform(configs)
    y = np.array(s.oracle.label_many(configs))
    return s, enc, X, y


@pytest.fixture(scope="module")
def effectiveness():
    def run():
        _, _, X, y = band_setup()
        m = train_svm(X, y, TrainParams())
        neg = np.flatnonzero(y == -1)
        picks = np.random.default_rng(42).choice(neg, 100, replace=len(neg) < 100)
        return batch_evade(m, X[picks], AttackParams())

    traces, secs = timed(run)
    gain = np.mean([t.gain(1) > 0 for t in traces])
    cross = np.mean([t.crossed(1) for t in traces])
    print(f"\nattack effectiveness: gain {gain:.2f}, cross {cross:.2f}, {secs:.2f} s")
    return gain, cross, secs


@crit(4, "band2d attacks: >= 80% raise g, >= 50% cross the boundary (< 30 s)")
def test_attack_effectiveness_gain(effectiveness):
    gain, _, secs = effectiveness
    assert gain >= 0.80
    assert secs < 30


@crit(4, "band2d attacks: >= 80% raise g, >= 50% cross the boundary (< 30 s)")
def test_attack_effectiveness_cross(effectiveness):
    _, cross, _ = effectiveness
    assert cross >= 0.50


@crit(4, "band2d attacks: >= 80% raise g, >= 50% cross the boundary (< 30 s)")
def test_attack_effectiveness_regression(effectiveness):
    # frozen from the first recorded run
    gain, cross, _ = effectiveness
    assert (round(gain * 100), round(cross * 100)) == (100, 29)


# 5. loop improvement

@pytest.fixture(scope="module")
def band_loops():
    p = dict(rounds=20, attacks_per_round=10, seed=42, holdout_size=500)
    t0 = time.perf_counter()
    oracle = run_adversarial_loop(make_scenario("band2d", 42), 200, TrainParams(), LoopParams(labeling=ORACLE_LABEL, **p))
    source = run_adversarial_loop(make_scenario("band2d", 42), 200, TrainParams(), LoopParams(labeling=SOURCE_LABEL, **p))
    secs = time.perf_counter() - t0
    print("\noracle_label disagreement:", [round(v, 3) for v in oracle.column("disagreement")])
    print("source_label disagreement:", [round(v, 3) for v in source.column("disagreement")])
    return oracle, source, secs


@crit(5, "band2d oracle-labelled loop cuts holdout disagreement by >= 20% in 20 rounds (< 2 min)")
def test_loop_improvement(band_loops):
    oracle, _, _ = band_loops
    d = oracle.column("disagreement")
    assert oracle.status == "ok" and len(d) == 21
    print(f"relative drop {1 - d[-1] / d[0]:.3f}")
    assert d[-1] <= 0.8 * d[0]


@crit(5, "band2d oracle-labelled loop cuts holdout disagreement by >= 20% in 20 rounds (< 2 min)")
def test_loop_source_label_curve(band_loops):
    _, source, secs = band_loops
    assert source.status == "ok" and len(source.rows) == 21
    assert all(0.0 <= v <= 1.0 for v in source.column("disagreement"))
    assert secs < 120


# 6. full-scale run

@crit(6, "motivlike80 default-parameter loop: final size init + 1000, same hash twice (< 15 min)")
def test_full_scale_run():
    hashes = []
    for _ in range(2):
        t0 = time.perf_counter()
        r = run_adversarial_loop(make_scenario("motivlike80", 1), 200, TrainParams(), LoopParams(seed=1))
        secs = time.perf_counter() - t0
        assert r.status == "ok"
        assert r.rows[-1].train_size == 200 + 1000
        hashes.append(hashlib.sha256(r.to_csv().encode()).hexdigest())
        print(f"\nfull-scale run {secs:.1f} s, hash {hashes[-1][:16]}")
        assert secs < 15 * 60
    assert hashes[0] == hashes[1]


# 7. round trips

@crit(7, "encode/project identity on 1000 configs per scenario; byte-stable JSON")
@pytest.mark.parametrize("name, seed", [("band2d", 0), ("motivlike80", 1)])
def test_round_trips(name, seed):
    s = make_scenario(name, seed)
    enc = build_encoder(s.model)
    for c in sample_valid(s.model, 1000, seed + 7):
        assert configs_equal(s.model, project(enc, encode(enc, c)), c)
    text = serialize_model(s.model)
    assert serialize_model(parse_model(text)) == text


@crit(7, "encode/project identity on 1000 configs per scenario; byte-stable JSON")
def test_classifier_json_round_trip():
    _, _, X, y = band_setup(seed=5)
    m = train_svm(X, y, TrainParams(gamma=4.0))
    text = m.to_json()
    back = SvmModel.from_json(text)
    assert back.to_json() == text
    np.testing.assert_array_equal(back.decision_function(X), m.decision_function(X))


# 8. rules soundness

@crit(8, "distilled constraints reject exactly the configs reaching -1 leaves")
def test_rules_soundness():
    s, enc, X, y = band_setup(seed=8)
    m = train_svm(X, y, TrainParams())
    tree = distill_tree(m, enc, s.model, n_samples=2000, max_depth=4, seed=8)
    injected = inject_constraints(s.model, extract_constraints(tree, enc))
    rejected = 0
    for c in sample_valid(s.model, 1000, 88):
        leaf = tree.apply_one(enc.encode_one(c))
        valid = validate(injected, c).valid
        assert valid == (leaf.label == 1)
        rejected += leaf.label == -1
    print(f"\n{rejected} of 1000 fresh configs rejected")


# 9. oracle budget

@crit(9, "random-loop query formula exact; source-label loop makes no queries after init")
def test_budget_accounting():
    s = make_scenario("band2d", 9)
    r = run_random_loop(s, 100, TrainParams(), LoopParams(rounds=7, attacks_per_round=6, seed=9, holdout_size=150))
    assert r.column("oracle_queries") == [100 + 150 + 6 * k for k in range(8)]
    a = run_adversarial_loop(s, 100, TrainParams(), LoopParams(rounds=7, seed=9, holdout_size=150,
                                                               attack=AttackParams(iterations=20)))
    assert a.column("oracle_queries") == [250] * 8

import logging

import numpy as np
import pytest

from _fd import central_diff, max_rel_err
from biaslens import recsys as R
from biaslens.core import Interaction, build_matrix, rng_stream
from biaslens.recsys._kernels import bpr_epoch_kernel, bpr_epoch_py
from biaslens.recsys.bpr import _sample_triples


def nested_prefix_matrix():
    """Users rate prefixes of the item list, planting the order 0>1>2>3."""
    rows = []
    uid = 0
    for depth, cnt in enumerate([8, 4, 2, 1], start=1):
        for _ in range(cnt):
            for item in range(depth):
                rows.append(Interaction(f"u{uid:02d}", f"i{item}", 5.0))
            uid += 1
    return build_matrix(rows)


def random_matrix(seed, n_users=8, n_items=10, per_user=4):
    rng = np.random.default_rng(seed)
    rows = []
    for u in range(n_users):
        for i in rng.choice(n_items, size=per_user, replace=False):
            rows.append(Interaction(f"u{u}", f"i{i}", float(rng.integers(1, 11))))
    return build_matrix(rows)


def test_objective_single_triple_hand_computed():
    P = np.array([[0.5, -0.25]])
    Q = np.array([[0.4, 0.1], [-0.2, 0.3]])
    us = np.array([0])
    pos = np.array([0])
    neg = np.array([1])
    x = 0.5 * (0.4 - -0.2) + -0.25 * (0.1 - 0.3)
    want = np.log1p(np.exp(-x)) + 0.5 * 0.02 * (
        0.5 ** 2 + 0.25 ** 2 + 0.4 ** 2 + 0.1 ** 2 + 0.2 ** 2 + 0.3 ** 2)
    got = R.bpr_objective(P, Q, us, pos, neg, reg=0.02)
    assert got == pytest.approx(want, rel=1e-12)


def test_gradients_match_central_differences():
    m = random_matrix(0)
    rng = rng_stream(42, "test", "bpr")
    P = rng.normal(0.0, 0.5, (m.n_users, 3))
    Q = rng.normal(0.0, 0.5, (m.n_items, 3))
    us, pos, neg = _sample_triples(m, rng_stream(1, "test", "triples"), 25, set())
    assert (pos != neg).all()
    reg = 0.02

    def loss():
        return R.bpr_objective(P, Q, us, pos, neg, reg)

    dP, dQ = R.bpr_gradients(P, Q, us, pos, neg, reg)
    assert max_rel_err(dP, central_diff(loss, P)) < 1e-4
    assert max_rel_err(dQ, central_diff(loss, Q)) < 1e-4


def test_saturated_pair_update_vanishes():
    # huge positive margin: sigmoid factor underflows to zero, and with
    # reg=0 the whole update is exactly nothing
    P = np.array([[100.0]])
    Q = np.array([[100.0], [-100.0]])
    P0, Q0 = P.copy(), Q.copy()
    bpr_epoch_kernel(P, Q, np.array([0]), np.array([0]), np.array([1]), 0.1, 0.0)
    assert np.array_equal(P, P0) and np.array_equal(Q, Q0)


def test_planted_order_recovered():
    m = nested_prefix_matrix()
    model = R.fit(R.AlgorithmSpec(R.Kind.BPR, seed=2, hyperparams={"epochs": 500}), m)
    scores = model.score_user(0)  # u00 rated only item 0
    ranking = np.argsort(-scores[1:], kind="stable") + 1
    assert list(ranking) == [1, 2, 3]


def test_full_catalog_user_skipped_and_logged(caplog):
    rows = [Interaction("greedy", f"i{j}", 5.0) for j in range(3)]
    rows += [Interaction("light", "i0", 4.0)]
    m = build_matrix(rows)
    model = R.BPRModel(R.AlgorithmSpec(R.Kind.BPR, seed=1), m)
    p0 = model.P[0].copy()
    rng = rng_stream(1, "BPR", "sampling")
    with caplog.at_level(logging.WARNING, logger="biaslens.recsys"):
        for _ in range(5):
            R.bpr_step(model, m, rng)
    assert "rated every item" in caplog.text
    # the greedy user is 0; their factor row is never touched
    assert np.array_equal(model.P[0], p0)
    assert sum("rated every item" in r.message for r in caplog.records) == 1


def test_single_triple_step_equals_gradient_step():
    m = random_matrix(5)
    spec = R.AlgorithmSpec(R.Kind.BPR, seed=7, hyperparams={"factors": 3})
    model = R.BPRModel(spec, m)
    P0, Q0 = model.P.copy(), model.Q.copy()
    lr, reg = model.hyperparams["lr"], model.hyperparams["reg"]

    # replay the same sampling stream to learn which triple the step drew
    us, pos, neg = _sample_triples(m, rng_stream(7, "test", "replay"), 1, set())
    R.bpr_step(model, m, rng_stream(7, "test", "replay"), n_samples=1)

    dP, dQ = R.bpr_gradients(P0, Q0, us, pos, neg, reg)
    assert np.allclose(model.P, P0 - lr * dP, atol=1e-14)
    assert np.allclose(model.Q, Q0 - lr * dQ, atol=1e-14)


def test_kernel_matches_interpreted_path():
    m = random_matrix(9)
    rng = rng_stream(3, "test", "bprk")
    P1 = rng.normal(0.0, 0.5, (m.n_users, 3))
    Q1 = rng.normal(0.0, 0.5, (m.n_items, 3))
    P2, Q2 = P1.copy(), Q1.copy()
    us, pos, neg = _sample_triples(m, rng_stream(4, "test", "bprt"), 40, set())
    bpr_epoch_kernel(P1, Q1, us, pos, neg, 0.005, 0.02)
    bpr_epoch_py(P2, Q2, us, pos, neg, 0.005, 0.02)
    assert np.array_equal(P1, P2) and np.array_equal(Q1, Q2)


def test_negatives_always_unseen():
    m = random_matrix(11)
    seen = m.dense_mask()
    for seed in range(5):
        us, pos, neg = _sample_triples(m, rng_stream(seed, "test", "neg"), 200, set())
        assert (pos != neg).all()  # no full-catalog users in this fixture
        assert not seen[us, neg].any()
        assert seen[us, pos].all()

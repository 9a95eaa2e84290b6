import numpy as np
import pytest

from biaslens import recsys as R
from biaslens.core import Interaction, build_matrix


def rank_one_matrix():
    u = np.array([1.0, 2.0, 3.0]) / 3.0
    v = np.array([2.0, 1.0, 4.0, 0.5]) / 2.0
    rows = [Interaction(f"u{a}", f"i{b}", float(u[a] * v[b]))
            for a in range(3) for b in range(4)]
    return build_matrix(rows)


def random_matrix(seed, n=5):
    rng = np.random.default_rng(seed)
    rows = []
    for u in range(n):
        for i in rng.choice(n, size=3, replace=False):
            rows.append(Interaction(f"u{u}", f"i{i}", float(rng.integers(0, 11))))
    return build_matrix(rows)


def test_rank_one_toy_recovered():
    m = rank_one_matrix()
    model = R.fit(R.AlgorithmSpec(R.Kind.NMF, seed=1, hyperparams={"epochs": 200}), m)
    assert R.masked_error(model, m) < 1e-3


@pytest.mark.parametrize("seed", range(50))
def test_factors_stay_nonnegative(seed):
    m = random_matrix(seed)
    model = R.NMFModel(R.AlgorithmSpec(R.Kind.NMF, seed=seed), m)
    for _ in range(5):
        R.nmf_epoch(model, m)
        assert (model.P >= 0).all() and (model.Q >= 0).all()


def test_zero_row_is_absorbing():
    m = random_matrix(3)
    model = R.NMFModel(R.AlgorithmSpec(R.Kind.NMF, seed=3), m)
    model.P[0, :] = 0.0
    for _ in range(4):
        R.nmf_epoch(model, m)
        assert np.array_equal(model.P[0], np.zeros(model.P.shape[1]))


@pytest.mark.parametrize("seed", range(10))
def test_masked_error_nonincreasing(seed):
    m = random_matrix(seed + 100)
    model = R.NMFModel(R.AlgorithmSpec(R.Kind.NMF, seed=seed), m)
    prev = R.masked_error(model, m)
    for _ in range(30):
        now = R.nmf_epoch(model, m)
        assert now <= prev * (1 + 1e-12) + 1e-12
        prev = now


def test_scores_finite_and_nonnegative():
    m = random_matrix(7)
    model = R.fit(R.AlgorithmSpec(R.Kind.NMF, seed=2, hyperparams={"epochs": 10}), m)
    for u in range(m.n_users):
        s = model.score_user(u)
        assert np.isfinite(s).all()
        assert (s >= 0).all()

import numpy as np
import pytest

from biaslens import recsys as R
from biaslens.core import Interaction, build_matrix


def toy_3x4():
    """a=(5,3,.,1), b=(5,3,1,.), c=(1,.,4,5) over items w,x,y,z."""
    rows = [
        Interaction("a", "w", 5.0), Interaction("a", "x", 3.0), Interaction("a", "z", 1.0),
        Interaction("b", "w", 5.0), Interaction("b", "x", 3.0), Interaction("b", "y", 1.0),
        Interaction("c", "w", 1.0), Interaction("c", "y", 4.0), Interaction("c", "z", 5.0),
    ]
    return build_matrix(rows)


def random_matrix(seed, n_users=10, n_items=14, per_user=7):
    rng = np.random.default_rng(seed)
    rows = []
    for u in range(n_users):
        for i in rng.choice(n_items, size=per_user, replace=False):
            rows.append(Interaction(f"u{u:02d}", f"i{i:02d}", float(rng.integers(1, 11))))
    return build_matrix(rows)


def test_cosine_hand_arithmetic():
    # u=(5,3,.), v=(5,3,1): co-rated part is (5,3) on both sides, so
    # (25+9)/(sqrt(34)*sqrt(34)) = 1
    rows = [Interaction("u", "w", 5.0), Interaction("u", "x", 3.0),
            Interaction("v", "w", 5.0), Interaction("v", "x", 3.0), Interaction("v", "y", 1.0)]
    m = build_matrix(rows)
    assert R.knn_similarity(m, 0, 1) == pytest.approx(1.0, abs=1e-12)


def test_identical_vectors_cosine_one():
    rows = [Interaction(u, i, r) for u in ("p", "q")
            for i, r in [("w", 4.0), ("x", 7.0), ("y", 2.0)]]
    m = build_matrix(rows)
    assert R.knn_similarity(m, 0, 1) == pytest.approx(1.0, abs=1e-12)


def test_insufficient_overlap_is_zero():
    rows = [Interaction("u", "w", 5.0), Interaction("u", "x", 3.0),
            Interaction("v", "x", 4.0), Interaction("v", "y", 1.0)]
    m = build_matrix(rows)
    assert R.knn_similarity(m, 0, 1) == 0.0  # only one co-rated item
    rows2 = [Interaction("u", "w", 5.0), Interaction("v", "y", 1.0)]
    assert R.knn_similarity(build_matrix(rows2), 0, 1) == 0.0  # disjoint


def test_pearson_hand_cases():
    rows = [Interaction("u", "w", 1.0), Interaction("u", "x", 2.0), Interaction("u", "y", 3.0),
            Interaction("v", "w", 3.0), Interaction("v", "x", 5.0), Interaction("v", "y", 7.0),
            Interaction("t", "w", 3.0), Interaction("t", "x", 2.0), Interaction("t", "y", 1.0)]
    m = build_matrix(rows)
    assert R.knn_similarity(m, 0, 1, mode="pearson") == pytest.approx(1.0, abs=1e-12)
    assert R.knn_similarity(m, 0, 2, mode="pearson") == pytest.approx(-1.0, abs=1e-12)


def test_bad_mode_rejected():
    m = toy_3x4()
    with pytest.raises(R.InvalidHyperparam):
        R.knn_similarity(m, 0, 1, mode="jaccard")


def test_toy_prediction_weighted_mean():
    # predicting item y for user a: neighbor b has sim 1 (co-rated w,x equal),
    # neighbor c has sim (5*1 + 1*5)/(sqrt(26)*sqrt(26)) = 10/26 = 5/13 over
    # co-rated {w,z}; weighted mean = (1*1 + (5/13)*4) / (1 + 5/13) = 11/6
    m = toy_3x4()
    model = R.fit(R.AlgorithmSpec(R.Kind.USER_KNN), m)
    a, y = 0, m.item_pos["y"]
    assert R.knn_similarity(m, 0, 1) == pytest.approx(1.0, abs=1e-12)
    assert R.knn_similarity(m, 0, 2) == pytest.approx(5 / 13, abs=1e-12)
    assert model.score(a, y) == pytest.approx(11 / 6, abs=1e-10)


@pytest.mark.parametrize("mode", ["cosine", "pearson"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fit_table_matches_pairwise_function(mode, seed):
    m = random_matrix(seed)
    spec = R.AlgorithmSpec(R.Kind.USER_KNN,
                           hyperparams={"k": m.n_users, "similarity": mode})
    model = R.fit(spec, m)
    for u in range(m.n_users):
        table = {int(v): s for v, s in
                 zip(model.nbr_idx[model.nbr_ptr[u]:model.nbr_ptr[u + 1]],
                     model.nbr_sim[model.nbr_ptr[u]:model.nbr_ptr[u + 1]])}
        for v in range(m.n_users):
            if v == u:
                assert v not in table
                continue
            s = R.knn_similarity(m, u, v, mode=mode)
            if s > 0:
                assert v in table
                assert table[v] == pytest.approx(s, abs=1e-10)
            else:
                assert v not in table


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_score_matches_weighted_mean_oracle(seed):
    m = random_matrix(seed)
    model = R.fit(R.AlgorithmSpec(R.Kind.USER_KNN), m)
    dense = m.to_dense()
    mask = m.dense_mask()
    for u in range(m.n_users):
        sims = np.array([R.knn_similarity(m, u, v) for v in range(m.n_users)])
        sims[u] = 0.0
        keep = np.argsort(-sims, kind="stable")[:50]
        w = np.zeros(m.n_users)
        w[keep] = np.maximum(sims[keep], 0.0)
        w[sims <= 0] = 0.0
        num = w @ (dense * mask)
        den = w @ mask
        expected = np.where(den > 0, num / np.maximum(den, 1e-300), 0.0)
        assert np.allclose(model.score_user(u), expected, atol=1e-10)


def test_top_k_neighbors_truncated():
    m = random_matrix(4)
    model = R.fit(R.AlgorithmSpec(R.Kind.USER_KNN, hyperparams={"k": 2}), m)
    counts = np.diff(model.nbr_ptr)
    assert (counts <= 2).all()

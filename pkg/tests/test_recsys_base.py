import numpy as np
import pytest

from biaslens import recsys as R
from biaslens.core import Interaction, build_matrix, matrix_popularity


def small_matrix(seed=0, n_users=12, n_items=16, per_user=6):
    rng = np.random.default_rng(seed)
    rows = []
    for u in range(n_users):
        for i in rng.choice(n_items, size=per_user, replace=False):
            rows.append(Interaction(f"u{u:02d}", f"i{i:02d}", float(rng.integers(1, 11))))
    return build_matrix(rows)


# cut epochs so the all-kinds sweeps stay fast; behavior, not convergence,
# is under test here
_FAST = {
    R.Kind.USER_KNN: {},
    R.Kind.MOST_POP: {},
    R.Kind.RANDOM: {},
    R.Kind.MF: {"epochs": 4},
    R.Kind.PMF: {"epochs": 4},
    R.Kind.NMF: {"epochs": 4},
    R.Kind.WMF: {"epochs": 4},
    R.Kind.PF: {"epochs": 4},
    R.Kind.BPR: {"epochs": 4},
    R.Kind.NEUMF: {"epochs": 2},
    R.Kind.VAECF: {"epochs": 2},
}


def fast_spec(kind, seed=0):
    return R.AlgorithmSpec(kind, seed=seed, hyperparams=dict(_FAST[kind]))


def brute_force_top_k(model, user, k, exclude_seen=True):
    seen = set(model.seen_items(user).tolist()) if exclude_seen else set()
    scored = [(i, model.score(user, i)) for i in range(model.n_items) if i not in seen]
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:k]


def test_unknown_hyperparam_rejected():
    with pytest.raises(R.InvalidHyperparam):
        R.AlgorithmSpec(R.Kind.MF, hyperparams={"bogus": 1})
    with pytest.raises(R.InvalidHyperparam):
        R.AlgorithmSpec(R.Kind.MOST_POP, hyperparams={"factors": 10})


def test_kind_from_string():
    assert R.kind_from_string("userknn") is R.Kind.USER_KNN
    assert R.kind_from_string("MostPop") is R.Kind.MOST_POP
    assert R.kind_from_string("  vaecf ") is R.Kind.VAECF
    with pytest.raises(R.InvalidHyperparam):
        R.kind_from_string("SVD")


def test_defaults_resolved_and_overridable():
    spec = R.AlgorithmSpec(R.Kind.MF, hyperparams={"factors": 3})
    hp = spec.resolved()
    assert hp["factors"] == 3
    assert hp["epochs"] == 100 and hp["lr"] == 0.005 and hp["reg"] == 0.02


@pytest.mark.parametrize("kind", list(R.Kind), ids=lambda k: k.value)
def test_top_k_matches_full_scan_oracle(kind):
    train = small_matrix(seed=3)
    model = R.fit(fast_spec(kind, seed=1), train)
    for user in range(0, train.n_users, 3):
        for exclude in (True, False):
            got = R.recommend_top_k(model, user, k=5, exclude_seen=exclude)
            assert got == brute_force_top_k(model, user, 5, exclude)


def test_tie_break_ascending_item_index():
    # every item rated once: all popularities tie, so MostPop must emit
    # ascending item indices
    rows = [Interaction(f"u{i}", f"i{i}", 5.0) for i in range(8)]
    train = build_matrix(rows)
    model = R.fit(fast_spec(R.Kind.MOST_POP), train)
    got = R.recommend_top_k(model, 0, k=5)
    assert [i for i, _ in got] == [1, 2, 3, 4, 5]


def test_shorter_list_when_catalog_small():
    rows = [Interaction("a", "x", 5.0), Interaction("a", "y", 5.0),
            Interaction("b", "x", 4.0)]
    train = build_matrix(rows)
    model = R.fit(fast_spec(R.Kind.MOST_POP), train)
    assert R.recommend_top_k(model, 0, k=10) == []  # user a has seen both items
    assert len(R.recommend_top_k(model, 1, k=10)) == 1
    with pytest.raises(ValueError):
        R.recommend_top_k(model, 0, k=0)


def test_unknown_user_and_item():
    train = small_matrix()
    model = R.fit(fast_spec(R.Kind.MOST_POP), train)
    with pytest.raises(R.UnknownUser):
        R.recommend_top_k(model, train.n_users, k=3)
    with pytest.raises(R.UnknownUser):
        model.score(-1, 0)
    with pytest.raises(R.UnknownItem):
        model.score(0, train.n_items)


@pytest.mark.parametrize("kind", list(R.Kind), ids=lambda k: k.value)
def test_fit_deterministic_given_seed(kind):
    train = small_matrix(seed=5)
    a = R.fit(fast_spec(kind, seed=9), train)
    b = R.fit(fast_spec(kind, seed=9), train)
    for user in range(train.n_users):
        assert R.recommend_top_k(a, user) == R.recommend_top_k(b, user)
    assert a.loss_trace == b.loss_trace


def test_shape_safety_across_seeds():
    train = small_matrix(seed=5)
    for kind in R.Kind:
        a = R.fit(fast_spec(kind, seed=1), train)
        b = R.fit(fast_spec(kind, seed=2), train)
        pa, pb = a.param_arrays(), b.param_arrays()
        assert [(n, arr.shape) for n, arr in pa] == [(n, arr.shape) for n, arr in pb]


def test_mostpop_mean_popularity_maximal():
    train = small_matrix(seed=7)
    pop = matrix_popularity(train)
    mostpop = R.fit(fast_spec(R.Kind.MOST_POP), train)
    others = [R.fit(fast_spec(k, seed=3), train) for k in R.Kind if k is not R.Kind.MOST_POP]
    for user in range(train.n_users):
        best = np.mean([pop[i] for i, _ in R.recommend_top_k(mostpop, user, k=5)])
        for model in others:
            mean_pop = np.mean([pop[i] for i, _ in R.recommend_top_k(model, user, k=5)])
            assert mean_pop <= best + 1e-12


def test_iterative_kinds_record_per_epoch_loss():
    train = small_matrix(seed=2)
    for kind, n_expected in [(R.Kind.MF, 4), (R.Kind.PMF, 4), (R.Kind.NMF, 4),
                             (R.Kind.WMF, 4), (R.Kind.PF, 4), (R.Kind.BPR, 4),
                             (R.Kind.NEUMF, 2), (R.Kind.VAECF, 2)]:
        model = R.fit(fast_spec(kind), train)
        assert len(model.loss_trace) == n_expected
        assert all(np.isfinite(v) for v in model.loss_trace)
    for kind in (R.Kind.MOST_POP, R.Kind.RANDOM, R.Kind.USER_KNN):
        assert R.fit(fast_spec(kind), train).loss_trace == []

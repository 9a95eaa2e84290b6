import numpy as np
import pytest

from _fd import central_diff, max_rel_err
from biaslens import recsys as R
from biaslens.core import Interaction, build_matrix, rng_stream
from biaslens.recsys._kernels import sgd_epoch_kernel, sgd_epoch_py
from biaslens.recsys.base import train_cells


def dense_toy(seed=11):
    rng = np.random.default_rng(seed)
    rows = [Interaction(f"u{a}", f"i{b}", float(rng.integers(1, 11)))
            for a in range(4) for b in range(4)]
    return build_matrix(rows)


def test_single_cell_converges_to_rating():
    m = build_matrix([Interaction("u", "i", 8.0)])
    model = R.fit(R.AlgorithmSpec(R.Kind.MF, seed=1, hyperparams={"epochs": 200}), m)
    assert abs(model.score(0, 0) - 8.0) <= 0.1


def test_zero_init_factor_updates_vanish():
    m = build_matrix([Interaction("u", "i", 6.0)])
    model = R.PMFModel(R.AlgorithmSpec(R.Kind.PMF, seed=0), m)
    model.P[...] = 0.0
    model.Q[...] = 0.0
    loss = R.sgd_epoch(model, m)
    # e*q and e*p are zero at zero factors, and reg shrinks zero to zero
    assert np.array_equal(model.P, np.zeros_like(model.P))
    assert np.array_equal(model.Q, np.zeros_like(model.Q))
    assert loss == pytest.approx(0.5 * 6.0 ** 2, abs=1e-12)


def test_zero_init_mf_residual_is_rating_minus_mean():
    # single cell: mu equals the rating, so e = r - mu - 0 - 0 = 0 and one
    # epoch moves nothing at all; the loss is exactly zero
    m = build_matrix([Interaction("u", "i", 6.0)])
    model = R.MFModel(R.AlgorithmSpec(R.Kind.MF, seed=0), m)
    model.P[...] = 0.0
    model.Q[...] = 0.0
    loss = R.sgd_epoch(model, m)
    assert model.mu == 6.0
    assert np.array_equal(model.P, np.zeros_like(model.P))
    assert np.array_equal(model.Q, np.zeros_like(model.Q))
    assert np.array_equal(model.bu, np.zeros_like(model.bu))
    assert np.array_equal(model.bi, np.zeros_like(model.bi))
    assert loss == 0.0


@pytest.mark.parametrize("biased", [True, False], ids=["mf", "pmf"])
def test_gradients_match_central_differences(biased):
    m = dense_toy()
    us, cs, rs = train_cells(m)
    rng = rng_stream(99, "test", "fd")
    P = rng.normal(0.0, 0.5, (4, 3))
    Q = rng.normal(0.0, 0.5, (4, 3))
    bu = rng.normal(0.0, 0.5, 4) if biased else None
    bi = rng.normal(0.0, 0.5, 4) if biased else None
    mu = float(rs.mean()) if biased else 0.0
    reg = 0.02

    def loss():
        return R.sgd_objective(P, Q, bu, bi, mu, us, cs, rs, reg)

    dP, dQ, dbu, dbi = R.sgd_gradients(P, Q, bu, bi, mu, us, cs, rs, reg)
    assert max_rel_err(dP, central_diff(loss, P)) < 1e-4
    assert max_rel_err(dQ, central_diff(loss, Q)) < 1e-4
    if biased:
        assert max_rel_err(dbu, central_diff(loss, bu)) < 1e-4
        assert max_rel_err(dbi, central_diff(loss, bi)) < 1e-4


@pytest.mark.parametrize("kind", [R.Kind.MF, R.Kind.PMF], ids=lambda k: k.value)
def test_loss_monotone_first_ten_epochs(kind):
    m = dense_toy()
    model = R.fit(R.AlgorithmSpec(kind, seed=5, hyperparams={"epochs": 10}), m)
    trace = np.asarray(model.loss_trace)
    assert trace.size == 10
    assert (np.diff(trace) <= 1e-12).all()


def test_single_cell_epoch_equals_manual_update():
    m = build_matrix([Interaction("u", "i", 7.0)])
    spec = R.AlgorithmSpec(R.Kind.MF, seed=3, hyperparams={"factors": 2})
    model = R.MFModel(spec, m)
    P0, Q0 = model.P.copy(), model.Q.copy()
    mu = model.mu
    lr, reg = model.hyperparams["lr"], model.hyperparams["reg"]

    e = 7.0 - (mu + 0.0 + 0.0 + float(P0[0] @ Q0[0]))
    bu1 = lr * e
    bi1 = lr * e
    P1 = P0 + lr * (e * Q0 - reg * P0)
    Q1 = Q0 + lr * (e * P0 - reg * Q0)

    R.sgd_epoch(model, m)
    assert model.bu[0] == pytest.approx(bu1, abs=1e-15)
    assert model.bi[0] == pytest.approx(bi1, abs=1e-15)
    assert np.allclose(model.P, P1, atol=1e-14)
    assert np.allclose(model.Q, Q1, atol=1e-14)


def test_kernel_matches_interpreted_path():
    m = dense_toy(seed=21)
    us, cs, rs = train_cells(m)
    rng = rng_stream(7, "test", "kernel")
    P = rng.normal(0.0, 0.5, (4, 3))
    Q = rng.normal(0.0, 0.5, (4, 3))
    bu = np.zeros(4)
    bi = np.zeros(4)
    order = rng.permutation(us.size)
    args = (us, cs, rs, order, 0.005, 0.02, True)
    P2, Q2, bu2, bi2 = P.copy(), Q.copy(), bu.copy(), bi.copy()
    sgd_epoch_kernel(P, Q, bu, bi, 5.5, *args)
    sgd_epoch_py(P2, Q2, bu2, bi2, 5.5, *args)
    assert np.array_equal(P, P2) and np.array_equal(Q, Q2)
    assert np.array_equal(bu, bu2) and np.array_equal(bi, bi2)


def test_divergence_detected_on_huge_lr():
    m = dense_toy()
    with pytest.raises(R.DivergenceDetected):
        R.fit(R.AlgorithmSpec(R.Kind.MF, seed=5, hyperparams={"epochs": 50, "lr": 1e6}), m)


def test_invalid_hyperparams_rejected():
    m = dense_toy()
    for bad in ({"factors": 0}, {"lr": 0.0}, {"reg": -1.0}, {"epochs": -1}):
        with pytest.raises(R.InvalidHyperparam):
            R.fit(R.AlgorithmSpec(R.Kind.MF, hyperparams=bad), m)


def test_seed_changes_parameters():
    m = dense_toy()
    a = R.fit(R.AlgorithmSpec(R.Kind.PMF, seed=1, hyperparams={"epochs": 2}), m)
    b = R.fit(R.AlgorithmSpec(R.Kind.PMF, seed=2, hyperparams={"epochs": 2}), m)
    assert not np.array_equal(a.P, b.P)

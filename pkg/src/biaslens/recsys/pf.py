"""Poisson factorization fit by coordinate-ascent variational inference.

Gamma priors on user activity and item attribute vectors, Poisson likelihood
on the observed counts. The per-cell multinomial responsibilities and both
Gamma blocks are updated in closed form each round, so the evidence lower
bound is nondecreasing. Scores are posterior-mean dot products.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import InteractionMatrix, rng_stream
from .base import AlgorithmSpec, FittedModel, InvalidHyperparam, Kind, train_cells

_PARAM_FLOOR = 1e-10

_lgamma_ufunc = np.frompyfunc(math.lgamma, 1, 1)


def lgamma(x: np.ndarray) -> np.ndarray:
    """Elementwise log-gamma for positive float arrays."""
    return _lgamma_ufunc(np.asarray(x, dtype=np.float64)).astype(np.float64)


def digamma(x: np.ndarray) -> np.ndarray:
    """Elementwise digamma for positive float arrays.

    Small arguments are shifted up by the recurrence psi(x) = psi(x+1) - 1/x
    until x >= 10, where the asymptotic series through x^-8 is accurate to
    about 1e-12.
    """
    xx = np.asarray(x, dtype=np.float64).copy()
    if np.any(xx <= 0):
        raise ValueError("digamma requires positive arguments")
    out = np.zeros_like(xx)
    for _ in range(10):
        small = xx < 10.0
        if not small.any():
            break
        out[small] -= 1.0 / xx[small]
        xx[small] += 1.0
    inv = 1.0 / xx
    inv2 = inv * inv
    tail = inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 / 240)))
    out += np.log(xx) - 0.5 * inv - tail
    return out


class PFModel(FittedModel):
    kind = Kind.PF

    def __init__(self, spec: AlgorithmSpec, train: InteractionMatrix):
        super().__init__(spec, train)
        hp = self.hyperparams
        if hp["factors"] < 1 or hp["epochs"] < 0 or min(hp["a"], hp["b"], hp["c"], hp["d"]) <= 0:
            raise InvalidHyperparam(f"bad PF hyperparams: {hp}")
        f = hp["factors"]
        init = rng_stream(spec.seed, "PF", "init")
        jitter = lambda shape: init.gamma(0.3, 1.0, shape)
        self.user_shp = np.maximum(hp["a"] + jitter((self.n_users, f)), _PARAM_FLOOR)
        self.user_rte = np.maximum(hp["b"] + jitter((self.n_users, f)), _PARAM_FLOOR)
        self.item_shp = np.maximum(hp["c"] + jitter((self.n_items, f)), _PARAM_FLOOR)
        self.item_rte = np.maximum(hp["d"] + jitter((self.n_items, f)), _PARAM_FLOOR)

    def expected_user(self) -> np.ndarray:
        return self.user_shp / self.user_rte

    def expected_item(self) -> np.ndarray:
        return self.item_shp / self.item_rte

    def score_user(self, u: int) -> np.ndarray:
        self._check_user(u)
        return self.expected_item() @ self.expected_user()[u]

    def param_arrays(self):
        return [("user_shp", self.user_shp), ("user_rte", self.user_rte),
                ("item_shp", self.item_shp), ("item_rte", self.item_rte)]

    @classmethod
    def from_arrays(cls, header, arrays):
        model = cls._shell(header, arrays)
        model.user_shp = arrays["user_shp"]
        model.user_rte = arrays["user_rte"]
        model.item_shp = arrays["item_shp"]
        model.item_rte = arrays["item_rte"]
        return model


def _gamma_terms(shp, rte, prior_shp, prior_rte):
    """Sum over coordinates of E[log p(z)] - E[log q(z)] for Gamma z."""
    e_log = digamma(shp) - np.log(rte)
    e_val = shp / rte
    return float(np.sum(
        prior_shp * math.log(prior_rte) - math.lgamma(prior_shp)
        - shp * np.log(rte) + lgamma(shp)
        + (prior_shp - shp) * e_log + (rte - prior_rte) * e_val
    ))


def pf_cavi_step(model: PFModel, train: InteractionMatrix) -> float:
    """One full variational round; returns the evidence lower bound.

    Responsibilities use the incoming Gamma parameters; the item block then
    sees the already-updated user block. The returned bound is evaluated at
    this round's responsibilities and the new Gamma parameters, which makes
    it nondecreasing across rounds.
    """
    hp = model.hyperparams
    a, b, c, d = hp["a"], hp["b"], hp["c"], hp["d"]
    us, cs, rs = train_cells(train)

    elog_u = digamma(model.user_shp) - np.log(model.user_rte)
    elog_i = digamma(model.item_shp) - np.log(model.item_rte)
    log_phi = elog_u[us] + elog_i[cs]
    log_phi -= log_phi.max(axis=1, keepdims=True)
    phi = np.exp(log_phi)
    norm = phi.sum(axis=1, keepdims=True)
    phi /= norm
    log_phi -= np.log(norm)
    y_phi = rs[:, None] * phi

    model.user_shp = np.maximum(
        a + np.add.reduceat(y_phi, train.row_ptr[:-1], axis=0), _PARAM_FLOOR)
    model.user_rte = np.maximum(
        b + model.expected_item().sum(axis=0)[None, :] + np.zeros((model.n_users, 1)),
        _PARAM_FLOOR)

    e_user = model.expected_user()
    item_acc = np.zeros((model.n_items, model.user_shp.shape[1]))
    np.add.at(item_acc, cs, y_phi)
    model.item_shp = np.maximum(c + item_acc, _PARAM_FLOOR)
    model.item_rte = np.maximum(
        d + e_user.sum(axis=0)[None, :] + np.zeros((model.n_items, 1)), _PARAM_FLOOR)

    elog_u = digamma(model.user_shp) - np.log(model.user_rte)
    elog_i = digamma(model.item_shp) - np.log(model.item_rte)
    obs_term = float(np.sum(y_phi * (elog_u[us] + elog_i[cs] - log_phi)))
    obs_term -= float(np.sum(lgamma(rs + 1.0)))
    rate_mass = float(np.dot(model.expected_user().sum(axis=0),
                             model.expected_item().sum(axis=0)))
    elbo = (obs_term - rate_mass
            + _gamma_terms(model.user_shp, model.user_rte, a, b)
            + _gamma_terms(model.item_shp, model.item_rte, c, d))
    model.loss_trace.append(elbo)
    return elbo


def fit_pf(spec: AlgorithmSpec, train: InteractionMatrix) -> PFModel:
    model = PFModel(spec, train)
    for _ in range(model.hyperparams["epochs"]):
        pf_cavi_step(model, train)
    return model

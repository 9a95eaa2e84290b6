"""Rating-prediction matrix factorization trained by per-cell SGD.

Two variants share the epoch kernel: the biased one (global mean plus user
and item offsets plus factors) and the bias-free Gaussian-factor one. The
training objective regularizes parameters once per observed cell,

    L = sum_cells [ e^2/2 + reg/2 (|p_u|^2 + |q_i|^2 + b_u^2 + b_i^2) ],

so a single SGD cell update is exactly one negative-gradient step of that
cell's term. Gradients of L are exposed for finite-difference checking.
"""

from __future__ import annotations

import numpy as np

from ..core import InteractionMatrix, rng_stream
from ._kernels import sgd_epoch_kernel
from .base import (
    AlgorithmSpec,
    DivergenceDetected,
    FittedModel,
    InvalidHyperparam,
    Kind,
    train_cells,
)


def sgd_objective(P, Q, bu, bi, mu, us, cs, rs, reg) -> float:
    """Per-cell regularized squared-error objective; bu/bi None for the bias-free variant."""
    # overflow here just means divergence; the caller checks for finiteness
    with np.errstate(over="ignore", invalid="ignore"):
        preds = np.einsum("kf,kf->k", P[us], Q[cs])
        if bu is not None:
            preds = preds + mu + bu[us] + bi[cs]
        e = rs - preds
        pen = np.einsum("kf,kf->k", P[us], P[us]) + np.einsum("kf,kf->k", Q[cs], Q[cs])
        if bu is not None:
            pen = pen + bu[us] ** 2 + bi[cs] ** 2
        return float(0.5 * np.dot(e, e) + 0.5 * reg * pen.sum())


def sgd_gradients(P, Q, bu, bi, mu, us, cs, rs, reg):
    """Analytic gradient of sgd_objective in the same parameter layout."""
    preds = np.einsum("kf,kf->k", P[us], Q[cs])
    if bu is not None:
        preds = preds + mu + bu[us] + bi[cs]
    e = rs - preds
    dP = np.zeros_like(P)
    dQ = np.zeros_like(Q)
    np.add.at(dP, us, -e[:, None] * Q[cs] + reg * P[us])
    np.add.at(dQ, cs, -e[:, None] * P[us] + reg * Q[cs])
    if bu is None:
        return dP, dQ, None, None
    dbu = np.zeros_like(bu)
    dbi = np.zeros_like(bi)
    np.add.at(dbu, us, -e + reg * bu[us])
    np.add.at(dbi, cs, -e + reg * bi[cs])
    return dP, dQ, dbu, dbi


class _FactorSGD(FittedModel):
    use_bias = False

    def __init__(self, spec: AlgorithmSpec, train: InteractionMatrix):
        super().__init__(spec, train)
        hp = self.hyperparams
        if hp["factors"] < 1 or hp["epochs"] < 0 or hp["lr"] <= 0 or hp["reg"] < 0:
            raise InvalidHyperparam(f"bad {self.kind.value} hyperparams: {hp}")
        init = rng_stream(spec.seed, self.kind.value, "init")
        self.P = init.normal(0.0, hp["init_std"], (self.n_users, hp["factors"]))
        self.Q = init.normal(0.0, hp["init_std"], (self.n_items, hp["factors"]))
        if self.use_bias:
            self.mu = float(train.row_vals.mean())
            self.bu = np.zeros(self.n_users)
            self.bi = np.zeros(self.n_items)
        else:
            self.mu = 0.0
            self.bu = None
            self.bi = None

    def score_user(self, u: int) -> np.ndarray:
        self._check_user(u)
        out = self.Q @ self.P[u]
        if self.use_bias:
            out = out + self.mu + self.bu[u] + self.bi
        return out

    def param_arrays(self):
        out = [("P", self.P), ("Q", self.Q)]
        if self.use_bias:
            out += [("bu", self.bu), ("bi", self.bi), ("mu", np.array([self.mu]))]
        return out

    @classmethod
    def from_arrays(cls, header, arrays):
        model = cls._shell(header, arrays)
        model.P = arrays["P"]
        model.Q = arrays["Q"]
        if cls.use_bias:
            model.bu = arrays["bu"]
            model.bi = arrays["bi"]
            model.mu = float(arrays["mu"][0])
        else:
            model.bu = None
            model.bi = None
            model.mu = 0.0
        return model


class MFModel(_FactorSGD):
    kind = Kind.MF
    use_bias = True


class PMFModel(_FactorSGD):
    kind = Kind.PMF
    use_bias = False


def sgd_epoch(model: _FactorSGD, train: InteractionMatrix, lr: float | None = None,
              reg: float | None = None) -> float:
    """One pass over all observed cells in seeded-shuffled order.

    The shuffle stream is keyed by the epoch index (= current trace length),
    so training is reproducible whether epochs run inside fit or one by one.
    Returns the post-epoch objective and appends it to the loss trace.
    """
    hp = model.hyperparams
    lr = hp["lr"] if lr is None else lr
    reg = hp["reg"] if reg is None else reg
    us, cs, rs = train_cells(train)
    epoch_idx = len(model.loss_trace)
    order = rng_stream(model.seed, model.kind.value, "shuffle", str(epoch_idx)).permutation(us.size)
    bu = model.bu if model.use_bias else np.zeros(0)
    bi = model.bi if model.use_bias else np.zeros(0)
    sgd_epoch_kernel(model.P, model.Q, bu, bi, model.mu, us, cs, rs, order,
                     lr, reg, model.use_bias)
    loss = sgd_objective(model.P, model.Q, model.bu, model.bi, model.mu, us, cs, rs, reg)
    if not np.isfinite(loss):
        raise DivergenceDetected(f"{model.kind.value} objective became {loss} at epoch {epoch_idx}")
    model.loss_trace.append(loss)
    return loss


def _fit_sgd(cls, spec: AlgorithmSpec, train: InteractionMatrix):
    model = cls(spec, train)
    for _ in range(model.hyperparams["epochs"]):
        sgd_epoch(model, train)
    return model


def fit_mf(spec: AlgorithmSpec, train: InteractionMatrix) -> MFModel:
    return _fit_sgd(MFModel, spec, train)


def fit_pmf(spec: AlgorithmSpec, train: InteractionMatrix) -> PMFModel:
    return _fit_sgd(PMFModel, spec, train)

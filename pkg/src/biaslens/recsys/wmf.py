"""Weighted matrix factorization for implicit feedback, fit by alternating
least squares.

Observed cells become preference 1 with confidence 1 + alpha * rating;
every unobserved cell is preference 0 with confidence 1. Each sweep solves
the per-row regularized normal equations exactly, so the weighted objective
is nonincreasing sweep over sweep.
"""

from __future__ import annotations

import numpy as np

from ..core import InteractionMatrix, rng_stream
from ._kernels import HAVE_NUMBA, wmf_solve_side_kernel, wmf_solve_side_py
from .base import AlgorithmSpec, FittedModel, InvalidHyperparam, Kind, SingularSystem, train_cells


class WMFModel(FittedModel):
    kind = Kind.WMF

    def __init__(self, spec: AlgorithmSpec, train: InteractionMatrix):
        super().__init__(spec, train)
        hp = self.hyperparams
        if hp["factors"] < 1 or hp["epochs"] < 0 or hp["alpha"] < 0 or hp["init_std"] <= 0:
            raise InvalidHyperparam(f"bad WMF hyperparams: {hp}")
        init = rng_stream(spec.seed, "WMF", "init")
        self.X = init.normal(0.0, hp["init_std"], (self.n_users, hp["factors"]))
        self.Y = init.normal(0.0, hp["init_std"], (self.n_items, hp["factors"]))

    def score_user(self, u: int) -> np.ndarray:
        self._check_user(u)
        return self.Y @ self.X[u]

    def param_arrays(self):
        return [("X", self.X), ("Y", self.Y)]

    @classmethod
    def from_arrays(cls, header, arrays):
        model = cls._shell(header, arrays)
        model.X = arrays["X"]
        model.Y = arrays["Y"]
        return model


def wmf_objective(X: np.ndarray, Y: np.ndarray, train: InteractionMatrix,
                  alpha: float, reg: float) -> float:
    """Full weighted loss over every (user, item) pair.

    Every pair contributes confidence * (pref - x.y)^2. Unobserved pairs all
    have confidence 1 and pref 0, so their total is the all-pairs Gram term
    sum_u x' (Y'Y) x; observed pairs swap that contribution for their own.
    """
    gram = Y.T @ Y
    term_all = float(np.einsum("uf,fg,ug->", X, gram, X))
    us, cs, rs = train_cells(train)
    xy = np.einsum("kf,kf->k", X[us], Y[cs])
    conf = 1.0 + alpha * rs
    term_obs = float(np.sum(conf * (1.0 - xy) ** 2 - xy ** 2))
    penalty = reg * (float(np.sum(X * X)) + float(np.sum(Y * Y)))
    return term_all + term_obs + penalty


def _solve_side(X, Y, ptr, idx, vals, alpha, reg):
    gram = Y.T @ Y
    if reg > 0 and HAVE_NUMBA:
        wmf_solve_side_kernel(X, Y, gram, ptr, idx, vals, alpha, reg)
        return
    try:
        wmf_solve_side_py(X, Y, gram, ptr, idx, vals, alpha, reg)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(
            f"normal matrix not invertible at reg={reg}; use reg > 0"
        ) from exc


def wmf_als_sweep(model: WMFModel, train: InteractionMatrix,
                  alpha: float | None = None, reg: float | None = None) -> float:
    """One full sweep (user solve then item solve); returns the objective."""
    hp = model.hyperparams
    alpha = hp["alpha"] if alpha is None else alpha
    reg = hp["reg"] if reg is None else reg
    _solve_side(model.X, model.Y, train.row_ptr, train.row_cols, train.row_vals, alpha, reg)
    _solve_side(model.Y, model.X, train.col_ptr, train.col_rows, train.col_vals, alpha, reg)
    loss = wmf_objective(model.X, model.Y, train, alpha, reg)
    model.loss_trace.append(loss)
    return loss


def fit_wmf(spec: AlgorithmSpec, train: InteractionMatrix) -> WMFModel:
    model = WMFModel(spec, train)
    for _ in range(model.hyperparams["epochs"]):
        wmf_als_sweep(model, train)
    return model

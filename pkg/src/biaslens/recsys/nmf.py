"""Nonnegative matrix factorization with masked multiplicative updates.

The classical multiplicative rules restricted to observed cells: each factor
matrix is rescaled by (observed data sums) / (observed prediction sums), so
nonnegativity is preserved and the masked squared error never increases.
All segment sums run over the matrix's CSR/CSC arrays; nothing dense is
materialized.
"""

from __future__ import annotations

import numpy as np

from ..core import InteractionMatrix, rng_stream
from .base import AlgorithmSpec, FittedModel, InvalidHyperparam, Kind, train_cells


class NMFModel(FittedModel):
    kind = Kind.NMF

    def __init__(self, spec: AlgorithmSpec, train: InteractionMatrix):
        super().__init__(spec, train)
        hp = self.hyperparams
        if hp["factors"] < 1 or hp["epochs"] < 0 or hp["eps"] <= 0:
            raise InvalidHyperparam(f"bad NMF hyperparams: {hp}")
        init = rng_stream(spec.seed, "NMF", "init")
        self.P = init.uniform(0.0, 1.0, (self.n_users, hp["factors"]))
        self.Q = init.uniform(0.0, 1.0, (self.n_items, hp["factors"]))

    def score_user(self, u: int) -> np.ndarray:
        self._check_user(u)
        return self.Q @ self.P[u]

    def param_arrays(self):
        return [("P", self.P), ("Q", self.Q)]

    @classmethod
    def from_arrays(cls, header, arrays):
        model = cls._shell(header, arrays)
        model.P = arrays["P"]
        model.Q = arrays["Q"]
        return model


def masked_error(model: NMFModel, train: InteractionMatrix) -> float:
    """Sum of squared errors over observed cells only."""
    us, cs, rs = train_cells(train)
    e = rs - np.einsum("kf,kf->k", model.P[us], model.Q[cs])
    return float(np.dot(e, e))


def nmf_epoch(model: NMFModel, train: InteractionMatrix) -> float:
    """One multiplicative update of P then Q; returns the post-epoch masked error.

    Zero rows are absorbing: a factor row that reaches zero stays zero.
    """
    eps = model.hyperparams["eps"]
    P, Q = model.P, model.Q
    row_ptr, cs, rs = train.row_ptr, train.row_cols, train.row_vals

    QG = Q[cs]
    preds = np.einsum("kf,kf->k", P[np.repeat(np.arange(train.n_users), np.diff(row_ptr))], QG)
    numer = np.add.reduceat(rs[:, None] * QG, row_ptr[:-1], axis=0)
    denom = np.add.reduceat(preds[:, None] * QG, row_ptr[:-1], axis=0)
    P *= numer / (denom + eps)

    col_ptr, rows_c, rs_c = train.col_ptr, train.col_rows, train.col_vals
    is_c = np.repeat(np.arange(train.n_items), np.diff(col_ptr))
    PG = P[rows_c]
    preds_c = np.einsum("kf,kf->k", PG, Q[is_c])
    numer_i = np.add.reduceat(rs_c[:, None] * PG, col_ptr[:-1], axis=0)
    denom_i = np.add.reduceat(preds_c[:, None] * PG, col_ptr[:-1], axis=0)
    Q *= numer_i / (denom_i + eps)

    err = masked_error(model, train)
    model.loss_trace.append(err)
    return err


def fit_nmf(spec: AlgorithmSpec, train: InteractionMatrix) -> NMFModel:
    model = NMFModel(spec, train)
    for _ in range(model.hyperparams["epochs"]):
        nmf_epoch(model, train)
    return model

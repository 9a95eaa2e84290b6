"""Bayesian personalized ranking on implicit feedback.

Each step draws (user, seen item, unseen item) triples uniformly and runs
one stochastic gradient update per triple against the pairwise logistic
ranking loss. Ratings only mark which cells are observed; their values are
ignored. A user who has rated the whole catalog has no negatives, so their
sampled triples are skipped (logged once per step).
"""

from __future__ import annotations

import logging

import numpy as np

from ..core import InteractionMatrix, rng_stream
from ._kernels import bpr_epoch_kernel
from .base import AlgorithmSpec, DivergenceDetected, FittedModel, InvalidHyperparam, Kind

log = logging.getLogger("biaslens.recsys")

_MAX_RESAMPLE_ROUNDS = 10_000


class BPRModel(FittedModel):
    kind = Kind.BPR

    def __init__(self, spec: AlgorithmSpec, train: InteractionMatrix):
        super().__init__(spec, train)
        hp = self.hyperparams
        if hp["factors"] < 1 or hp["epochs"] < 0 or hp["lr"] <= 0 or hp["reg"] < 0:
            raise InvalidHyperparam(f"bad BPR hyperparams: {hp}")
        init = rng_stream(spec.seed, "BPR", "init")
        self.P = init.normal(0.0, hp["init_std"], (self.n_users, hp["factors"]))
        self.Q = init.normal(0.0, hp["init_std"], (self.n_items, hp["factors"]))
        self._warned_full_users: set[int] = set()

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
        model._warned_full_users = set()
        return model


def bpr_objective(P, Q, us, pos, neg, reg) -> float:
    """Ranking loss of a fixed triple list, with per-triple L2 shrinkage."""
    x = np.einsum("kf,kf->k", P[us], Q[pos] - Q[neg])
    loss = float(np.sum(np.logaddexp(0.0, -x)))
    penalty = 0.5 * reg * float(
        np.sum(P[us] ** 2) + np.sum(Q[pos] ** 2) + np.sum(Q[neg] ** 2))
    return loss + penalty


def bpr_gradients(P, Q, us, pos, neg, reg):
    """Exact gradient of bpr_objective in (P, Q); triples must have pos != neg."""
    diff = Q[pos] - Q[neg]
    x = np.einsum("kf,kf->k", P[us], diff)
    ex = np.exp(-np.abs(x))  # sigma(-x), stable for either sign
    s = np.where(x >= 0, ex / (1 + ex), 1 / (1 + ex))
    dP = np.zeros_like(P)
    dQ = np.zeros_like(Q)
    np.add.at(dP, us, -s[:, None] * diff + reg * P[us])
    np.add.at(dQ, pos, -s[:, None] * P[us] + reg * Q[pos])
    np.add.at(dQ, neg, s[:, None] * P[us] + reg * Q[neg])
    return dP, dQ


def _sample_triples(train: InteractionMatrix, rng: np.random.Generator, n_samples: int,
                    warned: set[int]):
    """Uniform (user, seen, unseen) triples; full-catalog users get neg == pos."""
    counts = np.diff(train.row_ptr)
    cell_users = np.repeat(np.arange(train.n_users, dtype=np.int64), counts)
    ks = rng.integers(0, train.n_ratings, n_samples)
    us = cell_users[ks]
    pos = train.row_cols[ks].astype(np.int64)

    seen = train.dense_mask()
    full_users = counts == train.n_items
    neg = rng.integers(0, train.n_items, n_samples)
    sentinel = full_users[us]
    if sentinel.any():
        neg[sentinel] = pos[sentinel]
        for u in np.unique(us[sentinel]):
            if int(u) not in warned:
                warned.add(int(u))
                log.warning("user %d has rated every item; BPR skips their triples", u)
    active = ~sentinel
    for _ in range(_MAX_RESAMPLE_ROUNDS):
        bad = active & seen[us, neg]
        n_bad = int(bad.sum())
        if n_bad == 0:
            break
        neg[bad] = rng.integers(0, train.n_items, n_bad)
    else:
        raise RuntimeError("negative sampling failed to terminate")
    return us, pos, neg.astype(np.int64)


def bpr_step(model: BPRModel, train: InteractionMatrix, rng: np.random.Generator,
             lr: float | None = None, reg: float | None = None,
             n_samples: int | None = None) -> float:
    """One sampling epoch (default: one triple per observed cell).

    Returns the mean ranking loss of this epoch's triples evaluated after
    the update; the value is a sampled estimate and is recorded in the
    model's loss trace.
    """
    hp = model.hyperparams
    lr = hp["lr"] if lr is None else lr
    reg = hp["reg"] if reg is None else reg
    n_samples = train.n_ratings if n_samples is None else n_samples
    us, pos, neg = _sample_triples(train, rng, n_samples, model._warned_full_users)
    bpr_epoch_kernel(model.P, model.Q, us, pos, neg, lr, reg)
    live = pos != neg
    if live.any():
        # overflow means divergence; checked right below
        with np.errstate(over="ignore", invalid="ignore"):
            x = np.einsum("kf,kf->k", model.P[us[live]],
                          model.Q[pos[live]] - model.Q[neg[live]])
            loss = float(np.mean(np.logaddexp(0.0, -x)))
    else:
        loss = 0.0
    if not np.isfinite(loss) or not (np.isfinite(model.P).all() and np.isfinite(model.Q).all()):
        raise DivergenceDetected(f"BPR produced non-finite values at epoch {len(model.loss_trace)}")
    model.loss_trace.append(loss)
    return loss


def fit_bpr(spec: AlgorithmSpec, train: InteractionMatrix) -> BPRModel:
    model = BPRModel(spec, train)
    rng = rng_stream(spec.seed, "BPR", "sampling")
    for _ in range(model.hyperparams["epochs"]):
        bpr_step(model, train, rng)
    return model

"""Neural matrix factorization trained on the implicit view with sampled
negatives.

Two branches share nothing: a GMF branch (elementwise product of 8-dim
embeddings) and an MLP branch (16-dim embeddings, concatenated to 32, then
ReLU layers 32 -> 16 -> 8). Their outputs concatenate into a 16-dim head
with a single sigmoid unit; the loss is mean binary cross-entropy. All
gradients are derived and applied by hand; no autodiff anywhere.
"""

from __future__ import annotations

import numpy as np

from ..core import InteractionMatrix, rng_stream
from .base import AlgorithmSpec, DivergenceDetected, FittedModel, InvalidHyperparam, Kind

_GMF_DIM = 8
_MLP_DIM = 16
_H1 = 16
_H2 = 8


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class NeuMFModel(FittedModel):
    kind = Kind.NEUMF

    def __init__(self, spec: AlgorithmSpec, train: InteractionMatrix):
        super().__init__(spec, train)
        hp = self.hyperparams
        if hp["epochs"] < 0 or hp["lr"] <= 0 or hp["neg_ratio"] < 1 or hp["batch_size"] < 1:
            raise InvalidHyperparam(f"bad NeuMF hyperparams: {hp}")
        std = hp["init_std"]
        if std <= 0:
            raise InvalidHyperparam("init_std must be > 0")
        init = rng_stream(spec.seed, "NeuMF", "init")
        self.gmf_user = init.normal(0.0, std, (self.n_users, _GMF_DIM))
        self.gmf_item = init.normal(0.0, std, (self.n_items, _GMF_DIM))
        self.mlp_user = init.normal(0.0, std, (self.n_users, _MLP_DIM))
        self.mlp_item = init.normal(0.0, std, (self.n_items, _MLP_DIM))
        self.w1 = init.normal(0.0, std, (2 * _MLP_DIM, _H1))
        self.b1 = np.zeros(_H1)
        self.w2 = init.normal(0.0, std, (_H1, _H2))
        self.b2 = np.zeros(_H2)
        self.head_w = init.normal(0.0, std, _GMF_DIM + _H2)
        self.head_b = np.zeros(1)

    def _forward(self, us: np.ndarray, items: np.ndarray):
        pg = self.gmf_user[us]
        qg = self.gmf_item[items]
        g = pg * qg
        a0 = np.concatenate([self.mlp_user[us], self.mlp_item[items]], axis=1)
        a1 = a0 @ self.w1 + self.b1
        h1 = np.maximum(a1, 0.0)
        a2 = h1 @ self.w2 + self.b2
        h2 = np.maximum(a2, 0.0)
        z = np.concatenate([g, h2], axis=1)
        logit = z @ self.head_w + self.head_b[0]
        return pg, qg, a0, a1, h1, a2, h2, z, logit

    def predict_proba(self, us: np.ndarray, items: np.ndarray) -> np.ndarray:
        return _sigmoid(self._forward(us, items)[-1])

    def score_user(self, u: int) -> np.ndarray:
        self._check_user(u)
        items = np.arange(self.n_items)
        us = np.full(self.n_items, u)
        return self._forward(us, items)[-1]

    def param_arrays(self):
        return [("gmf_user", self.gmf_user), ("gmf_item", self.gmf_item),
                ("mlp_user", self.mlp_user), ("mlp_item", self.mlp_item),
                ("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2),
                ("head_w", self.head_w), ("head_b", self.head_b)]

    @classmethod
    def from_arrays(cls, header, arrays):
        model = cls._shell(header, arrays)
        for name in ("gmf_user", "gmf_item", "mlp_user", "mlp_item",
                     "w1", "b1", "w2", "b2", "head_w", "head_b"):
            setattr(model, name, arrays[name])
        return model


def neumf_loss(model: NeuMFModel, batch) -> float:
    """Mean binary cross-entropy of a (users, items, labels) batch."""
    us, items, ys = batch
    with np.errstate(over="ignore", invalid="ignore"):
        logit = model._forward(us, items)[-1]
        return float(np.mean(np.logaddexp(0.0, logit) - ys * logit))


def neumf_gradients(model: NeuMFModel, batch):
    """Loss and exact full-shape gradients of every parameter array.

    Shares the forward pass with training; the backward pass here assembles
    dense gradient arrays so finite-difference checks can sweep every entry.
    """
    us, items, ys = batch
    n = us.size
    # overflow means divergence; neumf_forward_backward checks finiteness
    with np.errstate(over="ignore", invalid="ignore"):
        pg, qg, a0, a1, h1, a2, h2, z, logit = model._forward(us, items)
        loss = float(np.mean(np.logaddexp(0.0, logit) - ys * logit))

        dlogit = (_sigmoid(logit) - ys) / n
        grads = {
            "head_w": z.T @ dlogit,
            "head_b": np.array([dlogit.sum()]),
        }
        dz = dlogit[:, None] * model.head_w[None, :]
        dg = dz[:, :_GMF_DIM]
        dh2 = dz[:, _GMF_DIM:]

        grads["gmf_user"] = np.zeros_like(model.gmf_user)
        grads["gmf_item"] = np.zeros_like(model.gmf_item)
        np.add.at(grads["gmf_user"], us, dg * qg)
        np.add.at(grads["gmf_item"], items, dg * pg)

        da2 = dh2 * (a2 > 0)
        grads["w2"] = h1.T @ da2
        grads["b2"] = da2.sum(axis=0)
        da1 = (da2 @ model.w2.T) * (a1 > 0)
        grads["w1"] = a0.T @ da1
        grads["b1"] = da1.sum(axis=0)
        da0 = da1 @ model.w1.T
        grads["mlp_user"] = np.zeros_like(model.mlp_user)
        grads["mlp_item"] = np.zeros_like(model.mlp_item)
        np.add.at(grads["mlp_user"], us, da0[:, :_MLP_DIM])
        np.add.at(grads["mlp_item"], items, da0[:, _MLP_DIM:])
    return loss, grads


def neumf_forward_backward(model: NeuMFModel, batch, lr: float | None = None) -> float:
    """One SGD step on a batch; returns the pre-update batch loss."""
    lr = model.hyperparams["lr"] if lr is None else lr
    loss, grads = neumf_gradients(model, batch)
    if not np.isfinite(loss):
        raise DivergenceDetected(f"NeuMF batch loss is {loss}")
    for name, _ in model.param_arrays():
        arr = getattr(model, name)
        arr -= lr * grads[name]
    return loss


def _sample_epoch(model: NeuMFModel, train: InteractionMatrix, epoch: int):
    """Positives plus neg_ratio uniform unseen negatives, shuffled together."""
    hp = model.hyperparams
    rng = rng_stream(model.seed, "NeuMF", "samples", str(epoch))
    counts = np.diff(train.row_ptr)
    pos_users = np.repeat(np.arange(train.n_users, dtype=np.int64), counts)
    pos_items = train.row_cols.astype(np.int64)

    n_neg = hp["neg_ratio"] * pos_users.size
    neg_users = np.repeat(pos_users, hp["neg_ratio"])
    neg_items = rng.integers(0, train.n_items, n_neg)
    seen = train.dense_mask()
    full = counts == train.n_items
    active = ~full[neg_users]
    for _ in range(10_000):
        bad = active & seen[neg_users, neg_items]
        n_bad = int(bad.sum())
        if n_bad == 0:
            break
        neg_items[bad] = rng.integers(0, train.n_items, n_bad)
    keep = ~full[neg_users]
    us = np.concatenate([pos_users, neg_users[keep]])
    items = np.concatenate([pos_items, neg_items[keep]])
    ys = np.concatenate([np.ones(pos_users.size), np.zeros(int(keep.sum()))])
    order = rng.permutation(us.size)
    return us[order], items[order], ys[order]


def fit_neumf(spec: AlgorithmSpec, train: InteractionMatrix) -> NeuMFModel:
    model = NeuMFModel(spec, train)
    hp = model.hyperparams
    for epoch in range(hp["epochs"]):
        us, items, ys = _sample_epoch(model, train, epoch)
        total = 0.0
        for start in range(0, us.size, hp["batch_size"]):
            sl = slice(start, start + hp["batch_size"])
            batch = (us[sl], items[sl], ys[sl])
            total += neumf_forward_backward(model, batch) * batch[0].size
        model.loss_trace.append(total / us.size)
    return model

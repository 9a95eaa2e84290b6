"""Variational autoencoder over binarized user interaction rows.

Encoder: one 64-unit tanh layer feeding the mean and log-variance of a
32-dim diagonal Gaussian. A reparameterized sample is decoded to multinomial
logits over the catalog. The training objective per batch is the mean of
-log-likelihood + beta * KL(q || N(0, I)); gradients are derived by hand,
and the reconstruction noise comes from a seeded stream. Scoring decodes
the posterior mean (no noise), so saved models stay deterministic.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..core import InteractionMatrix, rng_stream
from .base import AlgorithmSpec, DivergenceDetected, FittedModel, InvalidHyperparam, Kind

_HIDDEN = 64
_LATENT = 32


class ElboTerms(NamedTuple):
    loss: float
    log_likelihood: float
    kl: float


class VAECFModel(FittedModel):
    kind = Kind.VAECF

    def __init__(self, spec: AlgorithmSpec, train: InteractionMatrix):
        super().__init__(spec, train)
        hp = self.hyperparams
        if hp["epochs"] < 0 or hp["lr"] <= 0 or hp["beta"] < 0 or hp["batch_size"] < 1:
            raise InvalidHyperparam(f"bad VAECF hyperparams: {hp}")
        std = hp["init_std"]
        if std <= 0:
            raise InvalidHyperparam("init_std must be > 0")
        init = rng_stream(spec.seed, "VAECF", "init")
        self.enc_w = init.normal(0.0, std, (self.n_items, _HIDDEN))
        self.enc_b = np.zeros(_HIDDEN)
        self.mu_w = init.normal(0.0, std, (_HIDDEN, _LATENT))
        self.mu_b = np.zeros(_LATENT)
        self.lv_w = init.normal(0.0, std, (_HIDDEN, _LATENT))
        self.lv_b = np.zeros(_LATENT)
        self.dec_w = init.normal(0.0, std, (_LATENT, self.n_items))
        self.dec_b = np.zeros(self.n_items)
        self._noise = rng_stream(spec.seed, "VAECF", "noise")

    def user_inputs(self, users: np.ndarray):
        """(normalized input rows, binary target rows) for a user index batch."""
        x = np.zeros((users.size, self.n_items))
        for row, u in enumerate(users):
            x[row, self.seen_items(u)] = 1.0
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        return x / np.maximum(norms, 1e-12), x

    def encode(self, x: np.ndarray):
        h = np.tanh(x @ self.enc_w + self.enc_b)
        mu = h @ self.mu_w + self.mu_b
        lv = h @ self.lv_w + self.lv_b
        return h, mu, lv

    def decode(self, z: np.ndarray) -> np.ndarray:
        return z @ self.dec_w + self.dec_b

    def score_user(self, u: int) -> np.ndarray:
        self._check_user(u)
        x, _ = self.user_inputs(np.array([u]))
        _, mu, _ = self.encode(x)
        return self.decode(mu)[0]

    def param_arrays(self):
        return [("enc_w", self.enc_w), ("enc_b", self.enc_b),
                ("mu_w", self.mu_w), ("mu_b", self.mu_b),
                ("lv_w", self.lv_w), ("lv_b", self.lv_b),
                ("dec_w", self.dec_w), ("dec_b", self.dec_b)]

    @classmethod
    def from_arrays(cls, header, arrays):
        model = cls._shell(header, arrays)
        for name in ("enc_w", "enc_b", "mu_w", "mu_b", "lv_w", "lv_b", "dec_w", "dec_b"):
            setattr(model, name, arrays[name])
        model._noise = rng_stream(model.seed, "VAECF", "noise")
        return model


def vaecf_terms(model: VAECFModel, users: np.ndarray, beta: float,
                eps: np.ndarray) -> ElboTerms:
    """Objective pieces for a user batch under a fixed noise draw."""
    with np.errstate(over="ignore", invalid="ignore"):
        x, m = model.user_inputs(users)
        _, mu, lv = model.encode(x)
        z = mu + np.exp(0.5 * lv) * eps
        logits = model.decode(z)
        shifted = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
        ll = float(np.sum(m * logits) - np.sum(m.sum(axis=1) * lse))
        kl = float(0.5 * np.sum(np.exp(lv) + mu ** 2 - 1.0 - lv))
        loss = (-ll + beta * kl) / users.size
    return ElboTerms(loss, ll, kl)


def vaecf_gradients(model: VAECFModel, users: np.ndarray, beta: float,
                    eps: np.ndarray):
    """ElboTerms plus exact gradients of the batch loss for every parameter."""
    n = users.size
    # overflow means divergence; vaecf_elbo_step checks finiteness
    with np.errstate(over="ignore", invalid="ignore"):
        x, m = model.user_inputs(users)
        h, mu, lv = model.encode(x)
        sig = np.exp(0.5 * lv)
        z = mu + sig * eps
        logits = model.decode(z)
        shifted = logits - logits.max(axis=1, keepdims=True)
        expl = np.exp(shifted)
        denom = expl.sum(axis=1, keepdims=True)
        softmax = expl / denom
        lse = np.log(denom[:, 0]) + logits.max(axis=1)
        n_u = m.sum(axis=1)
        ll = float(np.sum(m * logits) - np.sum(n_u * lse))
        kl = float(0.5 * np.sum(np.exp(lv) + mu ** 2 - 1.0 - lv))
        loss = (-ll + beta * kl) / n

        dlogits = (softmax * n_u[:, None] - m) / n
        grads = {"dec_w": z.T @ dlogits, "dec_b": dlogits.sum(axis=0)}
        dz = dlogits @ model.dec_w.T
        dmu = dz + (beta / n) * mu
        dlv = dz * eps * 0.5 * sig + (beta / n) * 0.5 * (np.exp(lv) - 1.0)
        grads["mu_w"] = h.T @ dmu
        grads["mu_b"] = dmu.sum(axis=0)
        grads["lv_w"] = h.T @ dlv
        grads["lv_b"] = dlv.sum(axis=0)
        dh = dmu @ model.mu_w.T + dlv @ model.lv_w.T
        dpre = dh * (1.0 - h ** 2)
        grads["enc_w"] = x.T @ dpre
        grads["enc_b"] = dpre.sum(axis=0)
    return ElboTerms(loss, ll, kl), grads


def vaecf_elbo_step(model: VAECFModel, users: np.ndarray,
                    lr: float | None = None, beta: float | None = None,
                    eps: np.ndarray | None = None) -> ElboTerms:
    """One gradient step on a user batch; returns the pre-update terms.

    `eps` may be passed to freeze the reparameterization noise (used by the
    finite-difference tests); by default it comes from the model's seeded
    noise stream.
    """
    hp = model.hyperparams
    lr = hp["lr"] if lr is None else lr
    beta = hp["beta"] if beta is None else beta
    if eps is None:
        eps = model._noise.standard_normal((users.size, _LATENT))
    terms, grads = vaecf_gradients(model, users, beta, eps)
    if not np.isfinite(terms.loss):
        raise DivergenceDetected(f"VAECF batch loss is {terms.loss}")
    for name, _ in model.param_arrays():
        getattr(model, name)[...] -= lr * grads[name]
    return terms


def fit_vaecf(spec: AlgorithmSpec, train: InteractionMatrix) -> VAECFModel:
    model = VAECFModel(spec, train)
    hp = model.hyperparams
    for epoch in range(hp["epochs"]):
        order = rng_stream(spec.seed, "VAECF", "shuffle", str(epoch)).permutation(model.n_users)
        total = 0.0
        for start in range(0, order.size, hp["batch_size"]):
            users = order[start:start + hp["batch_size"]]
            total += vaecf_elbo_step(model, users).loss * users.size
        model.loss_trace.append(total / model.n_users)
    return model

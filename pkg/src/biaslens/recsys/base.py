"""Common fit/score/recommend contract shared by all eleven recommenders.

Models operate on integer user/item indices of the training matrix; id
mapping stays with the matrix. Every fitted model also keeps the training
seen-structure (CSR arrays) so exclusion and KNN scoring work after a
save/load round trip without the original matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..core import BiasLensError, InteractionMatrix


class InvalidHyperparam(BiasLensError):
    pass


class UnknownUser(BiasLensError):
    pass


class UnknownItem(BiasLensError):
    pass


class DivergenceDetected(BiasLensError):
    pass


class SingularSystem(BiasLensError):
    pass


class UserHasAllItems(BiasLensError):
    """A BPR user with no unseen items; sampled triples for them are skipped."""


class Kind(Enum):
    USER_KNN = "UserKNN"
    MF = "MF"
    PMF = "PMF"
    NMF = "NMF"
    WMF = "WMF"
    PF = "PF"
    BPR = "BPR"
    NEUMF = "NeuMF"
    VAECF = "VAECF"
    MOST_POP = "MostPop"
    RANDOM = "Random"


_SGD_FACTOR = {"factors": 10, "epochs": 100, "lr": 0.005, "reg": 0.02, "init_std": 0.01}

DEFAULTS: dict[Kind, dict] = {
    Kind.USER_KNN: {"k": 50, "similarity": "cosine", "min_overlap": 2},
    Kind.MF: dict(_SGD_FACTOR),
    Kind.PMF: dict(_SGD_FACTOR),
    Kind.NMF: {"factors": 10, "epochs": 100, "eps": 1e-9},
    Kind.WMF: {"factors": 10, "epochs": 100, "alpha": 1.0, "reg": 0.02, "init_std": 0.01},
    Kind.PF: {"factors": 10, "epochs": 100, "a": 0.3, "b": 0.3, "c": 0.3, "d": 0.3},
    Kind.BPR: dict(_SGD_FACTOR),
    Kind.NEUMF: {"epochs": 100, "lr": 0.005, "neg_ratio": 4, "batch_size": 256, "init_std": 0.01},
    Kind.VAECF: {"epochs": 100, "lr": 0.005, "beta": 0.2, "batch_size": 128, "init_std": 0.01},
    Kind.MOST_POP: {},
    Kind.RANDOM: {},
}


def kind_from_string(name: str) -> Kind:
    wanted = name.strip().casefold()
    for kind in Kind:
        if kind.value.casefold() == wanted:
            return kind
    raise InvalidHyperparam(f"unknown algorithm {name!r}; choose from "
                            + ", ".join(k.value for k in Kind))


@dataclass(frozen=True)
class AlgorithmSpec:
    kind: Kind
    seed: int = 0
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.hyperparams) - set(DEFAULTS[self.kind])
        if unknown:
            raise InvalidHyperparam(
                f"{self.kind.value} does not accept {sorted(unknown)}; "
                f"valid keys: {sorted(DEFAULTS[self.kind])}"
            )

    def resolved(self) -> dict:
        return {**DEFAULTS[self.kind], **self.hyperparams}


class FittedModel:
    """Base model: holds dimensions, resolved hyperparams, and the train CSR."""

    kind: Kind

    def __init__(self, spec: AlgorithmSpec, train: InteractionMatrix):
        if spec.kind is not self.kind:
            raise InvalidHyperparam(f"spec kind {spec.kind.value} != model kind {self.kind.value}")
        self.seed = spec.seed
        self.hyperparams = spec.resolved()
        self.n_users = train.n_users
        self.n_items = train.n_items
        self.row_ptr = train.row_ptr.copy()
        self.row_cols = train.row_cols.copy()
        self.row_vals = train.row_vals.copy()
        self.loss_trace: list[float] = []

    def _check_user(self, u: int) -> None:
        if not 0 <= u < self.n_users:
            raise UnknownUser(f"user index {u} outside 0..{self.n_users - 1}")

    def _check_item(self, i: int) -> None:
        if not 0 <= i < self.n_items:
            raise UnknownItem(f"item index {i} outside 0..{self.n_items - 1}")

    def seen_items(self, u: int) -> np.ndarray:
        return self.row_cols[self.row_ptr[u]:self.row_ptr[u + 1]]

    def seen_ratings(self, u: int) -> np.ndarray:
        return self.row_vals[self.row_ptr[u]:self.row_ptr[u + 1]]

    def score_user(self, u: int) -> np.ndarray:
        raise NotImplementedError

    def score(self, u: int, i: int) -> float:
        # single code path with score_user so per-pair and per-row scoring
        # can never disagree in the last float bit
        self._check_user(u)
        self._check_item(i)
        return float(self.score_user(u)[i])

    # serialization hooks ------------------------------------------------

    def save(self, path) -> None:
        from .io import save_model

        save_model(self, path)

    def param_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Ordered (name, array) pairs beyond the shared train structure."""
        raise NotImplementedError

    @classmethod
    def _shell(cls, header: dict, arrays: dict) -> "FittedModel":
        """Rebuild the shared part of a model from container contents."""
        model = cls.__new__(cls)
        model.seed = header["seed"]
        model.hyperparams = header["hyperparams"]
        model.n_users = header["n_users"]
        model.n_items = header["n_items"]
        model.row_ptr = arrays["row_ptr"]
        model.row_cols = arrays["row_cols"]
        model.row_vals = arrays["row_vals"]
        model.loss_trace = list(header["loss_trace"])
        return model

    @classmethod
    def from_arrays(cls, header: dict, arrays: dict) -> "FittedModel":
        raise NotImplementedError


def recommend_top_k(model: FittedModel, user: int, k: int = 10,
                    exclude_seen: bool = True) -> list[tuple[int, float]]:
    """Top-k items for one user: score descending, ties by ascending index.

    Seen (training) items are excluded when exclude_seen; the list is
    shorter than k only when fewer eligible items exist.
    """
    model._check_user(user)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = model.score_user(user)
    mask = np.ones(model.n_items, dtype=bool)
    if exclude_seen:
        mask[model.seen_items(user)] = False
    eligible = np.flatnonzero(mask)
    # stable sort on the negated scores keeps ascending-index order for ties
    order = np.argsort(-scores[eligible], kind="stable")
    top = eligible[order[:k]]
    return [(int(i), float(scores[i])) for i in top]


def train_cells(train: InteractionMatrix):
    """(user index, item index, rating) arrays of all observed cells, row-major."""
    counts = np.diff(train.row_ptr)
    us = np.repeat(np.arange(train.n_users, dtype=np.int64), counts)
    return us, train.row_cols.copy(), train.row_vals.copy()

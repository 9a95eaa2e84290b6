"""The two dummy recommenders: global popularity and seeded noise."""

from __future__ import annotations

import numpy as np

from ..core import InteractionMatrix, matrix_popularity, rng_stream
from .base import AlgorithmSpec, FittedModel, Kind


class MostPopModel(FittedModel):
    """Scores every item by its training rating count, user-independent."""

    kind = Kind.MOST_POP

    def __init__(self, spec: AlgorithmSpec, train: InteractionMatrix):
        super().__init__(spec, train)
        self.popularity = matrix_popularity(train).astype(np.float64)

    def score_user(self, u: int) -> np.ndarray:
        self._check_user(u)
        return self.popularity

    def param_arrays(self):
        return [("popularity", self.popularity)]

    @classmethod
    def from_arrays(cls, header, arrays):
        model = cls._shell(header, arrays)
        model.popularity = arrays["popularity"]
        return model


class RandomModel(FittedModel):
    """Uniform scores from the stream keyed by (user, item).

    Row u of the score table is the stream ("random", "user", str(u)) of the
    model seed; entry i of that row is the (u, i) score. Scores are fixed for
    the life of the model, so repeated calls and reloads agree exactly.
    """

    kind = Kind.RANDOM

    def __init__(self, spec: AlgorithmSpec, train: InteractionMatrix):
        super().__init__(spec, train)

    def score_user(self, u: int) -> np.ndarray:
        self._check_user(u)
        return rng_stream(self.seed, "random", "user", str(u)).random(self.n_items)

    def param_arrays(self):
        return []

    @classmethod
    def from_arrays(cls, header, arrays):
        return cls._shell(header, arrays)


def fit_mostpop(spec: AlgorithmSpec, train: InteractionMatrix) -> MostPopModel:
    return MostPopModel(spec, train)


def fit_random(spec: AlgorithmSpec, train: InteractionMatrix) -> RandomModel:
    return RandomModel(spec, train)

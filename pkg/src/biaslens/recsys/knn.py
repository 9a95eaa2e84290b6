"""User-based k-nearest-neighbour recommender.

Similarity is computed over co-rated items only and is 0 below the overlap
floor. Fitting materializes dense user and mask matrices to batch the
pairwise sums through matrix products (chunked over query users), which is
the same arithmetic as the pairwise knn_similarity operation; the test suite
holds the two routes together on random fixtures.
"""

from __future__ import annotations

import numpy as np

from ..core import InteractionMatrix
from .base import AlgorithmSpec, FittedModel, InvalidHyperparam, Kind


def knn_similarity(train: InteractionMatrix, u: int, v: int, mode: str = "cosine",
                   min_overlap: int = 2) -> float:
    """Similarity between two user rows over their co-rated items.

    Returns 0.0 when fewer than min_overlap items are co-rated or a
    denominator degenerates; otherwise a value in [-1, 1].
    """
    cu, ru = train.user_row(u)
    cv, rv = train.user_row(v)
    common, iu, iv = np.intersect1d(cu, cv, assume_unique=True, return_indices=True)
    if common.size < min_overlap:
        return 0.0
    x = ru[iu]
    y = rv[iv]
    if mode == "cosine":
        nx = float(np.dot(x, x))
        ny = float(np.dot(y, y))
        if nx == 0.0 or ny == 0.0:
            return 0.0
        val = float(np.dot(x, y)) / np.sqrt(nx * ny)
    elif mode == "pearson":
        c = float(common.size)
        cov = float(np.dot(x, y)) - x.sum() * y.sum() / c
        vx = float(np.dot(x, x)) - x.sum() ** 2 / c
        vy = float(np.dot(y, y)) - y.sum() ** 2 / c
        if vx <= 0.0 or vy <= 0.0:
            return 0.0
        val = cov / np.sqrt(vx * vy)
    else:
        raise InvalidHyperparam(f"similarity must be cosine or pearson, got {mode!r}")
    return float(np.clip(val, -1.0, 1.0))


class UserKNNModel(FittedModel):
    kind = Kind.USER_KNN

    def __init__(self, spec: AlgorithmSpec, train: InteractionMatrix):
        super().__init__(spec, train)
        hp = self.hyperparams
        if hp["similarity"] not in ("cosine", "pearson"):
            raise InvalidHyperparam(f"similarity must be cosine or pearson, got {hp['similarity']!r}")
        if hp["k"] < 1 or hp["min_overlap"] < 0:
            raise InvalidHyperparam("k must be >= 1 and min_overlap >= 0")
        self.nbr_ptr, self.nbr_idx, self.nbr_sim = _neighbour_table(
            train, hp["k"], hp["similarity"], hp["min_overlap"]
        )

    def score_user(self, u: int) -> np.ndarray:
        """Similarity-weighted mean rating over neighbours that rated the item."""
        self._check_user(u)
        num = np.zeros(self.n_items)
        den = np.zeros(self.n_items)
        for t in range(self.nbr_ptr[u], self.nbr_ptr[u + 1]):
            v = self.nbr_idx[t]
            s = self.nbr_sim[t]
            cols = self.row_cols[self.row_ptr[v]:self.row_ptr[v + 1]]
            vals = self.row_vals[self.row_ptr[v]:self.row_ptr[v + 1]]
            num[cols] += s * vals
            den[cols] += s
        out = np.zeros(self.n_items)
        np.divide(num, den, out=out, where=den > 0)
        return out

    def param_arrays(self):
        return [("nbr_ptr", self.nbr_ptr), ("nbr_idx", self.nbr_idx), ("nbr_sim", self.nbr_sim)]

    @classmethod
    def from_arrays(cls, header, arrays):
        model = cls._shell(header, arrays)
        model.nbr_ptr = arrays["nbr_ptr"]
        model.nbr_idx = arrays["nbr_idx"]
        model.nbr_sim = arrays["nbr_sim"]
        return model


def _neighbour_table(train: InteractionMatrix, k: int, mode: str, min_overlap: int,
                     chunk: int = 1024):
    n_users = train.n_users
    R = train.to_dense()
    M = train.dense_mask().astype(np.float64)
    R2 = R * R
    ptr = [0]
    idx_parts: list[np.ndarray] = []
    sim_parts: list[np.ndarray] = []
    for lo in range(0, n_users, chunk):
        hi = min(lo + chunk, n_users)
        cnt = M[lo:hi] @ M.T
        num = R[lo:hi] @ R.T
        su = R2[lo:hi] @ M.T  # co-rated squared sums on the chunk side
        sv = M[lo:hi] @ R2.T  # and on the candidate side
        if mode == "cosine":
            denom = np.sqrt(su * sv)
            with np.errstate(invalid="ignore", divide="ignore"):
                sims = np.where(denom > 0, num / denom, 0.0)
        else:
            pu = R[lo:hi] @ M.T
            pv = M[lo:hi] @ R.T
            with np.errstate(invalid="ignore", divide="ignore"):
                cov = num - pu * pv / cnt
                vx = su - pu * pu / cnt
                vy = sv - pv * pv / cnt
                denom = np.sqrt(vx * vy)
                sims = np.where((vx > 0) & (vy > 0) & (denom > 0), cov / denom, 0.0)
        sims = np.clip(sims, -1.0, 1.0)
        sims[cnt < min_overlap] = 0.0
        sims[np.isnan(sims)] = 0.0
        for row, u in enumerate(range(lo, hi)):
            s = sims[row]
            s[u] = 0.0  # never your own neighbour
            cand = np.flatnonzero(s > 0)
            order = np.argsort(-s[cand], kind="stable")
            keep = cand[order[:k]]
            idx_parts.append(keep.astype(np.int64))
            sim_parts.append(s[keep])
            ptr.append(ptr[-1] + keep.size)
    nbr_ptr = np.asarray(ptr, dtype=np.int64)
    nbr_idx = np.concatenate(idx_parts) if idx_parts else np.zeros(0, dtype=np.int64)
    nbr_sim = np.concatenate(sim_parts) if sim_parts else np.zeros(0)
    return nbr_ptr, nbr_idx, nbr_sim


def fit_userknn(spec: AlgorithmSpec, train: InteractionMatrix) -> UserKNNModel:
    return UserKNNModel(spec, train)

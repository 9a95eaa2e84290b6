"""Shared domain types: interactions, the sparse rating matrix, seeded RNG streams.

Index assignment is first-appearance order, so ingestion order is the single
source of index determinism. The matrix stores both orientations (user-major
and item-major) because downstream code walks rows and columns equally often.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class BiasLensError(Exception):
    """Base class for all library errors."""


class EmptyInput(BiasLensError):
    pass


class DuplicatePair(BiasLensError):
    def __init__(self, user_id: str, item_id: str):
        super().__init__(f"duplicate (user, item) pair: ({user_id!r}, {item_id!r})")
        self.user_id = user_id
        self.item_id = item_id


@dataclass(frozen=True, slots=True)
class Interaction:
    """One (user, item, rating) event.

    Rating 0 marks an implicit interaction; 1..10 is an explicit score.
    """

    user_id: str
    item_id: str
    rating: int

    def __post_init__(self):
        if not 0 <= self.rating <= 10:
            raise ValueError(f"rating must be in 0..10, got {self.rating}")


@dataclass
class ItemRecord:
    """Catalog entry for one book, keyed by its canonical ISBN."""

    item_id: str
    raw_isbns: set[str]
    title: str
    author_raw: str
    publisher: str = ""
    year: int | None = None
    author_validated: str | None = None
    author_key: str | None = None


class LinkStatus(IntEnum):
    # ordering matters: the enrichment chain may only move status upward
    UNLINKED = 0
    NAME_VALIDATED = 1
    VIAF_LINKED = 2
    WIKIDATA_LINKED = 3


@dataclass
class AuthorRecord:
    author_key: str
    display_name: str
    viaf_id: str | None = None
    wikidata_id: str | None = None
    countries: frozenset[str] = frozenset()
    link_status: LinkStatus = LinkStatus.UNLINKED


class InteractionMatrix:
    """Deduplicated, index-mapped sparse user x item rating matrix.

    Rows and columns encode the identical multiset of (row, col, rating)
    triples. Instances are immutable after construction and safe for
    concurrent reads. Ratings are stored as float64 for numeric code,
    but always hold integer values from the 0..10 scale.
    """

    __slots__ = (
        "user_ids", "item_ids", "user_pos", "item_pos",
        "row_ptr", "row_cols", "row_vals",
        "col_ptr", "col_rows", "col_vals",
        "n_ratings",
    )

    def __init__(self, user_ids, item_ids, row_ptr, row_cols, row_vals,
                 col_ptr, col_rows, col_vals):
        self.user_ids: list[str] = user_ids
        self.item_ids: list[str] = item_ids
        self.user_pos: dict[str, int] = {u: k for k, u in enumerate(user_ids)}
        self.item_pos: dict[str, int] = {i: k for k, i in enumerate(item_ids)}
        self.row_ptr = row_ptr
        self.row_cols = row_cols
        self.row_vals = row_vals
        self.col_ptr = col_ptr
        self.col_rows = col_rows
        self.col_vals = col_vals
        self.n_ratings = int(row_cols.shape[0])

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def user_row(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """Items rated by user row u: (column indices, ratings), column-sorted."""
        a, b = self.row_ptr[u], self.row_ptr[u + 1]
        return self.row_cols[a:b], self.row_vals[a:b]

    def item_col(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Users who rated item column i: (row indices, ratings), row-sorted."""
        a, b = self.col_ptr[i], self.col_ptr[i + 1]
        return self.col_rows[a:b], self.col_vals[a:b]

    def triples_by_user(self):
        """Yield (row, col, rating) in row-major order."""
        for u in range(self.n_users):
            cols, vals = self.user_row(u)
            for c, v in zip(cols, vals):
                yield u, int(c), int(v)

    def triples_by_item(self):
        """Yield (row, col, rating) in column-major order."""
        for i in range(self.n_items):
            rows, vals = self.item_col(i)
            for r, v in zip(rows, vals):
                yield int(r), i, int(v)

    def to_dense(self, fill: float = 0.0) -> np.ndarray:
        """Small-matrix test helper; missing cells get `fill`."""
        d = np.full((self.n_users, self.n_items), fill, dtype=np.float64)
        for u in range(self.n_users):
            cols, vals = self.user_row(u)
            d[u, cols] = vals
        return d

    def dense_mask(self) -> np.ndarray:
        """Boolean observed-cell mask, same shape as to_dense()."""
        m = np.zeros((self.n_users, self.n_items), dtype=bool)
        for u in range(self.n_users):
            cols, _ = self.user_row(u)
            m[u, cols] = True
        return m


def build_matrix(interactions: list[Interaction]) -> InteractionMatrix:
    """Index users and items in first-appearance order and build both orientations.

    Raises EmptyInput on an empty list and DuplicatePair if the same
    (user, item) pair occurs twice; duplicates must be resolved at ingestion.
    """
    if not interactions:
        raise EmptyInput("cannot build a matrix from zero interactions")
    user_pos: dict[str, int] = {}
    item_pos: dict[str, int] = {}
    n = len(interactions)
    u_idx = np.empty(n, dtype=np.int64)
    i_idx = np.empty(n, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    for k, it in enumerate(interactions):
        u_idx[k] = user_pos.setdefault(it.user_id, len(user_pos))
        i_idx[k] = item_pos.setdefault(it.item_id, len(item_pos))
        vals[k] = it.rating

    n_users = len(user_pos)
    n_items = len(item_pos)

    order = np.lexsort((i_idx, u_idx))
    us, cs = u_idx[order], i_idx[order]
    dup = np.nonzero((us[1:] == us[:-1]) & (cs[1:] == cs[:-1]))[0]
    if dup.size:
        k = int(order[dup[0] + 1])
        raise DuplicatePair(interactions[k].user_id, interactions[k].item_id)
    row_cols = cs
    row_vals = vals[order]
    row_ptr = np.zeros(n_users + 1, dtype=np.int64)
    np.cumsum(np.bincount(us, minlength=n_users), out=row_ptr[1:])

    order_c = np.lexsort((u_idx, i_idx))
    col_rows = u_idx[order_c]
    col_vals = vals[order_c]
    col_ptr = np.zeros(n_items + 1, dtype=np.int64)
    np.cumsum(np.bincount(i_idx[order_c], minlength=n_items), out=col_ptr[1:])

    user_ids = [None] * n_users
    for uid, k in user_pos.items():
        user_ids[k] = uid
    item_ids = [None] * n_items
    for iid, k in item_pos.items():
        item_ids[k] = iid

    return InteractionMatrix(user_ids, item_ids, row_ptr, row_cols, row_vals,
                             col_ptr, col_rows, col_vals)


def matrix_popularity(m: InteractionMatrix) -> np.ndarray:
    """Per-item rating counts, indexed by item column. Sums to m.n_ratings."""
    return np.diff(m.col_ptr)


_U64 = (1 << 64) - 1


def _stream_words(labels: tuple[str, ...]) -> list[int]:
    # Hash the label path so any unicode label is a valid stream key and
    # distinct paths cannot collide by concatenation ("ab","c" vs "a","bc").
    joined = "\x1f".join(labels).encode("utf-8")
    digest = hashlib.sha256(joined).digest()
    return [int.from_bytes(digest[k:k + 4], "little") for k in range(0, 16, 4)]


def rng_stream(seed: int, *labels: str) -> np.random.Generator:
    """PCG64 generator for one named stream of a master seed.

    Equal (seed, labels) gives an identical draw sequence across runs and
    platforms; different label paths give independent streams.
    """
    entropy = [seed & _U64, *_stream_words(labels)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True, slots=True)
class SeededRng:
    """Splittable deterministic randomness root. See rng_stream."""

    seed: int

    def stream(self, *labels: str) -> np.random.Generator:
        return rng_stream(self.seed, *labels)

"""biaslens: train collaborative-filtering recommenders and audit popularity
and author-country bias in what they recommend."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    AuthorRecord,
    BiasLensError,
    Interaction,
    InteractionMatrix,
    ItemRecord,
    LinkStatus,
    SeededRng,
    build_matrix,
    matrix_popularity,
    rng_stream,
)

"""Text folding shared by catalog dedup and author-name matching."""

from __future__ import annotations

import unicodedata


def fold_text(s: str) -> str:
    """Case-fold, strip accents, turn punctuation into spaces, collapse runs.

    Deterministic and idempotent; the empty string folds to itself.
    """
    # interleave casefold with decomposition: compatibility decomposition can
    # surface fresh uppercase (e.g. a script capital folds to a plain capital),
    # so a single casefold pass is not idempotent
    s = unicodedata.normalize("NFD", s).casefold()
    s = unicodedata.normalize("NFKD", s).casefold()
    s = unicodedata.normalize("NFKD", s)
    out = []
    for ch in s:
        cat = unicodedata.category(ch)
        if cat.startswith("M"):
            continue
        if cat.startswith("P") or cat.startswith("S"):
            out.append(" ")
        else:
            out.append(ch)
    return " ".join("".join(out).split())

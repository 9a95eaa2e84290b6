"""Parsers, catalog repair, and preprocessing cut-offs for rating datasets.

Two input dialects are supported: the Book-Crossing CSV family (semicolon
separated, double-quoted, Latin-1 by default) and a generic UTF-8 TSV with a
single header line. Parsers never silently drop data; every malformed line
becomes a reject record, so line counts always reconcile.
"""

from __future__ import annotations

import collections
import re
from dataclasses import dataclass
from datetime import date

from .core import BiasLensError, Interaction, ItemRecord
from .textnorm import fold_text


class EncodingError(BiasLensError):
    pass


class MalformedHeader(BiasLensError):
    pass


class EmptyResult(BiasLensError):
    """Every interaction was filtered out; thresholds are probably mis-set."""


@dataclass(frozen=True, slots=True)
class RejectRecord:
    line_number: int
    reason: str
    raw_line: str


@dataclass(frozen=True, slots=True)
class MergeEvent:
    kept: str
    dropped: tuple[str, ...]
    rule: str


@dataclass(frozen=True, slots=True)
class PreprocessConfig:
    drop_implicit: bool = True
    max_user_ratings: int = 200
    min_user_ratings: int = 5
    min_item_ratings: int = 5
    iterate_to_fixpoint: bool = False

    def __post_init__(self):
        if self.max_user_ratings < 0 or self.min_user_ratings < 0 or self.min_item_ratings < 0:
            raise ValueError("thresholds must be nonnegative")
        if self.min_user_ratings > self.max_user_ratings:
            raise ValueError("min_user_ratings must not exceed max_user_ratings")


def _read_lines(path, encoding: str) -> list[str]:
    try:
        with open(path, "r", encoding=encoding, newline="") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise EncodingError(f"{path}: cannot decode as {encoding}: {exc}") from exc
    if text.startswith("\ufeff"):
        text = text[1:]
    return text.splitlines()


def _split_quoted(line: str, sep: str = ";") -> list[str]:
    """Split one semicolon-separated line of double-quoted fields.

    Handles backslash escapes inside quotes (the Book-Crossing dump uses
    them). Raises ValueError on unterminated quotes.
    """
    fields = []
    buf = []
    in_quotes = False
    k = 0
    n = len(line)
    while k < n:
        ch = line[k]
        if in_quotes:
            if ch == "\\" and k + 1 < n:
                buf.append(line[k + 1])
                k += 2
                continue
            if ch == '"':
                if k + 1 < n and line[k + 1] == '"':
                    buf.append('"')
                    k += 2
                    continue
                in_quotes = False
            else:
                buf.append(ch)
        elif ch == '"':
            in_quotes = True
        elif ch == sep:
            fields.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
        k += 1
    if in_quotes:
        raise ValueError("unterminated quoted field")
    fields.append("".join(buf).strip())
    return fields


def _check_header(line: str, expected: list[str], path) -> None:
    try:
        got = _split_quoted(line)
    except ValueError as exc:
        raise MalformedHeader(f"{path}: bad header line: {exc}") from exc
    want = [e.casefold() for e in expected]
    have = [g.casefold() for g in got[: len(expected)]]
    if have != want:
        raise MalformedHeader(
            f"{path}: header {got[:len(expected)]!r} does not match expected {expected!r}"
        )


def parse_ratings(path, encoding: str = "latin-1"):
    """Book-Crossing ratings file -> (interactions, rejects).

    Expects header "User-ID";"ISBN";"Book-Rating". Item ids are kept verbatim
    here; ISBN canonicalization is a separate pipeline stage.
    """
    lines = _read_lines(path, encoding)
    if not lines:
        raise MalformedHeader(f"{path}: empty file, expected a header line")
    _check_header(lines[0], ["User-ID", "ISBN", "Book-Rating"], path)
    out: list[Interaction] = []
    rejects: list[RejectRecord] = []
    for ln, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            rejects.append(RejectRecord(ln, "blank line", raw))
            continue
        try:
            row = _split_quoted(raw)
        except ValueError as exc:
            rejects.append(RejectRecord(ln, str(exc), raw))
            continue
        if len(row) != 3:
            rejects.append(RejectRecord(ln, f"expected 3 fields, got {len(row)}", raw))
            continue
        user, isbn, rating_s = row
        if not user or not isbn:
            rejects.append(RejectRecord(ln, "empty user id or ISBN", raw))
            continue
        try:
            rating = int(rating_s)
        except ValueError:
            rejects.append(RejectRecord(ln, f"non-integer rating {rating_s!r}", raw))
            continue
        if not 0 <= rating <= 10:
            rejects.append(RejectRecord(ln, f"rating {rating} out of 0..10", raw))
            continue
        out.append(Interaction(user, isbn, rating))
    return out, rejects


_ITEM_HEADER = ["ISBN", "Book-Title", "Book-Author", "Year-Of-Publication", "Publisher"]


def _parse_year(s: str) -> int | None:
    # 0 is the dataset's missing-year sentinel; implausible years also map
    # to absent rather than poisoning the catalog
    try:
        y = int(s)
    except ValueError:
        return None
    if y < 1000 or y > date.today().year:
        return None
    return y


def parse_items(path, encoding: str = "latin-1"):
    """Book-Crossing items file -> (item records, rejects).

    Trailing columns after Publisher (cover-image URLs) are ignored.
    """
    lines = _read_lines(path, encoding)
    if not lines:
        raise MalformedHeader(f"{path}: empty file, expected a header line")
    _check_header(lines[0], _ITEM_HEADER, path)
    out: list[ItemRecord] = []
    rejects: list[RejectRecord] = []
    for ln, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            rejects.append(RejectRecord(ln, "blank line", raw))
            continue
        try:
            row = _split_quoted(raw)
        except ValueError as exc:
            rejects.append(RejectRecord(ln, str(exc), raw))
            continue
        if len(row) < 5:
            rejects.append(RejectRecord(ln, f"expected >=5 fields, got {len(row)}", raw))
            continue
        isbn, title, author, year_s, publisher = row[:5]
        if not isbn:
            rejects.append(RejectRecord(ln, "empty ISBN", raw))
            continue
        out.append(
            ItemRecord(
                item_id=isbn,
                raw_isbns={isbn},
                title=title,
                author_raw=author,
                publisher=publisher,
                year=_parse_year(year_s),
            )
        )
    return out, rejects


def parse_users(path, encoding: str = "latin-1"):
    """Book-Crossing users file -> (list of (user_id, location, age|None), rejects)."""
    lines = _read_lines(path, encoding)
    if not lines:
        raise MalformedHeader(f"{path}: empty file, expected a header line")
    _check_header(lines[0], ["User-ID", "Location", "Age"], path)
    out: list[tuple[str, str, int | None]] = []
    rejects: list[RejectRecord] = []
    for ln, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            rejects.append(RejectRecord(ln, "blank line", raw))
            continue
        try:
            row = _split_quoted(raw)
        except ValueError as exc:
            rejects.append(RejectRecord(ln, str(exc), raw))
            continue
        if len(row) < 2:
            rejects.append(RejectRecord(ln, f"expected >=2 fields, got {len(row)}", raw))
            continue
        user = row[0]
        if not user:
            rejects.append(RejectRecord(ln, "empty user id", raw))
            continue
        location = row[1]
        age: int | None = None
        if len(row) >= 3:
            try:
                age = int(row[2])
            except ValueError:
                age = None
        out.append((user, location, age))
    return out, rejects


def parse_generic_ratings(path, encoding: str = "utf-8"):
    """Generic TSV (user_id, item_id, rating with one header line) -> (interactions, rejects)."""
    lines = _read_lines(path, encoding)
    if not lines:
        raise MalformedHeader(f"{path}: empty file, expected a header line")
    header = [f.strip().casefold() for f in lines[0].split("\t")]
    if header[:3] != ["user_id", "item_id", "rating"]:
        raise MalformedHeader(f"{path}: expected header user_id/item_id/rating, got {lines[0]!r}")
    out: list[Interaction] = []
    rejects: list[RejectRecord] = []
    for ln, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            rejects.append(RejectRecord(ln, "blank line", raw))
            continue
        row = raw.split("\t")
        if len(row) != 3:
            rejects.append(RejectRecord(ln, f"expected 3 fields, got {len(row)}", raw))
            continue
        user, item, rating_s = (f.strip() for f in row)
        if not user or not item:
            rejects.append(RejectRecord(ln, "empty user id or item id", raw))
            continue
        try:
            rating = int(rating_s)
        except ValueError:
            rejects.append(RejectRecord(ln, f"non-integer rating {rating_s!r}", raw))
            continue
        if not 0 <= rating <= 10:
            rejects.append(RejectRecord(ln, f"rating {rating} out of 0..10", raw))
            continue
        out.append(Interaction(user, item, rating))
    return out, rejects


_ISBN10 = re.compile(r"^\d{9}[\dX]$")
_ISBN13 = re.compile(r"^\d{13}$")


def canonicalize_isbn(raw: str) -> str | None:
    """Canonical ISBN form, or None when the string has no valid ISBN shape.

    Strips hyphens and spaces and uppercases a trailing x. Shape means
    10 characters (9 digits plus digit or X) or 13 digits; no checksum is
    enforced because the source data contains checksum-invalid but still
    identifying ISBNs.
    """
    s = raw.strip().replace("-", "").replace(" ", "").upper()
    if _ISBN10.match(s) or _ISBN13.match(s):
        return s
    return None


def resolve_duplicate_pairs(interactions: list[Interaction]) -> list[Interaction]:
    """Collapse repeated (user, item) pairs: keep the highest rating, tie keeps first."""
    index: dict[tuple[str, str], int] = {}
    out: list[Interaction] = []
    for it in interactions:
        key = (it.user_id, it.item_id)
        k = index.get(key)
        if k is None:
            index[key] = len(out)
            out.append(it)
        elif it.rating > out[k].rating:
            out[k] = it
    return out


def canonicalize_catalog(items, interactions):
    """Rewrite item ids to canonical ISBN form on both sides of the join.

    Ids that do not canonicalize keep their verbatim (stripped) string so the
    ratings join is unaffected. Item records whose ISBNs collapse onto the
    same canonical id are merged: first record's metadata wins, raw_isbns
    accumulate. Returns (items, interactions, merge events).
    """

    def canon(s: str) -> str:
        return canonicalize_isbn(s) or s.strip()

    merged: dict[str, ItemRecord] = {}
    order: list[str] = []
    events: list[MergeEvent] = []
    for it in items:
        cid = canon(it.item_id)
        rec = merged.get(cid)
        if rec is None:
            merged[cid] = ItemRecord(
                item_id=cid,
                raw_isbns=set(it.raw_isbns) | {it.item_id, cid},
                title=it.title,
                author_raw=it.author_raw,
                publisher=it.publisher,
                year=it.year,
            )
            order.append(cid)
        else:
            rec.raw_isbns.update(it.raw_isbns | {it.item_id})
            events.append(MergeEvent(kept=cid, dropped=(it.item_id,), rule="isbn-normalization"))
    new_items = [merged[cid] for cid in order]
    new_interactions = resolve_duplicate_pairs(
        [
            Interaction(it.user_id, canon(it.item_id), it.rating)
            for it in interactions
        ]
    )
    return new_items, new_interactions, events


def dedup_items(items, interactions):
    """Merge items that share a normalized (title, author) pair.

    The surviving item_id is the member ISBN with the most ratings in
    `interactions` (tie: lexicographically smallest id). Interactions are
    remapped onto the survivor and duplicate (user, item) pairs that the
    merge creates are resolved by the keep-highest rule. Returns
    (items, interactions, merge events).
    """
    counts = collections.Counter(it.item_id for it in interactions)
    groups: dict[tuple[str, str], list[ItemRecord]] = collections.defaultdict(list)
    singles: list[tuple[int, ItemRecord]] = []
    positions: dict[tuple[str, str], int] = {}
    for pos, rec in enumerate(items):
        tkey, akey = fold_text(rec.title), fold_text(rec.author_raw)
        if not tkey or not akey:
            # a missing title or author must not merge unrelated records
            singles.append((pos, rec))
            continue
        key = (tkey, akey)
        positions.setdefault(key, pos)
        groups[key].append(rec)

    remap: dict[str, str] = {}
    events: list[MergeEvent] = []
    kept_at: list[tuple[int, ItemRecord]] = list(singles)
    for key, members in groups.items():
        if len(members) == 1:
            kept_at.append((positions[key], members[0]))
            continue
        winner = min(members, key=lambda r: (-counts[r.item_id], r.item_id))
        merged_isbns: set[str] = set()
        dropped: list[str] = []
        for r in members:
            merged_isbns |= r.raw_isbns
            if r is not winner:
                remap[r.item_id] = winner.item_id
                dropped.append(r.item_id)
        merged_rec = ItemRecord(
            item_id=winner.item_id,
            raw_isbns=merged_isbns | {winner.item_id},
            title=winner.title,
            author_raw=winner.author_raw,
            publisher=winner.publisher,
            year=winner.year,
            author_validated=winner.author_validated,
            author_key=winner.author_key,
        )
        kept_at.append((positions[key], merged_rec))
        events.append(MergeEvent(kept=winner.item_id, dropped=tuple(dropped), rule="title-author"))

    kept_at.sort(key=lambda pr: pr[0])
    new_items = [rec for _, rec in kept_at]
    if remap:
        new_interactions = resolve_duplicate_pairs(
            [
                Interaction(it.user_id, remap.get(it.item_id, it.item_id), it.rating)
                for it in interactions
            ]
        )
    else:
        new_interactions = list(interactions)
    return new_items, new_interactions, events


def drop_orphan_ratings(interactions, items):
    """Drop interactions whose item is absent from the catalog.

    Returns (surviving interactions, number dropped).
    """
    known = {rec.item_id for rec in items}
    kept = [it for it in interactions if it.item_id in known]
    return kept, len(interactions) - len(kept)


def preprocess(interactions, config: PreprocessConfig = PreprocessConfig()):
    """Apply the rating-count cut-offs in their documented order.

    Stages: (1) drop implicit (rating 0) rows, (2) drop users with more than
    max_user_ratings rows, (3) drop users with fewer than min_user_ratings
    rows, (4) drop items with fewer than min_item_ratings rows. With
    iterate_to_fixpoint, stages 3 and 4 repeat until no row changes.
    Returns (interactions, stage counts as (name, rows_after) pairs).
    """
    rows = list(interactions)
    counts: list[tuple[str, int]] = [("input", len(rows))]

    if config.drop_implicit:
        rows = [r for r in rows if r.rating > 0]
        counts.append(("drop_implicit", len(rows)))

    by_user = collections.Counter(r.user_id for r in rows)
    rows = [r for r in rows if by_user[r.user_id] <= config.max_user_ratings]
    counts.append(("max_user_ratings", len(rows)))

    def _user_pass(rows):
        c = collections.Counter(r.user_id for r in rows)
        return [r for r in rows if c[r.user_id] >= config.min_user_ratings]

    def _item_pass(rows):
        c = collections.Counter(r.item_id for r in rows)
        return [r for r in rows if c[r.item_id] >= config.min_item_ratings]

    rows = _user_pass(rows)
    counts.append(("min_user_ratings", len(rows)))
    rows = _item_pass(rows)
    counts.append(("min_item_ratings", len(rows)))

    if config.iterate_to_fixpoint:
        rnd = 2
        while True:
            before = len(rows)
            rows = _user_pass(rows)
            counts.append((f"min_user_ratings[{rnd}]", len(rows)))
            rows = _item_pass(rows)
            counts.append((f"min_item_ratings[{rnd}]", len(rows)))
            if len(rows) == before:
                break
            rnd += 1

    if not rows:
        raise EmptyResult("preprocessing removed every interaction; check thresholds")
    return rows, counts


@dataclass
class PipelineResult:
    interactions: list[Interaction]
    items: list[ItemRecord]
    stage_counts: list[tuple[str, int]]
    merge_report: list[MergeEvent]
    n_orphans: int

    def surviving_items(self) -> list[ItemRecord]:
        """Catalog restricted to items present in the final interactions."""
        alive = {it.item_id for it in self.interactions}
        return [rec for rec in self.items if rec.item_id in alive]

    def n_distinct_users(self) -> int:
        return len({it.user_id for it in self.interactions})

    def n_distinct_items(self) -> int:
        return len({it.item_id for it in self.interactions})


def run_pipeline(interactions, items=None, config: PreprocessConfig = PreprocessConfig()) -> PipelineResult:
    """Canonicalize ids, dedup the catalog, drop orphans, then preprocess.

    `items` may be None (ratings-only input); catalog stages are skipped then.
    """
    counts: list[tuple[str, int]] = [("parsed", len(interactions))]
    merge_report: list[MergeEvent] = []
    n_orphans = 0
    catalog: list[ItemRecord] = []
    if items is not None:
        catalog, interactions, ev = canonicalize_catalog(items, interactions)
        merge_report += ev
        counts.append(("canonical_ids", len(interactions)))
        catalog, interactions, ev = dedup_items(catalog, interactions)
        merge_report += ev
        counts.append(("dedup_items", len(interactions)))
        interactions, n_orphans = drop_orphan_ratings(interactions, catalog)
        counts.append(("drop_orphans", len(interactions)))
    interactions, pre_counts = preprocess(interactions, config)
    counts += pre_counts[1:]
    return PipelineResult(
        interactions=interactions,
        items=catalog,
        stage_counts=counts,
        merge_report=merge_report,
        n_orphans=n_orphans,
    )


def _escape_cell(s: str) -> str:
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


def write_rejects(path, rejects: list[RejectRecord]) -> None:
    """Rejects report: TSV of line_number, reason, raw_line (escaped)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("line_number\treason\traw_line\n")
        for r in rejects:
            fh.write(f"{r.line_number}\t{_escape_cell(r.reason)}\t{_escape_cell(r.raw_line)}\n")


def write_generic_ratings(path, interactions) -> None:
    """Write interactions in the generic TSV wire format."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_id\titem_id\trating\n")
        for it in interactions:
            if "\t" in it.user_id or "\t" in it.item_id:
                raise ValueError(f"tab character in id: ({it.user_id!r}, {it.item_id!r})")
            fh.write(f"{it.user_id}\t{it.item_id}\t{it.rating}\n")


def _unescape_cell(s: str) -> str:
    # single left-to-right pass so "\\t" decodes to backslash-t, not a tab
    out = []
    i = 0
    while i < len(s):
        c = s[i]
        if c == "\\" and i + 1 < len(s):
            nxt = s[i + 1]
            decoded = {"t": "\t", "n": "\n", "r": "\r", "\\": "\\"}.get(nxt)
            if decoded is not None:
                out.append(decoded)
                i += 2
                continue
        out.append(c)
        i += 1
    return "".join(out)


def write_catalog(path, items) -> None:
    """Persist a cleaned catalog as TSV so the linking stage can pick it up."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("item_id\traw_isbns\ttitle\tauthor\tpublisher\tyear\n")
        for rec in items:
            isbns = ",".join(sorted(rec.raw_isbns))
            year = "" if rec.year is None else str(rec.year)
            cells = [rec.item_id, isbns, rec.title, rec.author_raw, rec.publisher, year]
            fh.write("\t".join(_escape_cell(c) for c in cells) + "\n")


def load_catalog(path) -> list[ItemRecord]:
    """Inverse of write_catalog."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MalformedHeader(f"{path}: empty catalog file")
    expected = ["item_id", "raw_isbns", "title", "author", "publisher", "year"]
    if [c.strip().casefold() for c in lines[0].split("\t")] != expected:
        raise MalformedHeader(f"{path}: expected header {'/'.join(expected)}, got {lines[0]!r}")
    out = []
    for n, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != 6:
            raise BiasLensError(f"{path}:{n}: expected 6 columns, got {len(cells)}")
        item_id, isbns, title, author, publisher, year = (_unescape_cell(c) for c in cells)
        raw = {s for s in isbns.split(",") if s}
        out.append(
            ItemRecord(
                item_id=item_id,
                raw_isbns=raw,
                title=title,
                author_raw=author,
                publisher=publisher,
                year=None if year == "" else int(year),
            )
        )
    return out

"""Offline author enrichment: name validation, VIAF ids, WikiData countries.

The chain runs against three local dump files through a source-adapter
contract, one adapter per hop (ISBN to author name, author name to VIAF id,
VIAF id to WikiData entity with countries of citizenship). Every fuzzy step
is deterministic: ties resolve by documented rules and all log output is
sorted before emission.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .core import AuthorRecord, BiasLensError, ItemRecord, LinkStatus
from .textnorm import fold_text


class WrongAdapterKind(BiasLensError):
    pass


class MissingViafId(BiasLensError):
    pass


class AdapterKind(Enum):
    ISBN_TO_AUTHOR = "IsbnToAuthor"
    NAME_TO_VIAF = "NameToViaf"
    VIAF_TO_WIKIDATA = "ViafToWikidata"


class NameMatchMode(Enum):
    EXACT_NORMALIZED = "ExactNormalized"
    TOKEN_SET = "TokenSet"
    LEVENSHTEIN = "Levenshtein"


class CitizenshipPolicy(Enum):
    ALL = "All"
    FIRST = "First"


class Ternary(Enum):
    YES = "yes"
    NO = "no"
    UNKNOWN = "unknown"


@dataclass(frozen=True, slots=True)
class LinkConfig:
    name_match_mode: NameMatchMode = NameMatchMode.TOKEN_SET
    levenshtein_max_distance: int = 2
    multi_citizenship_policy: CitizenshipPolicy = CitizenshipPolicy.ALL

    def __post_init__(self):
        if self.levenshtein_max_distance < 0:
            raise ValueError("levenshtein_max_distance must be >= 0")


@dataclass(frozen=True, slots=True)
class SourceAdapter:
    kind: AdapterKind
    records: dict


@dataclass(frozen=True, slots=True)
class LogEvent:
    author_key: str
    event: str  # corrected | ambiguous | rejected | miss
    detail: str


@dataclass(frozen=True, slots=True)
class LinkageStats:
    n_authors: int
    status_counts: dict  # LinkStatus name -> count
    coverage: float  # authors with nonempty countries / all authors
    events: tuple  # sorted LogEvents


def normalize_author_name(raw: str) -> str:
    """Deterministic author key: reorder "Last, First", fold, collapse.

    Idempotent because folding removes the comma that triggers reordering.
    """
    s = raw.strip()
    if "," in s:
        last, first = s.split(",", 1)
        s = f"{first.strip()} {last.strip()}"
    return fold_text(s)


def levenshtein(a: str, b: str) -> int:
    """Plain edit distance, two-row dynamic programming."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def names_match(a: str, b: str, cfg: LinkConfig) -> bool:
    ka, kb = normalize_author_name(a), normalize_author_name(b)
    if cfg.name_match_mode is NameMatchMode.EXACT_NORMALIZED:
        return ka == kb
    if cfg.name_match_mode is NameMatchMode.TOKEN_SET:
        return set(ka.split()) == set(kb.split())
    return levenshtein(ka, kb) <= cfg.levenshtein_max_distance


def _require(adapter: SourceAdapter, kind: AdapterKind) -> None:
    if adapter.kind is not kind:
        raise WrongAdapterKind(f"need {kind.value}, got {adapter.kind.value}")


def validate_author(item: ItemRecord, gb: SourceAdapter, cfg: LinkConfig):
    """Check the item's author against the ISBN source; the source wins conflicts.

    Returns (updated item, log events). The updated record always carries
    author_validated and author_key; when the ISBN is unknown to the source,
    the raw name is adopted unvalidated and a miss is logged.
    """
    _require(gb, AdapterKind.ISBN_TO_AUTHOR)
    events: list[LogEvent] = []
    source_name = gb.records.get(item.item_id)
    if source_name is None:
        validated = item.author_raw
        events.append(
            LogEvent(normalize_author_name(validated), "miss",
                     f"isbn {item.item_id} not in author source")
        )
    elif names_match(source_name, item.author_raw, cfg):
        validated = source_name
    else:
        validated = source_name
        events.append(
            LogEvent(normalize_author_name(validated), "corrected",
                     f"isbn {item.item_id}: source {source_name!r} replaced raw {item.author_raw!r}")
        )
    out = replace(item, author_validated=validated, author_key=normalize_author_name(validated))
    return out, events


def link_to_viaf(author: AuthorRecord, viaf: SourceAdapter, cfg: LinkConfig):
    """Resolve author_key to a VIAF id; smallest numeric id wins ambiguity.

    Returns (updated author, log events); a miss leaves the record unchanged.
    """
    _require(viaf, AdapterKind.NAME_TO_VIAF)
    events: list[LogEvent] = []
    candidates = viaf.records.get(author.author_key)
    if not candidates:
        events.append(LogEvent(author.author_key, "miss", "author key not in viaf source"))
        return author, events
    if len(candidates) > 1:
        chosen = min(candidates, key=int)
        events.append(
            LogEvent(author.author_key, "ambiguous",
                     f"viaf candidates {sorted(candidates, key=int)}, chose {chosen}")
        )
    else:
        chosen = candidates[0]
    out = replace(author, viaf_id=chosen,
                  link_status=max(author.link_status, LinkStatus.VIAF_LINKED))
    return out, events


def link_to_wikidata(author: AuthorRecord, wd: SourceAdapter, cfg: LinkConfig):
    """Resolve VIAF id to a WikiData entity, validating by entity label.

    On a label match the record gets wikidata_id and countries (filtered by
    the multi-citizenship policy); a failed label validation is logged as a
    rejection and the record stays ViafLinked.
    """
    _require(wd, AdapterKind.VIAF_TO_WIKIDATA)
    if author.viaf_id is None:
        raise MissingViafId(f"author {author.author_key!r} has no viaf_id")
    events: list[LogEvent] = []
    hit = wd.records.get(author.viaf_id)
    if hit is None:
        events.append(LogEvent(author.author_key, "miss",
                               f"viaf {author.viaf_id} not in wikidata source"))
        return author, events
    qid, label, countries = hit
    if not names_match(label, author.display_name, cfg):
        events.append(
            LogEvent(author.author_key, "rejected",
                     f"wikidata {qid} label {label!r} does not match author name")
        )
        return author, events
    if cfg.multi_citizenship_policy is CitizenshipPolicy.FIRST:
        countries = countries[:1]
    out = replace(author, wikidata_id=qid, countries=frozenset(countries),
                  link_status=LinkStatus.WIKIDATA_LINKED)
    return out, events


def enrich_catalog(items, authors, adapters: dict, cfg: LinkConfig = LinkConfig()):
    """Run validate -> viaf -> wikidata for every distinct author key.

    `adapters` maps AdapterKind to SourceAdapter and must cover all three
    kinds. Pre-existing author records (matched by author_key) are enriched
    in place of fresh ones. Per-author linking is independent, so the walk
    order cannot leak state across records; events are sorted before being
    returned inside LinkageStats.

    Returns (items with validated authors, author records, LinkageStats).
    """
    for kind in AdapterKind:
        if kind not in adapters:
            raise WrongAdapterKind(f"missing adapter {kind.value}")
        _require(adapters[kind], kind)

    events: list[LogEvent] = []
    new_items: list[ItemRecord] = []
    validated_hit: dict[str, bool] = {}
    display: dict[str, str] = {}
    order: list[str] = []
    for item in items:
        it2, ev = validate_author(item, adapters[AdapterKind.ISBN_TO_AUTHOR], cfg)
        events += ev
        new_items.append(it2)
        key = it2.author_key
        if not key:
            continue  # empty author name is unlinkable
        if key not in display:
            display[key] = it2.author_validated
            order.append(key)
        hit = not any(e.event == "miss" for e in ev)
        validated_hit[key] = validated_hit.get(key, False) or hit

    existing = {a.author_key: a for a in authors}
    out_authors: list[AuthorRecord] = []
    for key in order:
        rec = existing.get(key)
        if rec is None:
            rec = AuthorRecord(author_key=key, display_name=display[key])
        if validated_hit[key] and rec.link_status < LinkStatus.NAME_VALIDATED:
            rec = replace(rec, link_status=LinkStatus.NAME_VALIDATED)
        rec, ev = link_to_viaf(rec, adapters[AdapterKind.NAME_TO_VIAF], cfg)
        events += ev
        if rec.viaf_id is not None:
            rec, ev = link_to_wikidata(rec, adapters[AdapterKind.VIAF_TO_WIKIDATA], cfg)
            events += ev
        out_authors.append(rec)

    n = len(out_authors)
    counts = {status.name: 0 for status in LinkStatus}
    for rec in out_authors:
        counts[rec.link_status.name] += 1
    covered = sum(1 for rec in out_authors if rec.countries)
    stats = LinkageStats(
        n_authors=n,
        status_counts=counts,
        coverage=covered / n if n else 0.0,
        events=tuple(sorted(events, key=lambda e: (e.author_key, e.event, e.detail))),
    )
    return new_items, out_authors, stats


def is_target_country(item: ItemRecord, authors: dict, target: str) -> Ternary:
    """Ternary country test for one item against its linked author.

    `authors` maps author_key to AuthorRecord. Unknown means no linked
    author or an empty country set.
    """
    if not item.author_key:
        return Ternary.UNKNOWN
    rec = authors.get(item.author_key)
    if rec is None or not rec.countries:
        return Ternary.UNKNOWN
    return Ternary.YES if target in rec.countries else Ternary.NO


def load_isbn_to_author(path) -> SourceAdapter:
    """Headerless UTF-8 TSV: isbn, author_name. Keys are canonicalized."""
    from .ingest import canonicalize_isbn

    records: dict[str, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for raw in fh:
            raw = raw.rstrip("\n").rstrip("\r")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) < 2:
                continue
            key = canonicalize_isbn(parts[0]) or parts[0].strip()
            records[key] = parts[1]
    return SourceAdapter(AdapterKind.ISBN_TO_AUTHOR, records)


def load_name_to_viaf(path) -> SourceAdapter:
    """Headerless UTF-8 TSV: author_key, viaf_id. Keys re-normalized, ids digits-only."""
    records: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for raw in fh:
            raw = raw.rstrip("\n").rstrip("\r")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) < 2:
                continue
            key = normalize_author_name(parts[0])
            digits = "".join(c for c in parts[1] if c.isdigit())
            if not key or not digits:
                continue
            records.setdefault(key, [])
            if digits not in records[key]:
                records[key].append(digits)
    return SourceAdapter(AdapterKind.NAME_TO_VIAF, records)


def load_viaf_to_wikidata(path) -> SourceAdapter:
    """Headerless UTF-8 TSV: viaf_id, wikidata_qid, entity_label, country codes.

    The last column is comma-separated ISO 3166-1 alpha-2 and may be empty.
    """
    records: dict[str, tuple[str, str, tuple[str, ...]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for raw in fh:
            raw = raw.rstrip("\n").rstrip("\r")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) < 3:
                continue
            viaf = "".join(c for c in parts[0] if c.isdigit())
            qid, label = parts[1], parts[2]
            col = parts[3] if len(parts) > 3 else ""
            countries = tuple(c.strip().upper() for c in col.split(",") if c.strip())
            if viaf:
                records[viaf] = (qid, label, countries)
    return SourceAdapter(AdapterKind.VIAF_TO_WIKIDATA, records)


def write_linkage_log(path, events) -> None:
    """Linkage log wire format: TSV of author_key, event, detail."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in events:
            detail = e.detail.replace("\t", " ").replace("\n", " ")
            fh.write(f"{e.author_key}\t{e.event}\t{detail}\n")


def write_item_countries(path, items, authors: dict) -> None:
    """Item-country table consumed by the audit: TSV of item_id, country codes.

    Countries are comma-separated and sorted; the column is empty for items
    whose author is unlinked or country-less.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            rec = authors.get(item.author_key) if item.author_key else None
            countries = sorted(rec.countries) if rec is not None else []
            fh.write(f"{item.item_id}\t{','.join(countries)}\n")


def load_item_countries(path) -> dict[str, frozenset[str]]:
    """Inverse of write_item_countries; missing column means no countries."""
    out: dict[str, frozenset[str]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for raw in fh:
            raw = raw.rstrip("\n").rstrip("\r")
            if not raw:
                continue
            parts = raw.split("\t")
            item_id = parts[0]
            col = parts[1] if len(parts) > 1 else ""
            out[item_id] = frozenset(c.strip().upper() for c in col.split(",") if c.strip())
    return out

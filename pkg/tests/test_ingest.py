"""Parsing, ISBN canonicalization, catalog repair, and cut-off filtering."""

import collections

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biaslens.core import Interaction, ItemRecord
from biaslens.ingest import (
    EmptyResult,
    MalformedHeader,
    EncodingError,
    PreprocessConfig,
    canonicalize_catalog,
    canonicalize_isbn,
    dedup_items,
    drop_orphan_ratings,
    parse_generic_ratings,
    parse_items,
    parse_ratings,
    parse_users,
    preprocess,
    resolve_duplicate_pairs,
    run_pipeline,
    write_generic_ratings,
    write_rejects,
)

RATINGS_HEADER = '"User-ID";"ISBN";"Book-Rating"\n'


def _write(path, text, encoding="latin-1"):
    path.write_bytes(text.encode(encoding))
    return path


def test_parse_ratings_basic_line(tmp_path):
    p = _write(tmp_path / "r.csv", RATINGS_HEADER + '"276725";"034545104X";"0"\n')
    out, rejects = parse_ratings(p)
    assert out == [Interaction("276725", "034545104X", 0)]
    assert rejects == []


def test_parse_ratings_empty_data_section(tmp_path):
    p = _write(tmp_path / "r.csv", RATINGS_HEADER)
    out, rejects = parse_ratings(p)
    assert out == [] and rejects == []


def test_parse_ratings_reject_accounting(tmp_path):
    body = RATINGS_HEADER + '"u1";"1111111111";"7"\n"u2";"2222222222"\n'
    p = _write(tmp_path / "r.csv", body)
    out, rejects = parse_ratings(p)
    assert len(out) == 1 and len(rejects) == 1
    assert rejects[0].line_number == 3
    assert "fields" in rejects[0].reason


def test_parse_ratings_bad_rating_values(tmp_path):
    body = RATINGS_HEADER + '"u";"1111111111";"11"\n"u";"1111111111";"x"\n'
    p = _write(tmp_path / "r.csv", body)
    out, rejects = parse_ratings(p)
    assert out == [] and len(rejects) == 2


def test_parse_ratings_header_mismatch(tmp_path):
    p = _write(tmp_path / "r.csv", '"User";"ISBN";"Rating"\n')
    with pytest.raises(MalformedHeader):
        parse_ratings(p)


def test_parse_ratings_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_ratings(tmp_path / "absent.csv")


def test_parse_ratings_encoding_error(tmp_path):
    p = tmp_path / "r.csv"
    p.write_bytes(RATINGS_HEADER.encode() + b'"u";"1111111111";"\xff"\n')
    with pytest.raises(EncodingError):
        parse_ratings(p, encoding="utf-8")


def test_parse_items_field_mapping(tmp_path):
    body = (
        '"ISBN";"Book-Title";"Book-Author";"Year-Of-Publication";"Publisher";"Image-URL-S"\n'
        '"034545104X";"Flesh Tones";"M. J. Rose";"2002";"Ballantine";"http://x"\n'
        '"0111111111";"Old";"A. B.";"0";"P"\n'
    )
    p = _write(tmp_path / "b.csv", body)
    out, rejects = parse_items(p)
    assert rejects == []
    assert out[0].item_id == "034545104X"
    assert out[0].title == "Flesh Tones"
    assert out[0].author_raw == "M. J. Rose"
    assert out[0].year == 2002
    assert out[0].publisher == "Ballantine"
    assert out[0].raw_isbns == {"034545104X"}
    assert out[0].author_validated is None
    # year sentinel 0 maps to absent
    assert out[1].year is None


def test_parse_users_location_verbatim(tmp_path):
    body = '"User-ID";"Location";"Age"\n"1";"tyler, texas, usa";"NULL"\n"2";"oslo, norway";"34"\n'
    p = _write(tmp_path / "u.csv", body)
    out, rejects = parse_users(p)
    assert rejects == []
    assert out[0] == ("1", "tyler, texas, usa", None)
    assert out[1] == ("2", "oslo, norway", 34)


def test_parse_generic_ratings_roundtrip(tmp_path):
    inter = [Interaction("u1", "i1", 5), Interaction("u2", "i9", 10)]
    p = tmp_path / "g.tsv"
    write_generic_ratings(p, inter)
    out, rejects = parse_generic_ratings(p)
    assert out == inter and rejects == []


def test_parse_generic_ratings_three_lines(tmp_path):
    p = tmp_path / "g.tsv"
    p.write_text("user_id\titem_id\trating\na\tx\t1\nb\ty\t2\nc\tz\t3\n", encoding="utf-8")
    out, rejects = parse_generic_ratings(p)
    assert len(out) == 3 and rejects == []


def test_canonicalize_isbn():
    assert canonicalize_isbn("0-345-45104-x") == "034545104X"
    assert canonicalize_isbn("034545104X") == "034545104X"  # idempotent
    assert canonicalize_isbn("not-an-isbn") is None
    assert canonicalize_isbn("9780345451040") == "9780345451040"
    assert canonicalize_isbn("12345") is None
    assert canonicalize_isbn("123456789Y") is None


def test_resolve_duplicate_pairs_keeps_highest_then_first():
    inter = [
        Interaction("u", "i", 7),
        Interaction("u", "i", 9),
        Interaction("u", "i", 9),
        Interaction("v", "i", 3),
    ]
    out = resolve_duplicate_pairs(inter)
    assert out == [Interaction("u", "i", 9), Interaction("v", "i", 3)]


def _item(isbn, title, author):
    return ItemRecord(item_id=isbn, raw_isbns={isbn}, title=title, author_raw=author)


def test_dedup_items_majority_isbn_wins():
    items = [_item("1111111111", "A Tale", "Jane Doe"), _item("2222222222", "a tale!!!", "JANE DOE")]
    inter = [
        Interaction("u1", "2222222222", 5),
        Interaction("u2", "2222222222", 6),
        Interaction("u3", "2222222222", 7),
        Interaction("u4", "1111111111", 8),
    ]
    items2, inter2, events = dedup_items(items, inter)
    assert len(items2) == 1
    assert items2[0].item_id == "2222222222"
    assert items2[0].raw_isbns == {"1111111111", "2222222222"}
    assert len(inter2) == 4
    assert all(it.item_id == "2222222222" for it in inter2)
    assert events == [type(events[0])(kept="2222222222", dropped=("1111111111",), rule="title-author")]


def test_dedup_items_different_authors_not_merged():
    items = [_item("1111111111", "A Tale", "Jane Doe"), _item("2222222222", "A Tale", "John Smith")]
    items2, _, events = dedup_items(items, [])
    assert len(items2) == 2 and events == []


def test_dedup_items_overlapping_rater_keeps_highest():
    items = [_item("1111111111", "A Tale", "Jane Doe"), _item("2222222222", "A Tale", "Jane Doe")]
    inter = [
        Interaction("u", "1111111111", 7),
        Interaction("u", "2222222222", 9),
        Interaction("w", "1111111111", 2),
        Interaction("w2", "1111111111", 2),
    ]
    _, inter2, _ = dedup_items(items, inter)
    ratings = {(it.user_id, it.item_id): it.rating for it in inter2}
    # 1111111111 has more raters, so it wins the merge; u keeps the max rating
    assert ratings[("u", "1111111111")] == 9
    assert len(inter2) == 3


def test_dedup_items_tie_breaks_lexicographically():
    items = [_item("2222222222", "T", "A"), _item("1111111111", "T", "A")]
    inter = [Interaction("u", "2222222222", 5), Interaction("v", "1111111111", 5)]
    items2, _, _ = dedup_items(items, inter)
    assert items2[0].item_id == "1111111111"


def test_dedup_items_blank_metadata_never_merges():
    items = [_item("1111111111", "", ""), _item("2222222222", "", "")]
    items2, _, events = dedup_items(items, [])
    assert len(items2) == 2 and events == []


def test_canonicalize_catalog_merges_isbn_variants():
    items = [_item("0-345-45104-x", "Flesh Tones", "M. J. Rose"), _item("034545104X", "Flesh Tones", "M. J. Rose")]
    inter = [Interaction("u", "0-345-45104-x", 4), Interaction("u", "034545104X", 6)]
    items2, inter2, events = canonicalize_catalog(items, inter)
    assert len(items2) == 1 and items2[0].item_id == "034545104X"
    assert "0-345-45104-x" in items2[0].raw_isbns
    assert inter2 == [Interaction("u", "034545104X", 6)]
    assert len(events) == 1


def test_drop_orphan_ratings():
    items = [_item("1111111111", "T", "A")]
    inter = [Interaction("u", "1111111111", 5), Interaction("u", "9999999999", 5)]
    kept, dropped = drop_orphan_ratings(inter, items)
    assert kept == [Interaction("u", "1111111111", 5)] and dropped == 1
    kept2, dropped2 = drop_orphan_ratings(kept, items)
    assert kept2 == kept and dropped2 == 0


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=40))
@settings(max_examples=50, deadline=None)
def test_drop_orphans_membership_oracle(pairs):
    items = [_item(f"{k}{'0' * 9}", "T", "A") for k in range(3)]
    known = {it.item_id for it in items}
    inter = [Interaction(f"u{u}", f"{i}{'0' * 9}", 5) for u, i in dict.fromkeys(pairs)]
    kept, dropped = drop_orphan_ratings(inter, items)
    assert [it for it in inter if it.item_id in known] == kept
    assert dropped == sum(1 for it in inter if it.item_id not in known)


def _flood(user, n, item_prefix="f", rating=5):
    return [Interaction(user, f"{item_prefix}{k}", rating) for k in range(n)]


def test_preprocess_boundary_201_ratings_removed():
    base = []
    # 5 background users sharing 5 items keeps those items above the item cut-off
    for u in range(5):
        for i in range(5):
            base.append(Interaction(f"bg{u}", f"s{i}", 6))
    heavy = _flood("heavy", 201, item_prefix="s0_")  # fresh items, dropped later anyway
    out, counts = preprocess(base + heavy, PreprocessConfig())
    users = {it.user_id for it in out}
    assert "heavy" not in users
    stage = dict(counts)
    assert stage["input"] == len(base) + 201
    assert stage["max_user_ratings"] == len(base)


def test_preprocess_boundary_exactly_200_kept():
    inter = []
    for u in range(5):
        for i in range(200):
            inter.append(Interaction(f"u{u}", f"i{i}", 7))
    out, _ = preprocess(inter, PreprocessConfig())
    assert len(out) == 1000


def test_preprocess_boundary_exactly_5_kept():
    inter = [Interaction(f"u{u}", f"i{k}", 8) for u in range(5) for k in range(5)]
    out, _ = preprocess(inter, PreprocessConfig())
    assert len(out) == 25
    assert {it.user_id for it in out} == {f"u{u}" for u in range(5)}


def test_preprocess_drop_implicit_first():
    inter = [Interaction("u", f"i{k}", 0) for k in range(10)]
    inter += [Interaction(f"v{j}", "x", 5) for j in range(5)]
    with pytest.raises(EmptyResult):
        # x has 5 raters but each v-user has a single rating; everything dies
        preprocess(inter, PreprocessConfig())
    out, counts = preprocess(inter, PreprocessConfig(min_user_ratings=1))
    assert all(it.rating > 0 for it in out)
    assert dict(counts)["drop_implicit"] == 5


def test_preprocess_empty_result_raises():
    with pytest.raises(EmptyResult):
        preprocess([Interaction("u", "i", 3)], PreprocessConfig())


@st.composite
def rating_datasets(draw):
    pairs = draw(
        st.lists(
            st.tuples(st.integers(0, 8), st.integers(0, 8)),
            min_size=1,
            max_size=120,
            unique=True,
        )
    )
    return [
        Interaction(f"u{u}", f"i{i}", draw(st.integers(0, 10))) for u, i in pairs
    ]


@given(rating_datasets())
@settings(max_examples=40, deadline=None)
def test_preprocess_fixpoint_idempotent(inter):
    cfg = PreprocessConfig(min_user_ratings=2, min_item_ratings=2, iterate_to_fixpoint=True)
    try:
        once, _ = preprocess(inter, cfg)
    except EmptyResult:
        return
    twice, _ = preprocess(once, cfg)
    assert twice == once
    # fixpoint bounds hold simultaneously
    cu = collections.Counter(r.user_id for r in once)
    ci = collections.Counter(r.item_id for r in once)
    assert all(2 <= c <= 200 for c in cu.values())
    assert all(c >= 2 for c in ci.values())


@given(st.lists(st.text(alphabet='abc";\\\t0123456789', max_size=30), max_size=30))
@settings(max_examples=60, deadline=None)
def test_parser_accounting_never_silently_drops(tmp_path_factory, lines):
    body = RATINGS_HEADER + "".join(line + "\n" for line in lines)
    p = tmp_path_factory.mktemp("acc") / "r.csv"
    p.write_bytes(body.encode("latin-1"))
    out, rejects = parse_ratings(p)
    n_data_lines = body.count("\n") - 1
    assert len(out) + len(rejects) == n_data_lines


def test_run_pipeline_end_to_end_hand_checked(tmp_path):
    items = [
        _item("0-111-11111-X", "A Tale", "Jane Doe"),
        _item("9111111116", "A TALE!!!", "jane doe"),
        _item("2222222222", "Other", "John Smith"),
    ]
    inter = [
        Interaction("u1", "0-111-11111-x", 7),
        Interaction("u1", "9111111116", 9),
        Interaction("u2", "9111111116", 5),
        Interaction("u3", "2222222222", 8),
        Interaction("u4", "3333333333", 6),  # orphan: never in the catalog
    ]
    cfg = PreprocessConfig(min_user_ratings=1, min_item_ratings=1)
    res = run_pipeline(inter, items, cfg)
    assert dict(res.stage_counts) == {
        "parsed": 5,
        "canonical_ids": 5,
        "dedup_items": 4,  # u1's two copies of the same book collapse
        "drop_orphans": 3,
        "drop_implicit": 3,
        "max_user_ratings": 3,
        "min_user_ratings": 3,
        "min_item_ratings": 3,
    }
    assert res.n_orphans == 1
    # 9111111116 had 2 ratings vs 1, so it survives the title-author merge
    assert {it.item_id for it in res.interactions} == {"9111111116", "2222222222"}
    ratings = {(it.user_id, it.item_id): it.rating for it in res.interactions}
    assert ratings[("u1", "9111111116")] == 9
    assert len(res.surviving_items()) == 2
    assert res.n_distinct_users() == 3


def test_write_rejects_escapes_tabs(tmp_path):
    from biaslens.ingest import RejectRecord

    p = tmp_path / "rej.tsv"
    write_rejects(p, [RejectRecord(2, "weird\tline", "a\tb\nc")])
    lines = p.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "line_number\treason\traw_line"
    assert lines[1] == "2\tweird\\tline\ta\\tb\\nc"

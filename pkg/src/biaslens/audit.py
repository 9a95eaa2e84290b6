"""Bias measurements over a train/test split of rating data.

The protocol: split interactions, fit each algorithm on the train matrix,
produce a top-k list per training user, then compare recommendations with
the users' own profiles along two axes: item popularity (per-user GAP and
the aggregate %ΔGAP) and a ternary item attribute such as author country
(per-user ratios, their unweighted means, and a Welch t-test between the
popularity of attribute-yes and attribute-no items). Everything is seeded
and summations run in index order, so equal inputs give byte-identical
reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from .core import (
    BiasLensError,
    Interaction,
    InteractionMatrix,
    build_matrix,
    matrix_popularity,
    rng_stream,
)
from .linker import Ternary
from .recsys import AlgorithmSpec, Kind, fit, kind_from_string, recommend_top_k
from .stats import TTestResult, welch_ttest

Predicate = Callable[[str], Ternary]


class ZeroProfileGap(BiasLensError):
    """Mean profile popularity is zero; the input matrix is broken."""


class MalformedRecommendationFile(BiasLensError):
    pass


class UnknownPolicy(Enum):
    EXCLUDE = "Exclude"
    COUNT_AS_NO = "CountAsNo"


@dataclass(frozen=True, slots=True)
class SplitResult:
    train: InteractionMatrix
    test: tuple[Interaction, ...]
    ratio: float
    seed: int
    # ids seen in test but absent from train; they get no recommendations
    test_only_users: tuple[str, ...]
    test_only_items: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class RecommendationSet:
    """Ranked top-k lists for every training user of one fitted algorithm."""

    algorithm: Kind
    seed: int
    k: int
    recs: dict  # user index -> tuple of (item index, score), rank order

    def users(self) -> list[int]:
        return sorted(self.recs)


@dataclass(frozen=True, slots=True)
class PerUserRow:
    user_id: str
    profile_ratio: float | None
    rec_ratio: float | None
    profile_gap: float
    rec_gap: float


@dataclass(frozen=True, slots=True)
class AttributeRatios:
    avg_profile_ratio: float
    avg_rec_ratio: float
    rows: tuple  # (user index, profile_ratio | None, rec_ratio | None)
    omitted_users: tuple[int, ...]  # undefined on at least one side


@dataclass(frozen=True, slots=True)
class AuditReport:
    algorithm: Kind
    seed: int
    k: int
    delta_gap_pct: float
    avg_profile_ratio: float
    avg_rec_ratio: float
    unknown_policy: UnknownPolicy
    t_test: TTestResult
    per_user: tuple  # PerUserRow, user index order
    omitted_users: tuple[str, ...]  # users lacking a ratio on either side


def split(interactions, ratio: float = 0.8, seed: int = 0,
          stratified: bool = False) -> SplitResult:
    """Seeded uniform train/test partition of an interaction list.

    The default mode shuffles globally and takes round(n * ratio) rows for
    train; stratified mode applies the same rule per user, as a sensitivity
    check for users with tiny profiles. Train keeps input order, so matrix
    indexing stays first-appearance deterministic.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    interactions = list(interactions)
    n = len(interactions)
    train_mask = np.zeros(n, dtype=bool)
    if stratified:
        by_user: dict[str, list[int]] = {}
        for idx, it in enumerate(interactions):
            by_user.setdefault(it.user_id, []).append(idx)
        for user_id, idxs in by_user.items():
            order = rng_stream(seed, "split", "user", user_id).permutation(len(idxs))
            n_train = int(round(len(idxs) * ratio))
            for pos in order[:n_train]:
                train_mask[idxs[pos]] = True
    else:
        order = rng_stream(seed, "split", "global").permutation(n)
        train_mask[order[:int(round(n * ratio))]] = True

    train_rows = [it for idx, it in enumerate(interactions) if train_mask[idx]]
    test_rows = tuple(it for idx, it in enumerate(interactions) if not train_mask[idx])
    train = build_matrix(train_rows)
    test_only_users = sorted({it.user_id for it in test_rows} - train.user_pos.keys())
    test_only_items = sorted({it.item_id for it in test_rows} - train.item_pos.keys())
    return SplitResult(train=train, test=test_rows, ratio=ratio, seed=seed,
                       test_only_users=tuple(test_only_users),
                       test_only_items=tuple(test_only_items))


def _ternary_codes(train: InteractionMatrix, predicate: Predicate) -> np.ndarray:
    """Per item column: +1 for yes, 0 for no, -1 for unknown."""
    codes = np.empty(train.n_items, dtype=np.int64)
    for i, item_id in enumerate(train.item_ids):
        verdict = predicate(item_id)
        codes[i] = 1 if verdict is Ternary.YES else (0 if verdict is Ternary.NO else -1)
    return codes


def group_popularity_ttest(train: InteractionMatrix, predicate: Predicate) -> TTestResult:
    """Welch t-test between train popularity of attribute-yes and -no items.

    Unknown items are excluded. Raises DegenerateGroup (from the stats
    layer) when a group has fewer than two items or both groups have zero
    variance.
    """
    codes = _ternary_codes(train, predicate)
    pop = matrix_popularity(train).astype(np.float64)
    return welch_ttest(pop[codes == 1], pop[codes == 0])


def per_user_gaps(train: InteractionMatrix, recs: RecommendationSet) -> dict:
    """user index -> (mean train popularity of profile, same for rec list)."""
    pop = matrix_popularity(train).astype(np.float64)
    out: dict[int, tuple[float, float]] = {}
    for u in recs.users():
        cols, _ = train.user_row(u)
        items = [i for i, _ in recs.recs[u]]
        profile_gap = float(pop[cols].mean())
        rec_gap = float(pop[items].mean()) if items else 0.0
        out[u] = (profile_gap, rec_gap)
    return out


def delta_gap_pct(train: InteractionMatrix, recs: RecommendationSet) -> float:
    """Relative change, in percent, of mean recommended-item popularity
    against mean profile popularity, averaged per user first."""
    gaps = per_user_gaps(train, recs)
    if not gaps:
        raise ZeroProfileGap("no users to audit")
    profile = [gaps[u][0] for u in sorted(gaps)]
    rec = [gaps[u][1] for u in sorted(gaps)]
    gap_profile = sum(profile) / len(profile)
    gap_rec = sum(rec) / len(rec)
    if gap_profile == 0.0:
        raise ZeroProfileGap("mean profile popularity is zero")
    return 100.0 * (gap_rec - gap_profile) / gap_profile


def _ratio(items, codes: np.ndarray, policy: UnknownPolicy) -> float | None:
    yes = int(np.count_nonzero(codes[items] == 1))
    if policy is UnknownPolicy.EXCLUDE:
        denom = int(np.count_nonzero(codes[items] >= 0))
    else:
        denom = len(items)
    return yes / denom if denom else None


def attribute_ratios(train: InteractionMatrix, recs: RecommendationSet,
                     predicate: Predicate,
                     unknown_policy: UnknownPolicy = UnknownPolicy.EXCLUDE) -> AttributeRatios:
    """Per-user fraction of attribute-yes items in profile and in the top-k.

    Under Exclude the denominator drops unknown items; a user whose profile
    or list is all-unknown has no ratio on that side, is omitted from that
    side's average, and lands in omitted_users.
    """
    codes = _ternary_codes(train, predicate)
    rows = []
    omitted = []
    p_vals, r_vals = [], []
    for u in recs.users():
        cols, _ = train.user_row(u)
        rec_items = np.array([i for i, _ in recs.recs[u]], dtype=np.int64)
        pr = _ratio(cols, codes, unknown_policy)
        rr = _ratio(rec_items, codes, unknown_policy)
        rows.append((u, pr, rr))
        if pr is None or rr is None:
            omitted.append(u)
        if pr is not None:
            p_vals.append(pr)
        if rr is not None:
            r_vals.append(rr)
    avg_p = sum(p_vals) / len(p_vals) if p_vals else 0.0
    avg_r = sum(r_vals) / len(r_vals) if r_vals else 0.0
    return AttributeRatios(avg_profile_ratio=avg_p, avg_rec_ratio=avg_r,
                           rows=tuple(rows), omitted_users=tuple(omitted))


def country_predicate(catalog: dict, target: str) -> Predicate:
    """Ternary membership test against an item -> country-set mapping."""
    def predicate(item_id: str) -> Ternary:
        countries = catalog.get(item_id)
        if not countries:
            return Ternary.UNKNOWN
        return Ternary.YES if target in countries else Ternary.NO
    return predicate


def recommend_all(model, k: int) -> RecommendationSet:
    """Top-k lists, seen items excluded, for every training user."""
    recs = {u: tuple(recommend_top_k(model, u, k, exclude_seen=True))
            for u in range(model.n_users)}
    return RecommendationSet(algorithm=model.kind, seed=model.seed, k=k, recs=recs)


def run_audit(train: InteractionMatrix, algorithms, k: int = 10,
              predicate: Predicate | None = None,
              policy: UnknownPolicy = UnknownPolicy.EXCLUDE) -> list[AuditReport]:
    """Fit every algorithm, recommend for every training user, measure bias.

    Returns one report per AlgorithmSpec, in input order. The t-test is a
    property of the data, not the recommender, so all reports share it.
    """
    algorithms = list(algorithms)
    if not algorithms:
        return []
    if predicate is None:
        raise ValueError("an item attribute predicate is required")
    t_test = group_popularity_ttest(train, predicate)
    reports = []
    for spec in algorithms:
        model = fit(spec, train)
        recs = recommend_all(model, k)
        reports.append(build_report(train, recs, predicate, policy, t_test))
    return reports


def build_report(train: InteractionMatrix, recs: RecommendationSet,
                 predicate: Predicate, policy: UnknownPolicy,
                 t_test: TTestResult) -> AuditReport:
    """Assemble one algorithm's AuditReport from its recommendation set."""
    ratios = attribute_ratios(train, recs, predicate, policy)
    gaps = per_user_gaps(train, recs)
    per_user = tuple(
        PerUserRow(user_id=train.user_ids[u], profile_ratio=pr, rec_ratio=rr,
                   profile_gap=gaps[u][0], rec_gap=gaps[u][1])
        for u, pr, rr in ratios.rows
    )
    return AuditReport(
        algorithm=recs.algorithm,
        seed=recs.seed,
        k=recs.k,
        delta_gap_pct=delta_gap_pct(train, recs),
        avg_profile_ratio=ratios.avg_profile_ratio,
        avg_rec_ratio=ratios.avg_rec_ratio,
        unknown_policy=policy,
        t_test=t_test,
        per_user=per_user,
        omitted_users=tuple(train.user_ids[u] for u in ratios.omitted_users),
    )


def generate_synthetic(n_users: int, n_items: int, zipf_s: float = 1.0,
                       target_fraction: float = 0.685, bias_strength: float = 1.0,
                       seed: int = 0):
    """Seeded rating corpus with Zipf popularity and a planted attribute skew.

    Item draw weights follow 1/rank^zipf_s. Exactly round(target_fraction *
    n_items) items carry the target country; which ones is decided by a
    Gumbel perturbation of the standardized log-weights scaled by
    bias_strength, so strength 0 picks a uniform subset and strength 1
    concentrates the attribute on popular items. Ratings are 1..10 around a
    mean of 5.5 with a mild quality bump for popular items.

    Returns (interactions, catalog) with catalog mapping item id to a
    frozenset of country codes.
    """
    if n_users < 1 or n_items < 2:
        raise ValueError("need at least 1 user and 2 items")
    if not 0.0 <= target_fraction <= 1.0 or not 0.0 <= bias_strength <= 1.0:
        raise ValueError("target_fraction and bias_strength must be in [0, 1]")
    if zipf_s < 0.0:
        raise ValueError("zipf_s must be >= 0")

    log_w = -zipf_s * np.log(np.arange(1, n_items + 1, dtype=np.float64))
    std = float(log_w.std())
    zscore = (log_w - log_w.mean()) / std if std > 0 else np.zeros(n_items)

    # Gumbel-top-k subset draw; the coupling scale 6 makes strength 1 nearly
    # sort the items by weight while strength 0 stays exactly uniform
    assign = rng_stream(seed, "synth", "assign")
    gumbel = -np.log(-np.log(assign.uniform(size=n_items)))
    keys = gumbel + 6.0 * bias_strength * zscore
    n_target = int(round(target_fraction * n_items))
    target_items = set(np.argsort(-keys, kind="stable")[:n_target].tolist())

    item_ids = [f"b{i:05d}" for i in range(n_items)]
    catalog = {item_ids[i]: frozenset({"US"} if i in target_items else {"GB"})
               for i in range(n_items)}

    interactions = []
    for u in range(n_users):
        basket = rng_stream(seed, "synth", "basket", str(u))
        n_u = int(basket.integers(15, 46))
        n_u = min(n_u, n_items)
        pick_keys = -np.log(-np.log(basket.uniform(size=n_items))) + log_w
        picked = np.argsort(-pick_keys, kind="stable")[:n_u]
        raw = basket.normal(5.5, 1.8, size=n_u) + 0.5 * zscore[picked]
        ratings = np.clip(np.rint(raw), 1, 10).astype(np.int64)
        uid = f"u{u:05d}"
        for i, r in zip(picked.tolist(), ratings.tolist()):
            interactions.append(Interaction(uid, item_ids[i], int(r)))

    # guarantee every catalog item is rated at least once, so the matrix
    # covers the full catalog and unweighted recommenders see the true
    # attribute fraction; the +1 only nudges the deep Zipf tail
    rated = {it.item_id for it in interactions}
    cover = rng_stream(seed, "synth", "coverage")
    for i, item_id in enumerate(item_ids):
        if item_id in rated:
            continue
        u = int(cover.integers(0, n_users))
        r = int(np.clip(np.rint(cover.normal(5.5, 1.8) + 0.5 * zscore[i]), 1, 10))
        interactions.append(Interaction(f"u{u:05d}", item_id, r))
    return interactions, catalog


def write_recommendations(path, recs: RecommendationSet, train: InteractionMatrix) -> None:
    """Recommendation wire format: headerless TSV of
    algorithm, seed, user_id, rank, item_id, score."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u in recs.users():
            uid = train.user_ids[u]
            for rank, (item, score) in enumerate(recs.recs[u], 1):
                fh.write(f"{recs.algorithm.value}\t{recs.seed}\t{uid}\t{rank}\t"
                         f"{train.item_ids[item]}\t{score!r}\n")


def load_recommendations(path, train: InteractionMatrix) -> RecommendationSet:
    """Inverse of write_recommendations for a single algorithm's file."""
    algorithm: Kind | None = None
    seed: int | None = None
    per_user: dict[int, list[tuple[int, tuple[int, float]]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, 1):
            raw = raw.rstrip("\n").rstrip("\r")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) != 6:
                raise MalformedRecommendationFile(f"{path}:{lineno}: need 6 columns")
            algo_s, seed_s, uid, rank_s, iid, score_s = parts
            kind = kind_from_string(algo_s)
            if algorithm is None:
                algorithm, seed = kind, int(seed_s)
            elif kind is not algorithm or int(seed_s) != seed:
                raise MalformedRecommendationFile(
                    f"{path}:{lineno}: mixed algorithms or seeds in one file")
            u = train.user_pos.get(uid)
            i = train.item_pos.get(iid)
            if u is None or i is None:
                raise MalformedRecommendationFile(
                    f"{path}:{lineno}: unknown user or item id")
            per_user.setdefault(u, []).append((int(rank_s), (i, float(score_s))))
    if algorithm is None:
        raise MalformedRecommendationFile(f"{path}: empty recommendation file")
    recs = {}
    k = 0
    for u, ranked in per_user.items():
        ranked.sort()
        if [r for r, _ in ranked] != list(range(1, len(ranked) + 1)):
            raise MalformedRecommendationFile(f"{path}: non-contiguous ranks for user {u}")
        recs[u] = tuple(pair for _, pair in ranked)
        k = max(k, len(ranked))
    return RecommendationSet(algorithm=algorithm, seed=seed, k=k, recs=recs)


def report_to_json(report: AuditReport) -> str:
    """Deterministic JSON body of a report, per-user rows excluded."""
    payload = {
        "algorithm": report.algorithm.value,
        "seed": report.seed,
        "k": report.k,
        "delta_gap_pct": report.delta_gap_pct,
        "avg_profile_ratio": report.avg_profile_ratio,
        "avg_rec_ratio": report.avg_rec_ratio,
        "unknown_policy": report.unknown_policy.value,
        "t_test": {"t": report.t_test.t, "df": report.t_test.df, "p": report.t_test.p},
        "n_users": len(report.per_user),
        "omitted_users": list(report.omitted_users),
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_report(json_path, report: AuditReport) -> None:
    """JSON summary plus a sibling .tsv with the per-user rows.

    The TSV has a header line; empty ratio cells mean the user had no
    known-attribute items on that side under the exclusion policy.
    """
    json_path = Path(json_path)
    json_path.write_text(report_to_json(report), encoding="utf-8")
    tsv_path = json_path.with_suffix(".tsv")
    with open(tsv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_id\tprofile_ratio\trec_ratio\tprofile_gap\trec_gap\n")
        for row in report.per_user:
            pr = "" if row.profile_ratio is None else repr(row.profile_ratio)
            rr = "" if row.rec_ratio is None else repr(row.rec_ratio)
            fh.write(f"{row.user_id}\t{pr}\t{rr}\t{row.profile_gap!r}\t{row.rec_gap!r}\n")


def load_report(json_path) -> AuditReport:
    """Inverse of write_report: JSON summary plus the sibling per-user TSV."""
    json_path = Path(json_path)
    payload = json.loads(json_path.read_text(encoding="utf-8"))
    tsv_path = json_path.with_suffix(".tsv")
    rows = []
    with open(tsv_path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n")
        if header != "user_id\tprofile_ratio\trec_ratio\tprofile_gap\trec_gap":
            raise BiasLensError(f"{tsv_path}: unexpected per-user header {header!r}")
        for lineno, raw in enumerate(fh, 2):
            raw = raw.rstrip("\n")
            if not raw:
                continue
            parts = raw.split("\t")
            if len(parts) != 5:
                raise BiasLensError(f"{tsv_path}:{lineno}: need 5 columns")
            uid, pr, rr, pg, rg = parts
            rows.append(PerUserRow(
                user_id=uid,
                profile_ratio=None if pr == "" else float(pr),
                rec_ratio=None if rr == "" else float(rr),
                profile_gap=float(pg),
                rec_gap=float(rg),
            ))
    if len(rows) != payload["n_users"]:
        raise BiasLensError(
            f"{tsv_path}: {len(rows)} per-user rows but summary says {payload['n_users']}")
    tt = payload["t_test"]
    return AuditReport(
        algorithm=kind_from_string(payload["algorithm"]),
        seed=payload["seed"],
        k=payload["k"],
        delta_gap_pct=payload["delta_gap_pct"],
        avg_profile_ratio=payload["avg_profile_ratio"],
        avg_rec_ratio=payload["avg_rec_ratio"],
        unknown_policy=UnknownPolicy(payload["unknown_policy"]),
        t_test=TTestResult(t=tt["t"], df=tt["df"], p=tt["p"]),
        per_user=tuple(rows),
        omitted_users=tuple(payload["omitted_users"]),
    )


def write_catalog_countries(path, catalog: dict) -> None:
    """Item-to-countries TSV in the same headerless wire format the linking
    stage emits, so synthetic catalogs feed the same loader."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item_id in catalog:
            fh.write(f"{item_id}\t{','.join(sorted(catalog[item_id]))}\n")

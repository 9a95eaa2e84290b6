"""Command line entry points.

Five subcommands cover the pipeline: ``ingest`` parses, repairs, and filters
raw rating dumps; ``link`` attaches author countries to a catalog; ``audit``
fits recommenders and measures popularity and attribute bias; ``synth``
writes seeded synthetic corpora; ``report`` re-renders figures from persisted
report files. Every subcommand is a thin wrapper over library calls, so its
outputs byte-equal the same calls made directly, and a run's effective config
is always written next to its outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import audit as audit_lib
from . import figures
from .config import (
    ConfigError,
    RunConfig,
    load_config,
    parse_algorithms_arg,
    write_effective_config,
)
from .core import BiasLensError
from .audit import UnknownPolicy
from .ingest import (
    PreprocessConfig,
    load_catalog,
    parse_generic_ratings,
    parse_items,
    parse_ratings,
    resolve_duplicate_pairs,
    run_pipeline,
    write_catalog,
    write_generic_ratings,
    write_rejects,
)
from .linker import (
    AdapterKind,
    CitizenshipPolicy,
    LinkConfig,
    NameMatchMode,
    enrich_catalog,
    load_isbn_to_author,
    load_item_countries,
    load_name_to_viaf,
    load_viaf_to_wikidata,
    write_item_countries,
    write_linkage_log,
)
from .recsys import DivergenceDetected, SingularSystem, fit

# numeric failures a worker may signal; everything else is a bug and propagates
_TRAINING_FAILURES = (DivergenceDetected, SingularSystem)


def _worker_cap(n_tasks: int) -> int:
    raw = os.environ.get("BIASLENS_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"BIASLENS_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(cap, n_tasks))


def _read_ratings(fmt: str, path: str):
    """Parse a ratings file, warn about rejects, collapse duplicate pairs."""
    if fmt == "bookcrossing":
        interactions, rejects = parse_ratings(path)
    elif fmt == "generic":
        interactions, rejects = parse_generic_ratings(path)
    else:
        raise ConfigError(f"unknown ratings format {fmt!r}")
    if rejects:
        print(f"warning: {len(rejects)} malformed lines in {path}", file=sys.stderr)
    return resolve_duplicate_pairs(interactions)


# ---------------------------------------------------------------- ingest


def cmd_ingest(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pre = PreprocessConfig(
        drop_implicit=not args.keep_implicit,
        max_user_ratings=args.max_user_ratings,
        min_user_ratings=args.min_user_ratings,
        min_item_ratings=args.min_item_ratings,
        iterate_to_fixpoint=args.fixpoint,
    )
    if args.format == "bookcrossing":
        interactions, rejects = parse_ratings(args.ratings)
        items = None
        if args.items:
            items, item_rejects = parse_items(args.items)
            rejects = rejects + item_rejects
    else:
        interactions, rejects = parse_generic_ratings(args.ratings)
        items = None
    interactions = resolve_duplicate_pairs(interactions)
    result = run_pipeline(interactions, items=items, config=pre)

    write_generic_ratings(out / "interactions.tsv", result.interactions)
    write_rejects(out / "rejects.tsv", rejects)
    if items is not None:
        write_catalog(out / "catalog.tsv", result.surviving_items())
    with open(out / "stage_summary.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("stage\trows\n")
        for name, count in result.stage_counts:
            fh.write(f"{name}\t{count}\n")

    for name, count in result.stage_counts:
        print(f"{name}: {count}")
    print(
        f"final: {len(result.interactions)} ratings / "
        f"{result.n_distinct_items()} books / {result.n_distinct_users()} users"
    )
    if rejects:
        print(f"rejected lines: {len(rejects)} (see rejects.tsv)")
    return 0


# ------------------------------------------------------------------ link


def cmd_link(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    items = load_catalog(args.catalog)
    cfg = LinkConfig(
        name_match_mode=NameMatchMode(args.match_mode),
        levenshtein_max_distance=args.lev_max,
        multi_citizenship_policy=CitizenshipPolicy(args.citizenship),
    )
    adapters = {
        AdapterKind.ISBN_TO_AUTHOR: load_isbn_to_author(args.isbn_authors),
        AdapterKind.NAME_TO_VIAF: load_name_to_viaf(args.name_viaf),
        AdapterKind.VIAF_TO_WIKIDATA: load_viaf_to_wikidata(args.viaf_wikidata),
    }
    items, authors, stats = enrich_catalog(items, [], adapters, cfg)
    by_key = {a.author_key: a for a in authors}
    write_item_countries(out / "item_countries.tsv", items, by_key)
    write_linkage_log(out / "linkage_log.tsv", stats.events)
    summary = {
        "n_authors": stats.n_authors,
        "coverage": stats.coverage,
        "status_counts": dict(sorted(stats.status_counts.items())),
    }
    (out / "linkage_summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"authors: {stats.n_authors}  coverage: {stats.coverage:.1%}")
    for status, count in sorted(stats.status_counts.items()):
        print(f"  {status}: {count}")
    return 0


# ----------------------------------------------------------------- audit


def _audit_config(args) -> RunConfig:
    """Config file (when given) with command line flags layered on top."""
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides: dict = {}
    if args.ratings is not None:
        overrides["ratings"] = args.ratings
    if args.item_countries is not None:
        overrides["item_countries"] = args.item_countries
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.format is not None:
        overrides["format"] = args.format
    if args.k is not None:
        overrides["k"] = args.k
    if args.target_country is not None:
        overrides["target_country"] = args.target_country
    if args.unknown_policy is not None:
        overrides["unknown_policy"] = UnknownPolicy(args.unknown_policy)
    if args.split_ratio is not None:
        overrides["split_ratio"] = args.split_ratio
    if args.split_seed is not None:
        overrides["split_seed"] = args.split_seed
    if args.stratified:
        overrides["stratified"] = True
    if args.strict:
        overrides["strict"] = True
    if args.algorithms is not None:
        seed = overrides.get("split_seed", cfg.split_seed)
        overrides["algorithms"] = parse_algorithms_arg(args.algorithms, seed)
    return dataclasses.replace(cfg, **overrides)


def _audit_one(spec, train, k, predicate, policy, t_test):
    model = fit(spec, train)
    recs = audit_lib.recommend_all(model, k)
    return recs, audit_lib.build_report(train, recs, predicate, policy, t_test)


def _run_specs(specs, train, k, predicate, policy, t_test) -> list:
    """Fit and score every spec, one worker each, capped by BIASLENS_THREADS.

    Returns, in spec order, either a (RecommendationSet, AuditReport) pair or
    the training-failure exception. Workers touch no shared mutable state;
    all file writes happen later from the caller.
    """
    cap = _worker_cap(len(specs))
    results: list = [None] * len(specs)
    if cap <= 1:
        for i, spec in enumerate(specs):
            try:
                results[i] = _audit_one(spec, train, k, predicate, policy, t_test)
            except _TRAINING_FAILURES as exc:
                results[i] = exc
        return results
    with ThreadPoolExecutor(max_workers=cap) as pool:
        futures = [
            pool.submit(_audit_one, spec, train, k, predicate, policy, t_test)
            for spec in specs
        ]
        for i, fut in enumerate(futures):
            try:
                results[i] = fut.result()
            except _TRAINING_FAILURES as exc:
                results[i] = exc
    return results


def cmd_audit(args) -> int:
    cfg = _audit_config(args)
    if cfg.ratings is None:
        raise ConfigError("audit needs a ratings file ([data] ratings or --ratings)")
    if cfg.item_countries is None:
        raise ConfigError(
            "audit needs an item-countries file ([data] item_countries or --item-countries)"
        )
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    interactions = _read_ratings(cfg.format, cfg.ratings)
    catalog = load_item_countries(cfg.item_countries)
    sres = audit_lib.split(
        interactions, ratio=cfg.split_ratio, seed=cfg.split_seed, stratified=cfg.stratified
    )
    train = sres.train
    predicate = audit_lib.country_predicate(catalog, cfg.target_country)
    t_test = audit_lib.group_popularity_ttest(train, predicate)
    specs = cfg.resolved_algorithms()
    kinds = [s.kind for s in specs]
    if len(set(kinds)) != len(kinds):
        # report and recommendation files are named by kind; refuse collisions
        raise ConfigError("duplicate algorithm kind in one run; use separate runs per seed")

    print(
        f"split: {train.n_ratings} train / {len(sres.test)} test "
        f"(ratio {cfg.split_ratio}, seed {cfg.split_seed})"
    )
    print(
        f"test-only: {len(sres.test_only_users)} users, {len(sres.test_only_items)} items"
    )
    print(f"popularity t-test: t {t_test.t:.3f}  df {t_test.df:.1f}  p {t_test.p:.3g}")

    results = _run_specs(specs, train, cfg.k, predicate, cfg.unknown_policy, t_test)

    if cfg.strict:
        for spec, res in zip(specs, results):
            if isinstance(res, Exception):
                print(
                    f"error: {spec.kind.value} (seed {spec.seed}) failed to train: {res}",
                    file=sys.stderr,
                )
                return 3

    reports = []
    for spec, res in zip(specs, results):
        name = spec.kind.value
        if isinstance(res, Exception):
            print(f"warning: skipping {name} (seed {spec.seed}): {res}", file=sys.stderr)
            continue
        recs, report = res
        audit_lib.write_recommendations(out / f"recs_{name}.tsv", recs, train)
        audit_lib.write_report(out / f"report_{name}.json", report)
        reports.append(report)
        print(
            f"{name}: dGAP {report.delta_gap_pct:+.2f}%  "
            f"profile {report.avg_profile_ratio:.4f}  rec {report.avg_rec_ratio:.4f}"
        )

    if reports:
        figures.render_all(sorted(reports, key=lambda r: r.algorithm.value), out)
    else:
        print("warning: no algorithm trained successfully; no figures", file=sys.stderr)
    write_effective_config(out / "effective_config.toml", cfg)
    print(f"wrote {len(reports)} reports to {out}")
    return 0


# ----------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    interactions, catalog = audit_lib.generate_synthetic(
        n_users=args.users,
        n_items=args.items,
        zipf_s=args.zipf,
        target_fraction=args.target_fraction,
        bias_strength=args.bias,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_generic_ratings(out / "ratings.tsv", interactions)
    audit_lib.write_catalog_countries(out / "item_countries.tsv", catalog)
    n_users = len({i.user_id for i in interactions})
    n_items = len({i.item_id for i in interactions})
    print(f"wrote {len(interactions)} ratings by {n_users} users over {n_items} items")
    return 0


# ---------------------------------------------------------------- report


def cmd_report(args) -> int:
    rdir = Path(args.reports)
    paths = sorted(rdir.glob("report_*.json"))
    if not paths:
        raise BiasLensError(f"no report_*.json files under {rdir}")
    reports = [audit_lib.load_report(p) for p in paths]
    outdir = Path(args.out) if args.out is not None else rdir
    outdir.mkdir(parents=True, exist_ok=True)
    written = figures.render_all(sorted(reports, key=lambda r: r.algorithm.value), outdir)
    for p in written:
        print(p)
    return 0


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biaslens",
        description="Train recommenders on book ratings and audit popularity "
        "and author-country bias.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("ingest", help="parse, repair, and filter a ratings dump")
    q.add_argument("--format", choices=("bookcrossing", "generic"), default="generic")
    q.add_argument("--ratings", required=True, help="ratings file path")
    q.add_argument("--items", help="catalog file (bookcrossing format only)")
    q.add_argument("--out", required=True, help="output directory")
    q.add_argument("--keep-implicit", action="store_true", help="keep rating-0 rows")
    q.add_argument("--max-user-ratings", type=int, default=200)
    q.add_argument("--min-user-ratings", type=int, default=5)
    q.add_argument("--min-item-ratings", type=int, default=5)
    q.add_argument("--fixpoint", action="store_true", help="iterate filters to a fixed point")
    q.set_defaults(func=cmd_ingest)

    q = sub.add_parser("link", help="attach author countries to a catalog")
    q.add_argument("--catalog", required=True, help="catalog TSV from ingest")
    q.add_argument("--isbn-authors", required=True, help="isbn -> author name TSV")
    q.add_argument("--name-viaf", required=True, help="author key -> VIAF id TSV")
    q.add_argument("--viaf-wikidata", required=True, help="VIAF id -> QID/label/countries TSV")
    q.add_argument("--out", required=True, help="output directory")
    q.add_argument(
        "--match-mode",
        choices=[m.value for m in NameMatchMode],
        default=NameMatchMode.TOKEN_SET.value,
    )
    q.add_argument("--lev-max", type=int, default=2, help="Levenshtein distance cap")
    q.add_argument(
        "--citizenship",
        choices=[c.value for c in CitizenshipPolicy],
        default=CitizenshipPolicy.ALL.value,
    )
    q.set_defaults(func=cmd_link)

    q = sub.add_parser("audit", help="fit recommenders and measure bias")
    q.add_argument("--config", help="TOML run config; flags override its keys")
    q.add_argument("--ratings")
    q.add_argument("--item-countries")
    q.add_argument("--out")
    q.add_argument("--format", choices=("bookcrossing", "generic"))
    q.add_argument("--algorithms", help="comma separated kinds, e.g. mostpop,random")
    q.add_argument("--k", type=int)
    q.add_argument("--target-country")
    q.add_argument("--unknown-policy", choices=[p.value for p in UnknownPolicy])
    q.add_argument("--split-ratio", type=float)
    q.add_argument("--split-seed", type=int)
    q.add_argument("--stratified", action="store_true")
    q.add_argument("--strict", action="store_true", help="exit 3 on any training failure")
    q.set_defaults(func=cmd_audit)

    q = sub.add_parser("synth", help="write a seeded synthetic rating corpus")
    q.add_argument("--users", type=int, required=True)
    q.add_argument("--items", type=int, required=True)
    q.add_argument("--zipf", type=float, default=1.0, help="popularity exponent")
    q.add_argument("--target-fraction", type=float, default=0.685)
    q.add_argument("--bias", type=float, default=1.0, help="attribute-popularity coupling 0..1")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True, help="output directory")
    q.set_defaults(func=cmd_synth)

    q = sub.add_parser("report", help="re-render figures from persisted reports")
    q.add_argument("--reports", required=True, help="directory holding report_*.json")
    q.add_argument("--out", help="figure directory (default: the reports directory)")
    q.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BiasLensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        detail = str(exc)
        if getattr(exc, "filename", None):
            detail = f"{exc.filename}: {exc.strerror}"
        print(f"error: {detail}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

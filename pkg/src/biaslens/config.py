"""Run configuration: a TOML file mapped onto one frozen RunConfig value.

The schema is strict: unknown sections or keys are errors, so typos fail
fast instead of silently running with defaults. The effective config (all
defaults resolved) can be serialized back to TOML; feeding that file to the
CLI reproduces the run byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .audit import UnknownPolicy
from .core import BiasLensError
from .ingest import PreprocessConfig
from .linker import CitizenshipPolicy, LinkConfig, NameMatchMode
from .recsys import AlgorithmSpec, Kind, kind_from_string


class ConfigError(BiasLensError):
    pass


_FORMATS = ("generic", "bookcrossing")


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; every field has a serializable default."""

    format: str = "generic"
    ratings: str | None = None
    items: str | None = None
    item_countries: str | None = None
    out_dir: str = "out"

    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)

    link: LinkConfig = field(default_factory=LinkConfig)
    isbn_to_author: str | None = None
    name_to_viaf: str | None = None
    viaf_to_wikidata: str | None = None

    split_ratio: float = 0.8
    split_seed: int = 42
    stratified: bool = False

    k: int = 10
    target_country: str = "US"
    unknown_policy: UnknownPolicy = UnknownPolicy.EXCLUDE
    strict: bool = False

    algorithms: tuple = ()  # empty means "all kinds at the split seed"

    def resolved_algorithms(self) -> tuple:
        if self.algorithms:
            return self.algorithms
        return tuple(AlgorithmSpec(kind, seed=self.split_seed) for kind in Kind)


def _take(table: dict, section: str, known: dict):
    """Pop known keys with type checks; reject leftovers."""
    out = {}
    for key, types in known.items():
        if key in table:
            value = table.pop(key)
            allowed = types if isinstance(types, tuple) else (types,)
            # bool subclasses int; only accept it where bool is expected
            bad_bool = isinstance(value, bool) and bool not in allowed
            if bad_bool or not isinstance(value, allowed):
                raise ConfigError(f"[{section}] {key}: wrong type {type(value).__name__}")
            out[key] = value
    if table:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(table))}")
    return out


def _enum_by_value(enum_cls, raw: str, where: str):
    for member in enum_cls:
        if member.value == raw:
            return member
    choices = ", ".join(m.value for m in enum_cls)
    raise ConfigError(f"{where}: {raw!r} is not one of {choices}")


def parse_algorithm_table(table: dict, default_seed: int) -> AlgorithmSpec:
    table = dict(table)
    if "kind" not in table:
        raise ConfigError("[[algorithms]] entry without a kind")
    kind = kind_from_string(str(table.pop("kind")))
    seed = table.pop("seed", default_seed)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"[[algorithms]] {kind.value}: seed must be an integer")
    hyper = table.pop("hyperparams", {})
    if not isinstance(hyper, dict):
        raise ConfigError(f"[[algorithms]] {kind.value}: hyperparams must be a table")
    if table:
        raise ConfigError(f"[[algorithms]] {kind.value}: unknown keys: "
                          + ", ".join(sorted(table)))
    return AlgorithmSpec(kind, seed=seed, hyperparams=dict(hyper))


def parse_algorithms_arg(arg: str, default_seed: int) -> tuple:
    """Comma-separated kind names from the command line."""
    names = [part.strip() for part in arg.split(",") if part.strip()]
    if not names:
        raise ConfigError("empty --algorithms value")
    return tuple(AlgorithmSpec(kind_from_string(n), seed=default_seed) for n in names)


def config_from_dict(doc: dict) -> RunConfig:
    doc = dict(doc)
    kwargs = {}

    data = dict(doc.pop("data", {}))
    got = _take(data, "data", {
        "format": str, "ratings": str, "items": str,
        "item_countries": str, "out_dir": str,
    })
    if "format" in got and got["format"] not in _FORMATS:
        raise ConfigError(f"[data] format: {got['format']!r} is not one of "
                          + ", ".join(_FORMATS))
    kwargs.update(got)

    pre = dict(doc.pop("preprocess", {}))
    got = _take(pre, "preprocess", {
        "drop_implicit": bool, "max_user_ratings": int,
        "min_user_ratings": int, "min_item_ratings": int,
        "iterate_to_fixpoint": bool,
    })
    if got:
        kwargs["preprocess"] = PreprocessConfig(**got)

    link = dict(doc.pop("link", {}))
    got = _take(link, "link", {
        "name_match_mode": str, "levenshtein_max_distance": int,
        "multi_citizenship_policy": str,
        "isbn_to_author": str, "name_to_viaf": str, "viaf_to_wikidata": str,
    })
    for key in ("isbn_to_author", "name_to_viaf", "viaf_to_wikidata"):
        if key in got:
            kwargs[key] = got.pop(key)
    if got:
        link_kwargs = {}
        if "name_match_mode" in got:
            link_kwargs["name_match_mode"] = _enum_by_value(
                NameMatchMode, got["name_match_mode"], "[link] name_match_mode")
        if "levenshtein_max_distance" in got:
            link_kwargs["levenshtein_max_distance"] = got["levenshtein_max_distance"]
        if "multi_citizenship_policy" in got:
            link_kwargs["multi_citizenship_policy"] = _enum_by_value(
                CitizenshipPolicy, got["multi_citizenship_policy"],
                "[link] multi_citizenship_policy")
        kwargs["link"] = LinkConfig(**link_kwargs)

    split = dict(doc.pop("split", {}))
    got = _take(split, "split", {"ratio": (int, float), "seed": int, "stratified": bool})
    if "ratio" in got:
        kwargs["split_ratio"] = float(got["ratio"])
    if "seed" in got:
        kwargs["split_seed"] = got["seed"]
    if "stratified" in got:
        kwargs["stratified"] = got["stratified"]

    aud = dict(doc.pop("audit", {}))
    got = _take(aud, "audit", {
        "k": int, "target_country": str, "unknown_policy": str, "strict": bool,
    })
    if "unknown_policy" in got:
        got["unknown_policy"] = _enum_by_value(
            UnknownPolicy, got["unknown_policy"], "[audit] unknown_policy")
    kwargs.update(got)

    algos = doc.pop("algorithms", [])
    if not isinstance(algos, list):
        raise ConfigError("algorithms must be an array of tables")
    if doc:
        raise ConfigError("unknown config sections: " + ", ".join(sorted(doc)))

    default_seed = kwargs.get("split_seed", RunConfig.split_seed)
    kwargs["algorithms"] = tuple(parse_algorithm_table(t, default_seed) for t in algos)
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(doc)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"cannot serialize {type(v).__name__}")


def effective_config_toml(cfg: RunConfig) -> str:
    """Fully resolved TOML; load_config(write(text)) round-trips the config."""
    lines = ["# effective configuration, all defaults resolved", ""]

    lines.append("[data]")
    lines.append(f"format = {_toml_value(cfg.format)}")
    for key in ("ratings", "items", "item_countries"):
        value = getattr(cfg, key)
        if value is not None:
            lines.append(f"{key} = {_toml_value(value)}")
    lines.append(f"out_dir = {_toml_value(cfg.out_dir)}")

    lines += ["", "[preprocess]"]
    p = cfg.preprocess
    lines.append(f"drop_implicit = {_toml_value(p.drop_implicit)}")
    lines.append(f"max_user_ratings = {_toml_value(p.max_user_ratings)}")
    lines.append(f"min_user_ratings = {_toml_value(p.min_user_ratings)}")
    lines.append(f"min_item_ratings = {_toml_value(p.min_item_ratings)}")
    lines.append(f"iterate_to_fixpoint = {_toml_value(p.iterate_to_fixpoint)}")

    lines += ["", "[link]"]
    lines.append(f"name_match_mode = {_toml_value(cfg.link.name_match_mode.value)}")
    lines.append("levenshtein_max_distance = "
                 + _toml_value(cfg.link.levenshtein_max_distance))
    lines.append("multi_citizenship_policy = "
                 + _toml_value(cfg.link.multi_citizenship_policy.value))
    for key in ("isbn_to_author", "name_to_viaf", "viaf_to_wikidata"):
        value = getattr(cfg, key)
        if value is not None:
            lines.append(f"{key} = {_toml_value(value)}")

    lines += ["", "[split]"]
    lines.append(f"ratio = {_toml_value(cfg.split_ratio)}")
    lines.append(f"seed = {_toml_value(cfg.split_seed)}")
    lines.append(f"stratified = {_toml_value(cfg.stratified)}")

    lines += ["", "[audit]"]
    lines.append(f"k = {_toml_value(cfg.k)}")
    lines.append(f"target_country = {_toml_value(cfg.target_country)}")
    lines.append(f"unknown_policy = {_toml_value(cfg.unknown_policy.value)}")
    lines.append(f"strict = {_toml_value(cfg.strict)}")

    for spec in cfg.resolved_algorithms():
        lines += ["", "[[algorithms]]"]
        lines.append(f"kind = {_toml_value(spec.kind.value)}")
        lines.append(f"seed = {_toml_value(spec.seed)}")
        if spec.hyperparams:
            lines.append("[algorithms.hyperparams]")
            for key in sorted(spec.hyperparams):
                lines.append(f"{key} = {_toml_value(spec.hyperparams[key])}")
    return "\n".join(lines) + "\n"


def write_effective_config(path, cfg: RunConfig) -> None:
    Path(path).write_text(effective_config_toml(cfg), encoding="utf-8")

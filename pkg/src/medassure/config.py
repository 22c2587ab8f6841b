"""Run configuration: an INI file with sections, overridable key by key.

Relative paths are resolved against the config file's directory.  A blank
``hazards`` or ``template`` path selects the shipped asset.  ``[run] seed``
is mandatory; nothing in a run is seeded from the clock.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .baseline_lr import LrConfig
from .bn_core import BdeuParams
from .bn_search import MOVE_KINDS, SearchConfig
from .errors import DataError
from .records import EncodingRules, load_cpt_map


@dataclass(frozen=True)
class Query:
    name: str
    context: tuple[tuple[str, int], ...]
    exposure: str
    outcome: str


@dataclass(frozen=True)
class RunConfig:
    records: Path
    events: Path | None
    hazards: Path | None
    template: Path | None
    output: Path
    seed: int
    bdeu: BdeuParams = BdeuParams()
    alpha_sweep: tuple[float, ...] = ()
    search: SearchConfig = SearchConfig()
    split_fraction: float = 0.8
    queries: tuple[Query, ...] = ()
    target: str = "AF"
    threshold: float = 0.5
    lr: LrConfig = LrConfig()
    dfg_filter: str | None = None
    min_arc_count: int = 1
    dfg_arcs: tuple[tuple[str, str], ...] = ()
    encoding: EncodingRules = field(default_factory=EncodingRules)
    echo: tuple[tuple[str, str, str], ...] = ()  # (section, key, value) as resolved

    def check_paths(self):
        for name in ("records", "events", "hazards", "template"):
            p = getattr(self, name)
            if p is not None and not p.is_file():
                raise DataError(f"{name} file not found: {p}")


def parse_context(text: str) -> tuple[tuple[str, int], ...]:
    """``Surgery=2,Pre_beta=1`` -> (("Surgery", 2), ("Pre_beta", 1)); blank -> ()."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        code, sep, val = item.partition("=")
        if not sep:
            raise DataError(f"bad context item {item!r} (expected CODE=STATE)")
        try:
            out.append((code.strip(), int(val)))
        except ValueError:
            raise DataError(f"bad context item {item!r} (state must be an integer)") from None
    return tuple(out)


def parse_query(name: str, text: str) -> Query:
    """``context | exposure | outcome``."""
    parts = [p.strip() for p in text.split("|")]
    if len(parts) != 3 or not parts[1] or not parts[2]:
        raise DataError(f"query {name}: expected 'context | exposure | outcome', got {text!r}")
    return Query(name, parse_context(parts[0]), parts[1], parts[2])


def parse_arcs(text: str) -> tuple[tuple[str, str], ...]:
    """``A>B; C>D``."""
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        a, sep, b = item.partition(">")
        if not sep or not a.strip() or not b.strip():
            raise DataError(f"bad arc {item!r} (expected FROM>TO)")
        out.append((a.strip(), b.strip()))
    return tuple(out)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise DataError(f"expected a comma-separated list of numbers, got {text!r}") from None


def load_config(path: str | Path, overrides: Mapping[str, str] | None = None) -> RunConfig:
    """Read a run config; ``overrides`` maps ``section.key`` to a replacement value."""
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise DataError(f"config file {path}: {exc}") from None
    for dotted, value in (overrides or {}).items():
        section, sep, key = dotted.partition(".")
        if not sep:
            raise DataError(f"override {dotted!r} must be section.key")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, str(value))
    return config_from_parser(cp, path.resolve().parent)


def config_from_parser(cp: configparser.ConfigParser, base: Path) -> RunConfig:
    def get(section, key, default=None):
        if cp.has_option(section, key):
            return cp.get(section, key).strip()
        return default

    def path_opt(key, required=False):
        v = get("paths", key, "")
        if not v:
            if required:
                raise DataError(f"[paths] {key} is required")
            return None
        p = Path(v)
        return p if p.is_absolute() else base / p

    def num(section, key, default, kind=float):
        v = get(section, key)
        if v is None or v == "":
            return default
        try:
            return kind(v)
        except ValueError:
            raise DataError(f"[{section}] {key}: expected {kind.__name__}, got {v!r}") from None

    seed_text = get("run", "seed")
    if not seed_text:
        raise DataError("[run] seed is required")
    seed = num("run", "seed", None, int)

    moves = get("bn", "moves", ",".join(MOVE_KINDS))
    search = SearchConfig(
        max_parents=num("bn", "max_parents", 3, int),
        moves=tuple(m.strip() for m in moves.split(",") if m.strip()),
        max_iterations=num("bn", "max_iterations", 1000, int),
        restarts=num("bn", "restarts", 0, int),
        seed=seed,
    )
    alpha = num("bn", "alpha", 1.0)
    if not alpha > 0:
        raise DataError("[bn] alpha must be positive")
    sweep = _floats(get("bn", "alpha_sweep", ""))
    if any(a <= 0 for a in sweep):
        raise DataError("[bn] alpha_sweep values must be positive")

    queries = tuple(parse_query(k, v) for k, v in cp.items("queries")) if cp.has_section("queries") else ()

    lr = LrConfig(
        learning_rate=num("lr", "learning_rate", 1.0),
        max_epochs=num("lr", "max_epochs", 5000, int),
        l2=num("lr", "l2", 1e-4),
        tolerance=num("lr", "tolerance", 1e-6),
    )

    cpt_map = get("encoding", "cpt_map", "")
    enc_kwargs = {}
    if cpt_map:
        p = Path(cpt_map)
        enc_kwargs["thoracic_cpt_map"] = load_cpt_map(p if p.is_absolute() else base / p)
    encoding = EncodingRules(
        hypotension_threshold_mmhg=num("encoding", "hypotension_threshold_mmhg", 100.0),
        post_beta_window_hours=num("encoding", "post_beta_window_hours", 24.0),
        af_icd9_prefix=get("encoding", "af_icd9_prefix", "427"),
        **enc_kwargs,
    )

    fraction = num("split", "fraction", 0.8)
    if not 0 < fraction < 1:
        raise DataError("[split] fraction must lie strictly between 0 and 1")
    threshold = num("metrics", "threshold", 0.5)
    min_arc = num("mine", "min_arc_count", 1, int)
    if min_arc < 1:
        raise DataError("[mine] min_arc_count must be >= 1")

    # where the run is written is not an input, so it stays out of the echo
    echo = tuple(
        (s, k, v)
        for s in sorted(cp.sections())
        for k, v in sorted(cp.items(s))
        if (s, k) != ("paths", "output")
    )
    return RunConfig(
        records=path_opt("records", required=True),
        events=path_opt("events"),
        hazards=path_opt("hazards"),
        template=path_opt("template"),
        output=path_opt("output", required=True),
        seed=seed,
        bdeu=BdeuParams(alpha),
        alpha_sweep=sweep,
        search=search,
        split_fraction=fraction,
        queries=queries,
        target=get("metrics", "target", "AF"),
        threshold=threshold,
        lr=lr,
        dfg_filter=get("mine", "filter") or None,
        min_arc_count=min_arc,
        dfg_arcs=parse_arcs(get("mine", "arcs", "")),
        encoding=encoding,
        echo=echo,
    )

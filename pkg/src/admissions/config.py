"""Run configuration: one strict JSON document per run.

The schema is validated before any computation; unknown keys are rejected.
Numbers may be written as JSON numbers or as string literals such as "1/15"
or "0.99", which are parsed exactly as rationals before conversion to float.
Groups and colleges are numbered from 1 in config documents and CSV outputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Any

from .copula import make_family
from .errors import ConfigError, ConstructionError
from .latent import LatentNoiseSpec
from .scores import Gaussian, GroupScoreModel, Marginal, Uniform
from .solver import MarketShell, MarketSpec, uniform_beta
from .tiebreak import TieBreakSpec

COMMANDS = (
    "solve",
    "sweep",
    "grid",
    "contour",
    "tiebreak",
    "latent",
    "oracle",
    "census",
)

# families constructible from a config document (the correlation-map family
# needs a callable and stays library-only)
CONFIG_FAMILIES = (
    "independence",
    "comonotone",
    "gaussian-equicorrelated",
    "clayton",
    "frank",
    "gumbel",
)

DEFAULT_SEED = 0
DEFAULT_TOL = 1e-8
DEFAULT_JOBS = 1
CENSUS_THETA_NODES = 100


def parse_number(value: Any, where: str) -> float:
    """A finite float from a JSON number or an exact rational string literal."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        x = float(value)
    elif isinstance(value, str):
        try:
            x = float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"{where}: {value!r} is not a rational literal")
    else:
        raise ConfigError(f"{where}: expected a number or a rational string")
    if not math.isfinite(x):
        raise ConfigError(f"{where}: value must be finite")
    return x


def _parse_int(value: Any, where: str, *, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}: must be at least {minimum}")
    return value


def _parse_bool(value: Any, where: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{where}: expected true or false")
    return value


def _check_keys(obj: Any, where: str, required: tuple[str, ...],
                optional: tuple[str, ...] = ()) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    for key in obj:
        if key not in required and key not in optional:
            raise ConfigError(f"{where}: unknown key {key!r}")
    for key in required:
        if key not in obj:
            raise ConfigError(f"{where}: missing required key {key!r}")
    return obj


def _number_list(value: Any, where: str, *, length: int | None = None) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise ConfigError(f"{where}: expected an array of numbers")
    out = tuple(parse_number(v, f"{where}[{k}]") for k, v in enumerate(value))
    if length is not None and len(out) != length:
        raise ConfigError(f"{where}: expected {length} entries, got {len(out)}")
    return out


def _group_index(value: Any, where: str, d: int) -> int:
    """1-based group number from config, returned 0-based."""
    g = _parse_int(value, where, minimum=1)
    if g > d:
        raise ConfigError(f"{where}: group {g} is outside 1..{d}")
    return g - 1


def _parse_grid(obj: Any, where: str) -> tuple[float, ...]:
    """A strictly increasing theta grid from {lo,hi,n} or {nodes:[...]}."""
    if isinstance(obj, dict) and "nodes" in obj:
        _check_keys(obj, where, ("nodes",))
        nodes = _number_list(obj["nodes"], f"{where}.nodes")
        if len(nodes) == 0:
            raise ConfigError(f"{where}.nodes: must be non-empty")
    else:
        _check_keys(obj, where, ("lo", "hi", "n"))
        lo = parse_number(obj["lo"], f"{where}.lo")
        hi = parse_number(obj["hi"], f"{where}.hi")
        n = _parse_int(obj["n"], f"{where}.n", minimum=1)
        if n == 1:
            nodes = (lo,)
        else:
            if hi <= lo:
                raise ConfigError(f"{where}: need lo < hi")
            step = (hi - lo) / (n - 1)
            nodes = tuple(lo + k * step for k in range(n - 1)) + (hi,)
    if any(b <= a for a, b in zip(nodes, nodes[1:])):
        raise ConfigError(f"{where}: grid must be strictly increasing")
    return nodes


def _parse_marginal(obj: Any, where: str) -> Marginal:
    _check_keys(obj, where, ("kind",), ("lo", "hi", "mean", "var"))
    kind = obj["kind"]
    if kind == "uniform":
        _check_keys(obj, where, ("kind",), ("lo", "hi"))
        lo = parse_number(obj.get("lo", 0.0), f"{where}.lo")
        hi = parse_number(obj.get("hi", 1.0), f"{where}.hi")
        return Uniform(lo, hi)
    if kind == "gaussian":
        _check_keys(obj, where, ("kind",), ("mean", "var"))
        mean = parse_number(obj.get("mean", 0.0), f"{where}.mean")
        var = parse_number(obj.get("var", 1.0), f"{where}.var")
        return Gaussian(mean, var)
    raise ConfigError(f"{where}: unknown marginal kind {kind!r}")


def _parse_beta(value: Any, where: str, m: int) -> tuple[float, ...]:
    if value == "uniform":
        return uniform_beta(m)
    return _number_list(value, where, length=math.factorial(m))


def _parse_copula(obj: Any, where: str, m: int) -> tuple[Any, float]:
    _check_keys(obj, where, ("family", "theta"))
    kind = obj["family"]
    if kind not in CONFIG_FAMILIES:
        raise ConfigError(
            f"{where}.family: unknown family {kind!r} "
            f"(choose one of {', '.join(CONFIG_FAMILIES)})"
        )
    theta = parse_number(obj["theta"], f"{where}.theta")
    family = make_family(kind, m)
    return family, theta


def parse_market(obj: Any, where: str = "market") -> MarketSpec:
    """A full market: capacities plus one score model per group."""
    _check_keys(obj, where, ("alpha", "groups"))
    alpha = _number_list(obj["alpha"], f"{where}.alpha")
    m = len(alpha)
    if m == 0:
        raise ConfigError(f"{where}.alpha: must be non-empty")
    groups = obj["groups"]
    if not isinstance(groups, list) or len(groups) == 0:
        raise ConfigError(f"{where}.groups: expected a non-empty array")
    gammas: list[float] = []
    betas: list[tuple[float, ...]] = []
    models: list[GroupScoreModel] = []
    for j, gobj in enumerate(groups):
        gw = f"{where}.groups[{j}]"
        _check_keys(gobj, gw, ("gamma", "beta", "copula"), ("marginals",))
        gammas.append(parse_number(gobj["gamma"], f"{gw}.gamma"))
        betas.append(_parse_beta(gobj["beta"], f"{gw}.beta", m))
        if "marginals" in gobj:
            mobj = gobj["marginals"]
            if not isinstance(mobj, list) or len(mobj) != m:
                raise ConfigError(f"{gw}.marginals: expected {m} entries")
            margs = tuple(
                _parse_marginal(x, f"{gw}.marginals[{i}]") for i, x in enumerate(mobj)
            )
        else:
            margs = tuple(Uniform(0.0, 1.0) for _ in range(m))
        family, theta = _parse_copula(gobj["copula"], f"{gw}.copula", m)
        models.append(GroupScoreModel(margs, family, theta))
    try:
        return MarketSpec(tuple(alpha), tuple(gammas), tuple(betas), tuple(models))
    except ConstructionError as exc:
        raise ConfigError(f"{where}: {exc}")


def parse_shell(obj: Any, where: str, m: int) -> MarketShell:
    """Capacities, group masses, and preferences without score models."""
    _check_keys(obj, where, ("alpha", "groups"))
    alpha = _number_list(obj["alpha"], f"{where}.alpha", length=m)
    groups = obj["groups"]
    if not isinstance(groups, list) or len(groups) == 0:
        raise ConfigError(f"{where}.groups: expected a non-empty array")
    gammas: list[float] = []
    betas: list[tuple[float, ...]] = []
    for j, gobj in enumerate(groups):
        gw = f"{where}.groups[{j}]"
        _check_keys(gobj, gw, ("gamma", "beta"))
        gammas.append(parse_number(gobj["gamma"], f"{gw}.gamma"))
        betas.append(_parse_beta(gobj["beta"], f"{gw}.beta", m))
    return MarketShell(tuple(gammas), tuple(betas), tuple(alpha))


@dataclass(frozen=True)
class SweepSection:
    group: int  # 0-based
    grid: tuple[float, ...]


@dataclass(frozen=True)
class GridSection:
    """Rectangular lattice: one combo per outer node, inner grid swept within."""

    outer_group: int
    outer_grid: tuple[float, ...]
    inner_group: int
    inner_grid: tuple[float, ...]


@dataclass(frozen=True)
class ContourSection:
    groups: tuple[int, int]
    target: float
    grid: tuple[float, ...]


@dataclass(frozen=True)
class TieBreakSection:
    shell: MarketShell
    specs: tuple[TieBreakSpec, ...]
    sweep: SweepSection | None


@dataclass(frozen=True)
class LatentSection:
    colleges: int
    shell: MarketShell
    noise: LatentNoiseSpec


@dataclass(frozen=True)
class OracleSection:
    sizes: tuple[int, ...]
    seeds: tuple[int, ...]


@dataclass(frozen=True)
class CensusSection:
    colleges: int
    theta_nodes: int
    subset: tuple[int, ...] | None


@dataclass(frozen=True)
class RunConfig:
    command: str
    market: MarketSpec | None = None
    sweep: SweepSection | None = None
    grid: GridSection | None = None
    contour: ContourSection | None = None
    tiebreak: TieBreakSection | None = None
    latent: LatentSection | None = None
    oracle: OracleSection | None = None
    census: CensusSection | None = None
    seed: int = DEFAULT_SEED
    tol: float = DEFAULT_TOL
    jobs: int = DEFAULT_JOBS
    out: str | None = None

    def with_overrides(self, *, out: str | None = None, seed: int | None = None,
                       jobs: int | None = None, tol: float | None = None) -> "RunConfig":
        cfg = self
        if out is not None:
            cfg = replace(cfg, out=out)
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if jobs is not None:
            cfg = replace(cfg, jobs=jobs)
        if tol is not None:
            cfg = replace(cfg, tol=tol)
        return cfg


def _parse_sweep(obj: Any, where: str, market: MarketSpec | None,
                 d: int | None = None) -> SweepSection:
    _check_keys(obj, where, ("group", "grid"))
    nd = market.d if market is not None else d
    if nd is None:
        raise ConfigError(f"{where}: no market to sweep")
    group = _group_index(obj["group"], f"{where}.group", nd)
    grid = _parse_grid(obj["grid"], f"{where}.grid")
    return SweepSection(group, grid)


def _parse_grid_section(obj: Any, where: str, market: MarketSpec) -> GridSection:
    _check_keys(obj, where, ("outer", "inner"))
    outer = _parse_sweep(obj["outer"], f"{where}.outer", market)
    inner = _parse_sweep(obj["inner"], f"{where}.inner", market)
    if outer.group == inner.group:
        raise ConfigError(f"{where}: outer and inner groups must differ")
    return GridSection(outer.group, outer.grid, inner.group, inner.grid)


def _parse_contour(obj: Any, where: str, market: MarketSpec) -> ContourSection:
    _check_keys(obj, where, ("groups", "target", "grid"))
    gv = obj["groups"]
    if not isinstance(gv, list) or len(gv) != 2:
        raise ConfigError(f"{where}.groups: expected two group numbers")
    j = _group_index(gv[0], f"{where}.groups[0]", market.d)
    l = _group_index(gv[1], f"{where}.groups[1]", market.d)
    if j == l:
        raise ConfigError(f"{where}.groups: groups must differ")
    target = parse_number(obj["target"], f"{where}.target")
    grid = _parse_grid(obj["grid"], f"{where}.grid")
    return ContourSection((j, l), target, grid)


def _parse_cells(value: Any, where: str) -> tuple[tuple[tuple[int, ...], float], ...]:
    if not isinstance(value, list) or len(value) == 0:
        raise ConfigError(f"{where}: expected a non-empty array of cells")
    out = []
    for k, cobj in enumerate(value):
        cw = f"{where}[{k}]"
        _check_keys(cobj, cw, ("cell", "mass"))
        cell = cobj["cell"]
        if not isinstance(cell, list) or not all(
            isinstance(q, int) and not isinstance(q, bool) and q >= 1 for q in cell
        ):
            raise ConfigError(f"{cw}.cell: expected 1-based class numbers")
        mass = parse_number(cobj["mass"], f"{cw}.mass")
        out.append((tuple(q - 1 for q in cell), mass))
    return tuple(out)


def _parse_tiebreak(obj: Any, where: str) -> TieBreakSection:
    _check_keys(obj, where, ("shell", "specs"), ("sweep",))
    specs_obj = obj["specs"]
    if not isinstance(specs_obj, list) or len(specs_obj) == 0:
        raise ConfigError(f"{where}.specs: expected one entry per group")
    specs: list[TieBreakSpec] = []
    m = None
    for j, sobj in enumerate(specs_obj):
        sw = f"{where}.specs[{j}]"
        _check_keys(sobj, sw, ("class_masses", "family", "theta"), ("cells",))
        cm_obj = sobj["class_masses"]
        if not isinstance(cm_obj, list) or len(cm_obj) == 0:
            raise ConfigError(f"{sw}.class_masses: expected one row per college")
        class_masses = tuple(
            _number_list(row, f"{sw}.class_masses[{i}]")
            for i, row in enumerate(cm_obj)
        )
        if m is None:
            m = len(class_masses)
        elif len(class_masses) != m:
            raise ConfigError(f"{sw}.class_masses: group dimensions disagree")
        family, theta = _parse_copula(
            {"family": sobj["family"], "theta": sobj["theta"]}, sw, m
        )
        cells = _parse_cells(sobj["cells"], f"{sw}.cells") if "cells" in sobj else None
        try:
            specs.append(TieBreakSpec(class_masses, family, theta, cells))
        except ConstructionError as exc:
            raise ConfigError(f"{sw}: {exc}")
    shell = parse_shell(obj["shell"], f"{where}.shell", m)
    sweep = None
    if "sweep" in obj:
        sweep = _parse_sweep(obj["sweep"], f"{where}.sweep", None, d=len(shell.gammas))
    return TieBreakSection(shell, tuple(specs), sweep)


def _parse_latent(obj: Any, where: str) -> LatentSection:
    _check_keys(obj, where, ("colleges", "quality_var", "noise_vars", "shell"),
                ("standardize",))
    m = _parse_int(obj["colleges"], f"{where}.colleges", minimum=1)
    quality = parse_number(obj["quality_var"], f"{where}.quality_var")
    noise = _number_list(obj["noise_vars"], f"{where}.noise_vars")
    standardize = _parse_bool(obj.get("standardize", True), f"{where}.standardize")
    try:
        lns = LatentNoiseSpec(quality, noise, standardize)
    except ConstructionError as exc:
        raise ConfigError(f"{where}: {exc}")
    shell = parse_shell(obj["shell"], f"{where}.shell", m)
    if len(shell.gammas) != len(noise):
        raise ConfigError(f"{where}: one noise variance per group is required")
    return LatentSection(m, shell, lns)


def _parse_oracle(obj: Any, where: str) -> OracleSection:
    _check_keys(obj, where, ("sizes", "seeds"))
    sizes_obj = obj["sizes"]
    if not isinstance(sizes_obj, list) or len(sizes_obj) == 0:
        raise ConfigError(f"{where}.sizes: expected a non-empty array")
    sizes = tuple(
        _parse_int(v, f"{where}.sizes[{k}]", minimum=1)
        for k, v in enumerate(sizes_obj)
    )
    seeds_obj = obj["seeds"]
    if isinstance(seeds_obj, int) and not isinstance(seeds_obj, bool):
        if seeds_obj < 1:
            raise ConfigError(f"{where}.seeds: need at least one seed")
        seeds = tuple(range(seeds_obj))
    elif isinstance(seeds_obj, list) and seeds_obj:
        seeds = tuple(
            _parse_int(v, f"{where}.seeds[{k}]", minimum=0)
            for k, v in enumerate(seeds_obj)
        )
    else:
        raise ConfigError(f"{where}.seeds: expected a count or an array of seeds")
    return OracleSection(sizes, seeds)


def _parse_census(obj: Any, where: str) -> CensusSection:
    _check_keys(obj, where, ("colleges",), ("theta_nodes", "subset"))
    m = _parse_int(obj["colleges"], f"{where}.colleges", minimum=3)
    if m not in (3, 4):
        raise ConfigError(f"{where}.colleges: census is defined for 3 or 4 colleges")
    nodes = _parse_int(obj.get("theta_nodes", CENSUS_THETA_NODES),
                       f"{where}.theta_nodes", minimum=2)
    subset = None
    if "subset" in obj:
        sv = obj["subset"]
        if not isinstance(sv, list) or len(sv) == 0:
            raise ConfigError(f"{where}.subset: expected a non-empty array")
        subset = tuple(
            _parse_int(v, f"{where}.subset[{k}]", minimum=1)
            for k, v in enumerate(sv)
        )
    return CensusSection(m, nodes, subset)


# sections each command reads; anything else present is rejected
_SECTIONS: dict[str, tuple[str, ...]] = {
    "solve": ("market",),
    "sweep": ("market", "sweep"),
    "grid": ("market", "grid"),
    "contour": ("market", "contour"),
    "tiebreak": ("tiebreak",),
    "latent": ("latent",),
    "oracle": ("oracle", "market", "tiebreak", "latent"),
    "census": ("census",),
}

_SETTINGS = ("seed", "tol", "jobs", "out")


def validate_config(doc: Any) -> RunConfig:
    """A RunConfig from a parsed JSON document; ConfigError on any violation."""
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    if "command" not in doc:
        raise ConfigError("config: missing required key 'command'")
    command = doc["command"]
    if command not in COMMANDS:
        raise ConfigError(
            f"config.command: unknown command {command!r} "
            f"(choose one of {', '.join(COMMANDS)})"
        )
    for key in doc:
        if key == "command" or key in _SETTINGS:
            continue
        if key not in _SECTIONS[command]:
            if any(key in sections for sections in _SECTIONS.values()):
                raise ConfigError(
                    f"config: section {key!r} is not used by command {command!r}"
                )
            raise ConfigError(f"config: unknown key {key!r}")

    market = parse_market(doc["market"], "market") if "market" in doc else None
    sweep = grid = contour = tiebreak = latent = oracle = census = None
    if command == "solve":
        if market is None:
            raise ConfigError("config: command 'solve' requires a 'market' section")
    elif command == "sweep":
        if market is None or "sweep" not in doc:
            raise ConfigError(
                "config: command 'sweep' requires 'market' and 'sweep' sections"
            )
        sweep = _parse_sweep(doc["sweep"], "sweep", market)
    elif command == "grid":
        if market is None or "grid" not in doc:
            raise ConfigError(
                "config: command 'grid' requires 'market' and 'grid' sections"
            )
        grid = _parse_grid_section(doc["grid"], "grid", market)
    elif command == "contour":
        if market is None or "contour" not in doc:
            raise ConfigError(
                "config: command 'contour' requires 'market' and 'contour' sections"
            )
        contour = _parse_contour(doc["contour"], "contour", market)
    elif command == "tiebreak":
        if "tiebreak" not in doc:
            raise ConfigError("config: command 'tiebreak' requires a 'tiebreak' section")
        tiebreak = _parse_tiebreak(doc["tiebreak"], "tiebreak")
    elif command == "latent":
        if "latent" not in doc:
            raise ConfigError("config: command 'latent' requires a 'latent' section")
        latent = _parse_latent(doc["latent"], "latent")
    elif command == "oracle":
        if "oracle" not in doc:
            raise ConfigError("config: command 'oracle' requires an 'oracle' section")
        oracle = _parse_oracle(doc["oracle"], "oracle")
        present = [k for k in ("market", "tiebreak", "latent") if k in doc]
        if len(present) != 1:
            raise ConfigError(
                "config: command 'oracle' requires exactly one of "
                "'market', 'tiebreak', or 'latent'"
            )
        if present[0] == "tiebreak":
            tiebreak = _parse_tiebreak(doc["tiebreak"], "tiebreak")
        elif present[0] == "latent":
            latent = _parse_latent(doc["latent"], "latent")
    elif command == "census":
        if "census" not in doc:
            raise ConfigError("config: command 'census' requires a 'census' section")
        census = _parse_census(doc["census"], "census")

    seed = _parse_int(doc.get("seed", DEFAULT_SEED), "config.seed", minimum=0)
    tol = parse_number(doc.get("tol", DEFAULT_TOL), "config.tol")
    if tol <= 0.0:
        raise ConfigError("config.tol: must be positive")
    jobs = _parse_int(doc.get("jobs", DEFAULT_JOBS), "config.jobs", minimum=1)
    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("config.out: expected a path string")
    return RunConfig(
        command=command,
        market=market,
        sweep=sweep,
        grid=grid,
        contour=contour,
        tiebreak=tiebreak,
        latent=latent,
        oracle=oracle,
        census=census,
        seed=seed,
        tol=tol,
        jobs=jobs,
        out=out,
    )


def load_config(path: str) -> tuple[RunConfig, bytes]:
    """Parse and validate a config file; returns the config and its raw bytes."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}")
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}")
    return validate_config(doc), raw

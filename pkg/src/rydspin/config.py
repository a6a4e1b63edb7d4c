"""Strict YAML run configuration.

Every mapping remembers the line of each key so validation errors point
into the file. Unknown keys are errors.

Example::

    fields: {e_dc_V_per_cm: 6.0, b_gauss: auto, diamagnetic: true}
    method: exact
    scan:
      species_pair: [CC, CE]
      theta_rad: {start: 0.0, stop: 1.5707963267948966, num: 50}
      e_dc_V_per_cm: [6, 8, 10, 11, 13]
      b_gauss: auto
      output: cc_ce.csv
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .atom import E_DC_LIMIT, FieldConfig
from .pair import PairSelection
from .species import DEFAULT_SPECIES, SpinSpecies

METHODS = ("exact", "second_order")
GEOMETRY_KINDS = ("interleaved_square", "dual_chain", "dual_chain_aligned")


class ConfigError(ValueError):
    pass


class _LineMap(dict):
    line: int = 0

    def __init__(self):
        super().__init__()
        self.lines: dict[Any, int] = {}


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _LineMap()
    out.line = node.start_mark.line + 1
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        line = key_node.start_mark.line + 1
        if key in out:
            raise ConfigError(f"line {line}: duplicate key {key!r}")
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = line
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


class _Section:
    """Validation cursor over one mapping; pops keys and reports leftovers."""

    def __init__(self, data, where: str, source: str):
        if data is None:
            data = _LineMap()
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: '{where}' must be a mapping")
        self.data = data
        self.where = where
        self.source = source
        self.used: set = set()

    def _loc(self, key=None) -> str:
        line = getattr(self.data, "lines", {}).get(key) or getattr(self.data, "line", 0)
        name = f"{self.where}.{key}" if key is not None and self.where else (key or self.where or "<root>")
        return f"{self.source}:{line}: {name}"

    def fail(self, key, msg: str):
        raise ConfigError(f"{self._loc(key)}: {msg}")

    def raw(self, key, default=None):
        self.used.add(key)
        return self.data.get(key, default)

    def has(self, key) -> bool:
        return key in self.data

    def number(self, key, default=None, positive=False, nonneg=False) -> float:
        val = self.raw(key, default)
        try:
            val = float(val)
        except (TypeError, ValueError):
            self.fail(key, f"expected a number, got {val!r}")
        if not math.isfinite(val):
            self.fail(key, "must be finite")
        if positive and val <= 0:
            self.fail(key, f"must be positive, got {val:g}")
        if nonneg and val < 0:
            self.fail(key, f"must be non-negative, got {val:g}")
        return val

    def integer(self, key, default=None, minimum=None) -> int:
        val = self.raw(key, default)
        if isinstance(val, bool) or not isinstance(val, int):
            self.fail(key, f"expected an integer, got {val!r}")
        if minimum is not None and val < minimum:
            self.fail(key, f"must be >= {minimum}")
        return val

    def boolean(self, key, default=None) -> bool:
        val = self.raw(key, default)
        if not isinstance(val, bool):
            self.fail(key, f"expected true or false, got {val!r}")
        return val

    def string(self, key, default=None, choices=None) -> str:
        val = self.raw(key, default)
        if not isinstance(val, str):
            self.fail(key, f"expected a string, got {val!r}")
        if choices is not None and val not in choices:
            self.fail(key, f"must be one of {list(choices)}, got {val!r}")
        return val

    def number_list(self, key, default=None) -> tuple[float, ...]:
        val = self.raw(key, default)
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            val = [val]
        if not isinstance(val, list) or not val:
            self.fail(key, "expected a non-empty list of numbers")
        try:
            return tuple(float(v) for v in val)
        except (TypeError, ValueError):
            self.fail(key, f"expected numbers, got {val!r}")

    def grid(self, key, default=None) -> tuple[float, ...]:
        """A list of numbers or a {start, stop, num} linspace."""
        val = self.raw(key, default)
        if isinstance(val, dict):
            sub = self.sub(key)
            start = sub.number("start")
            stop = sub.number("stop")
            num = sub.integer("num", minimum=1)
            sub.finish()
            return tuple(np.linspace(start, stop, num).tolist())
        return self.number_list(key, default)

    def b_mode(self, key, default="auto") -> float | str:
        val = self.raw(key, default)
        if val == "auto":
            return "auto"
        b = self.number(key, default)
        if b < 0:
            self.fail(key, "must be 'auto' or a non-negative field in Gauss")
        return b

    def sub(self, key) -> "_Section":
        self.used.add(key)
        return _Section(self.data.get(key), f"{self.where}.{key}" if self.where else str(key), self.source)

    def finish(self) -> None:
        extra = [k for k in self.data if k not in self.used]
        if extra:
            self.fail(extra[0], f"unknown key (allowed: {sorted(map(str, self.used))})")


# --------------------------------------------------------------------------- run description


@dataclass(frozen=True)
class FieldSettings:
    e_dc: float = 6.0
    """V/cm."""
    b: float | str = "auto"
    """Gauss, or "auto" for the resonance field."""
    diamagnetic: bool = True


@dataclass(frozen=True)
class ScanSpec:
    theta: tuple[float, ...]
    species_pair: tuple[str, str] = ("CC", "CC")
    phi: float = 0.0
    distance: float = 7.0
    """Micrometres."""
    e_dc: tuple[float, ...] = (6.0,)
    b: float | str = "auto"
    output: str = "scan.csv"

    def __post_init__(self):
        if not self.theta or not self.e_dc:
            raise ValueError("scan grids must be non-empty")
        if any(not 0 <= t < 2 * math.pi for t in self.theta):
            raise ValueError("theta values must lie in [0, 2 pi)")
        if self.distance <= 0:
            raise ValueError("distance must be positive")


@dataclass(frozen=True)
class SimulateSpec:
    geometry: dict | str
    """Inline {kind, ...params} or a geometry file path."""
    initial: str
    t_max: float
    """Seconds."""
    n_times: int = 201
    rotating_frame: bool = True
    include_c_p: bool = False
    include_c_pp: bool = False
    include_c_pz: bool = False
    output: str = "simulate"
    """Prefix for the output CSV files."""


@dataclass(frozen=True)
class RunConfig:
    fields: FieldSettings = FieldSettings()
    method: str = "exact"
    selection: PairSelection = PairSelection()
    species: dict[str, SpinSpecies] = field(default_factory=lambda: dict(DEFAULT_SPECIES))
    cache: str | None = None
    scan: ScanSpec | None = None
    simulate: SimulateSpec | None = None
    source: str = "<config>"

    def field_config(self, e_dc: float | None = None, b: float | None = None) -> FieldConfig:
        e = self.fields.e_dc if e_dc is None else e_dc
        bb = self.fields.b if b is None else b
        if bb == "auto":
            raise ValueError("resolve the resonance field before building a FieldConfig")
        return FieldConfig(e, bb, self.fields.diamagnetic)

    def species_of(self, name: str) -> SpinSpecies:
        try:
            return self.species[name]
        except KeyError:
            raise ConfigError(f"undefined species {name!r}; known: {sorted(self.species)}") from None

    def to_dict(self) -> dict:
        """Fully defaulted settings; ``parse_config_text`` of its dump reproduces this config."""
        sel = self.selection
        out = {
            "fields": {"e_dc_V_per_cm": self.fields.e_dc, "b_gauss": self.fields.b, "diamagnetic": self.fields.diamagnetic},
            "method": self.method,
            "selection": {
                "energy_cut_GHz": sel.energy_cut / 1e9,
                "n_window": sel.n_window,
                "m_window_total": sel.m_window_total,
                "m_window_atom": sel.m_window_atom,
            },
            "species": {n: {"kind": s.kind, "up": s.level_up, "down": s.level_down} for n, s in self.species.items()},
        }
        if self.cache is not None:
            out["cache"] = self.cache
        if self.scan is not None:
            s = self.scan
            out["scan"] = {
                "species_pair": list(s.species_pair),
                "theta_rad": list(s.theta),
                "phi_rad": s.phi,
                "distance_um": s.distance,
                "e_dc_V_per_cm": list(s.e_dc),
                "b_gauss": s.b,
                "output": s.output,
            }
        if self.simulate is not None:
            d = asdict(self.simulate)
            d["t_max_s"] = d.pop("t_max")
            out["simulate"] = d
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _parse_species(sec: _Section) -> dict[str, SpinSpecies]:
    species = dict(DEFAULT_SPECIES)
    for name in list(sec.data):
        sub = sec.sub(name)
        kind = sub.string("kind", choices=("CC", "CE"))
        up, down = sub.string("up"), sub.string("down")
        sub.finish()
        try:
            species[str(name)] = SpinSpecies(str(name), kind, up, down)
        except ValueError as exc:
            sec.fail(name, str(exc))
    return species


def _warn_field(sec: _Section, key, value: float) -> None:
    if value > E_DC_LIMIT:
        warnings.warn(
            f"{sec._loc(key)}: E_dc={value:g} V/cm exceeds the {E_DC_LIMIT} V/cm field limit for these levels",
            stacklevel=4,
        )


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(f"{source}:{mark.line + 1 if mark else '?'}: {exc.problem}") from None
    root = _Section(data, "", source)

    f = root.sub("fields")
    e_dc = f.number("e_dc_V_per_cm", 6.0, nonneg=True)
    _warn_field(f, "e_dc_V_per_cm", e_dc)
    fields = FieldSettings(e_dc, f.b_mode("b_gauss"), f.boolean("diamagnetic", True))
    f.finish()

    method = root.string("method", "exact", choices=METHODS)

    s = root.sub("selection")
    default = PairSelection()
    selection = PairSelection(
        energy_cut=s.number("energy_cut_GHz", default.energy_cut / 1e9, positive=True) * 1e9,
        n_window=s.integer("n_window", default.n_window, minimum=0),
        m_window_total=s.integer("m_window_total", default.m_window_total, minimum=0),
        m_window_atom=s.integer("m_window_atom", default.m_window_atom, minimum=1),
    )
    s.finish()

    species = _parse_species(root.sub("species"))
    cache = root.string("cache") if root.has("cache") else None
    if cache is None:
        root.used.add("cache")

    scan = None
    if root.has("scan"):
        sc = root.sub("scan")
        pair = sc.raw("species_pair", ["CC", "CC"])
        if not (isinstance(pair, list) and len(pair) == 2 and all(p in species for p in pair)):
            sc.fail("species_pair", f"expected two defined species names, got {pair!r}")
        theta = sc.grid("theta_rad", [math.pi / 2])
        if any(not 0 <= t < 2 * math.pi for t in theta):
            sc.fail("theta_rad", "values must lie in [0, 2 pi)")
        e_list = sc.number_list("e_dc_V_per_cm", [fields.e_dc])
        for e in e_list:
            if e < 0:
                sc.fail("e_dc_V_per_cm", "must be non-negative")
            _warn_field(sc, "e_dc_V_per_cm", e)
        scan = ScanSpec(
            theta=theta,
            species_pair=tuple(pair),
            phi=sc.number("phi_rad", 0.0),
            distance=sc.number("distance_um", 7.0, positive=True),
            e_dc=e_list,
            b=sc.b_mode("b_gauss", fields.b),
            output=sc.string("output", "scan.csv"),
        )
        sc.finish()

    simulate = None
    if root.has("simulate"):
        sm = root.sub("simulate")
        geom = sm.raw("geometry")
        if isinstance(geom, dict):
            kind = geom.get("kind")
            if kind not in GEOMETRY_KINDS:
                sm.fail("geometry", f"kind must be one of {list(GEOMETRY_KINDS)}, got {kind!r}")
            for k in geom:
                if k == "kind":
                    continue
                if k in ("species_a", "species_b"):
                    if geom[k] not in species:
                        sm.fail("geometry", f"{k}={geom[k]!r} is not a defined species")
                elif k not in ("spacing", "separation", "n", "nx", "ny", "theta"):
                    sm.fail("geometry", f"unknown geometry parameter {k!r}")
            geom = {k: v for k, v in geom.items()}
        elif not isinstance(geom, str):
            sm.fail("geometry", "expected a mapping with 'kind' or a geometry file path")
        initial = sm.string("initial")
        if not initial or set(initial) - set("ud"):
            sm.fail("initial", "expected a string of 'u'/'d' characters, one per site")
        simulate = SimulateSpec(
            geometry=geom,
            initial=initial,
            t_max=sm.number("t_max_s", positive=True),
            n_times=sm.integer("n_times", 201, minimum=2),
            rotating_frame=sm.boolean("rotating_frame", True),
            include_c_p=sm.boolean("include_c_p", False),
            include_c_pp=sm.boolean("include_c_pp", False),
            include_c_pz=sm.boolean("include_c_pz", False),
            output=sm.string("output", "simulate"),
        )
        sm.finish()

    root.finish()
    return RunConfig(fields, method, selection, species, cache, scan, simulate, source)


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    return parse_config_text(path.read_text(), str(path))


def resolve_geometry_spec(spec: SimulateSpec, config: RunConfig, base: Path | None = None):
    """Turn the ``geometry`` entry into a ``Geometry``."""
    from .model import generate_example_geometry, read_geometry

    if isinstance(spec.geometry, str):
        path = Path(spec.geometry)
        if base is not None and not path.is_absolute():
            path = base / path
        return read_geometry(path)
    params = dict(spec.geometry)
    kind = params.pop("kind")
    for k in ("species_a", "species_b"):
        if k in params:
            params[k] = config.species_of(params[k])
    return generate_example_geometry(kind, **params)


__all__ = [
    "ConfigError",
    "FieldSettings",
    "RunConfig",
    "ScanSpec",
    "SimulateSpec",
    "parse_config",
    "parse_config_text",
    "resolve_geometry_spec",
]

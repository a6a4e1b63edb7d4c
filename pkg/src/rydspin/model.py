"""N-site effective spin models assembled from isolated pair calculations."""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .atom import FieldConfig
from .effective import SpinCoefficients, compute_kappa, effective_pair, extract_pair_coefficients
from .pair import PairGeometry, PairSelection, assemble_pair_hamiltonian, select_pair_basis
from .species import CC, CE, DEFAULT_SPECIES, AtomWorkspace, SpinSpecies, default_workspace

logger = logging.getLogger(__name__)

MAGIC_THETA = 0.3041 * math.pi
N_CAP = 14
CLOSE_DISTANCE = 2.0
"""Micrometres; closer pairs are flagged as strongly mixed."""


@dataclass(frozen=True)
class AtomSite:
    position: tuple[float, float, float]
    """Micrometres."""
    species: SpinSpecies

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        if len(self.position) != 3:
            raise ValueError("positions are 3-vectors")


@dataclass(frozen=True)
class SiteField:
    one_body: float
    interaction_shift: float

    @property
    def total(self) -> float:
        return self.one_body + self.interaction_shift


@dataclass
class SpinModel:
    sites: list[AtomSite]
    site_fields: list[SiteField]
    pair_coeffs: dict[tuple[int, int], SpinCoefficients]
    fields: FieldConfig
    include_c_p: bool = False
    include_c_pp: bool = False
    include_c_pz: bool = False

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def coefficient(self, j: int, k: int) -> SpinCoefficients:
        return self.pair_coeffs[(min(j, k), max(j, k))]

    def c_plus(self, j: int) -> complex:
        """Total single-raise coefficient of site j summed over partners."""
        total = 0j
        for (a, b), c in self.pair_coeffs.items():
            if a == j:
                total += c.c_p_j
            elif b == j:
                total += c.c_p_k
        return total


class PairEvaluator:
    """Evaluates and caches pair coefficients by geometric and field signature."""

    def __init__(
        self,
        fields: FieldConfig,
        method: str = "exact",
        selection: PairSelection = PairSelection(),
        workspace: AtomWorkspace | None = None,
    ):
        self.fields = fields
        self.method = method
        self.selection = selection
        self.workspace = workspace or default_workspace()
        self._bases: dict = {}
        self._coeffs: dict = {}

    def basis(self, pair: tuple[SpinSpecies, SpinSpecies]):
        b = self._bases.get(pair)
        if b is None:
            b = self._bases[pair] = select_pair_basis(pair, self.fields, self.selection, self.workspace)
        return b

    def __call__(self, sp1: SpinSpecies, sp2: SpinSpecies, geometry: PairGeometry) -> SpinCoefficients:
        key = (sp1, sp2, round(geometry.distance, 9), round(geometry.theta, 12), round(geometry.phi, 12))
        cached = self._coeffs.get(key)
        if cached is not None:
            return cached
        h = assemble_pair_hamiltonian(self.basis((sp1, sp2)), geometry)
        kappa = compute_kappa(h).kappa
        coeffs = extract_pair_coefficients(effective_pair(h, self.method), kappa)
        self._coeffs[key] = coeffs
        return coeffs


def build_model(
    sites: list[AtomSite],
    fields: FieldConfig,
    method: str = "exact",
    selection: PairSelection = PairSelection(),
    workspace: AtomWorkspace | None = None,
    evaluator: PairEvaluator | None = None,
    kappa_warn: float = 0.99,
    **toggles,
) -> SpinModel:
    """Evaluate every pair in isolation and accumulate the site fields."""
    ws = workspace or default_workspace()
    evaluator = evaluator or PairEvaluator(fields, method, selection, ws)
    pair_coeffs: dict[tuple[int, int], SpinCoefficients] = {}
    for j, k in itertools.combinations(range(len(sites)), 2):
        r = np.subtract(sites[k].position, sites[j].position)
        dist = float(np.linalg.norm(r))
        if dist == 0:
            raise ValueError(f"sites {j} and {k} coincide")
        if dist < CLOSE_DISTANCE:
            warnings.warn(f"sites {j} and {k} are {dist:.3g} um apart; strong mixing expected", stacklevel=2)
        try:
            coeffs = evaluator(sites[j].species, sites[k].species, PairGeometry.from_vector(r))
        except Exception as exc:
            raise type(exc)(f"pair ({j}, {k}): {exc}") from exc
        if coeffs.kappa < kappa_warn:
            warnings.warn(f"pair ({j}, {k}) has kappa={coeffs.kappa:.4f} < {kappa_warn}", stacklevel=2)
        pair_coeffs[(j, k)] = coeffs

    site_fields = []
    for j, site in enumerate(sites):
        up, down = ws.levels(site.species, fields)
        shift = 0.0
        for (a, b), c in pair_coeffs.items():
            if a == j:
                shift += c.shift_j
            elif b == j:
                shift += c.shift_k
        site_fields.append(SiteField(one_body=up.energy - down.energy, interaction_shift=shift))
    return SpinModel(list(sites), site_fields, pair_coeffs, fields, **toggles)


# --------------------------------------------------------------------------- many-body operator


def _sz(n: int, j: int) -> np.ndarray:
    """S_z^j on the computational basis; bit j set means spin down."""
    idx = np.arange(2**n)
    return 0.5 - ((idx >> j) & 1)


def assemble_many_body_hamiltonian(
    model: SpinModel,
    cap: int = N_CAP,
    frame: float = 0.0,
) -> np.ndarray:
    """Dense 2^N Hamiltonian in Hz; site 0 is the least significant bit, bit 1 = down.

    ``frame`` is subtracted as ``frame * sum_j S_z^j`` (rotating frame).
    The constant C_I term is omitted.
    """
    n = model.n_sites
    if n > cap:
        raise ValueError(f"{n} sites exceed the cap of {cap}")
    dim = 2**n
    coeffs = list(model.pair_coeffs.values())
    real = all(
        abs(complex(getattr(c, a)).imag) == 0 for c in coeffs for a in ("c_pm", "c_pp", "c_pz", "c_zp", "c_p_j", "c_p_k")
    )
    h = np.zeros((dim, dim), dtype=np.float64 if real else np.complex128)
    idx = np.arange(dim)
    sz = [_sz(n, j) for j in range(n)]
    diag = np.zeros(dim)
    for j in range(n):
        diag += (model.site_fields[j].total - frame) * sz[j]
    for (j, k), c in model.pair_coeffs.items():
        diag += c.c_zz * sz[j] * sz[k]
    h[idx, idx] = diag

    def add(rows, cols, val):
        if not real:
            h[rows, cols] += val
            h[cols, rows] += np.conj(val)
        else:
            h[rows, cols] += np.real(val)
            h[cols, rows] += np.real(val)

    for (j, k), c in model.pair_coeffs.items():
        bj, bk = 1 << j, 1 << k
        down_j = (idx & bj) != 0
        down_k = (idx & bk) != 0
        # S_j^+ S_k^-: |d_j u_k> -> |u_j d_k>
        src = idx[down_j & ~down_k]
        add(src ^ bj ^ bk, src, c.c_pm)
        if model.include_c_pp:
            src = idx[down_j & down_k]
            add(src ^ bj ^ bk, src, c.c_pp)
        if model.include_c_pz:
            src = idx[down_j]
            add(src ^ bj, src, c.c_pz * sz[k][src])
            src = idx[down_k]
            add(src ^ bk, src, c.c_zp * sz[j][src])
    if model.include_c_p:
        for j in range(n):
            cp = model.c_plus(j)
            src = idx[(idx & (1 << j)) != 0]
            add(src ^ (1 << j), src, cp)
    return h


def total_sz(n: int) -> np.ndarray:
    return np.diag(sum(_sz(n, j) for j in range(n)))


# --------------------------------------------------------------------------- example geometries


@dataclass
class Geometry:
    sites: list[AtomSite]
    labels: list[str] = field(default_factory=list)


def generate_example_geometry(kind: str, **params) -> Geometry:
    """Example arrays in the x-z plane (Z is the field axis).

    interleaved_square: lattice A (species_a) with sides at pi/4 to Z and a
        B site (species_b) at each cell centre. Params: spacing, nx, ny.
    dual_chain: two parallel chains along the magic angle; chain B is offset
        perpendicular to the chains. Params: spacing, separation, n.
    dual_chain_aligned: as dual_chain with partners jA, jB stacked along Z.
    """
    species_a = params.pop("species_a", CC)
    species_b = params.pop("species_b", CE)
    if kind == "interleaved_square":
        a = params.pop("spacing", 10.0)
        nx, ny = params.pop("nx", 2), params.pop("ny", 2)
        _reject_unknown(params)
        c = 1 / math.sqrt(2)
        u1 = a * np.array([c, 0.0, c])
        u2 = a * np.array([-c, 0.0, c])
        sites, labels = [], []
        for i in range(nx):
            for j in range(ny):
                sites.append(AtomSite(tuple(i * u1 + j * u2), species_a))
                labels.append(f"A{i},{j}")
        for i in range(nx - 1):
            for j in range(ny - 1):
                sites.append(AtomSite(tuple((i + 0.5) * u1 + (j + 0.5) * u2), species_b))
                labels.append(f"B{i},{j}")
        return Geometry(sites, labels)
    if kind in ("dual_chain", "dual_chain_aligned"):
        s = params.pop("spacing", 10.0)
        d = params.pop("separation", 7.0)
        n = params.pop("n", 3)
        theta = params.pop("theta", MAGIC_THETA)
        _reject_unknown(params)
        e = np.array([math.sin(theta), 0.0, math.cos(theta)])
        if kind == "dual_chain":
            offset = d * np.array([math.cos(theta), 0.0, -math.sin(theta)])
        else:
            offset = d * np.array([0.0, 0.0, 1.0])
        sites, labels = [], []
        for j in range(n):
            sites.append(AtomSite(tuple(j * s * e), species_a))
            labels.append(f"{j + 1}A")
        for j in range(n):
            sites.append(AtomSite(tuple(j * s * e + offset), species_b))
            labels.append(f"{j + 1}B")
        return Geometry(sites, labels)
    raise ValueError(f"unknown geometry kind {kind!r}")


def _reject_unknown(params: dict) -> None:
    if params:
        raise TypeError(f"unknown geometry parameters: {sorted(params)}")


# --------------------------------------------------------------------------- geometry files


def species_to_dict(sp: SpinSpecies) -> dict:
    return {"kind": sp.kind, "up": sp.level_up, "down": sp.level_down}


def species_from_dict(name: str, d: dict) -> SpinSpecies:
    unknown = set(d) - {"kind", "up", "down"}
    if unknown:
        raise ValueError(f"species {name}: unknown keys {sorted(unknown)}")
    return SpinSpecies(name, d["kind"], d["up"], d["down"])


def write_geometry(geometry: Geometry, path: str | Path) -> Path:
    path = Path(path)
    species = {s.species.name: species_to_dict(s.species) for s in geometry.sites}
    doc = {
        "species": species,
        "sites": [[*map(float, s.position), s.species.name] for s in geometry.sites],
    }
    if geometry.labels:
        doc["labels"] = list(geometry.labels)
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return path


def read_geometry(path: str | Path) -> Geometry:
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict) or "sites" not in doc:
        raise ValueError(f"{path}: expected a mapping with a 'sites' list")
    unknown = set(doc) - {"species", "sites", "labels"}
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    species = dict(DEFAULT_SPECIES)
    for name, d in (doc.get("species") or {}).items():
        species[name] = species_from_dict(name, d)
    sites = []
    for i, row in enumerate(doc["sites"]):
        if len(row) != 4:
            raise ValueError(f"{path}: site {i} must be [x_um, y_um, z_um, species]")
        if row[3] not in species:
            raise ValueError(f"{path}: site {i} uses undefined species {row[3]!r}")
        sites.append(AtomSite(tuple(row[:3]), species[row[3]]))
    return Geometry(sites, list(doc.get("labels") or []))

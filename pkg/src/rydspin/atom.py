"""One-body Rydberg structure: bare levels, field dressing and dipole matrices.

The one-body Hamiltonian with fields along Z conserves ``m``, so every object
here is organised in ``m`` blocks. Energies are returned in h x Hz.
"""

from __future__ import annotations

import logging
import re
import threading
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import constants as units
from .angular import sin2_element, spherical_tensor_element
from .constants import CONSTANTS
from .radial import NumerovSolver, RadialCache

logger = logging.getLogger(__name__)

E_DC_LIMIT = 20.0
B_LIMIT = 1000.0


class AmbiguousLabel(RuntimeError):
    """No eigenstate has more than half of its weight on the requested bare state."""


class MissingBlock(KeyError):
    pass


@dataclass(frozen=True, order=True)
class BareState:
    n: int
    l: int
    m: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0 <= self.l <= self.n - 1:
            raise ValueError(f"l must lie in [0, n-1], got n={self.n} l={self.l}")
        if abs(self.m) > self.l:
            raise ValueError(f"|m| must not exceed l, got l={self.l} m={self.m}")

    @property
    def is_circular(self) -> bool:
        return abs(self.m) == self.l == self.n - 1

    @property
    def is_elliptical(self) -> bool:
        return self.l == self.n - 2 and abs(self.m) == self.n - 2

    @property
    def label(self) -> str:
        sign = "+" if self.m > 0 else "-"
        if self.is_circular and self.n > 1:
            return f"{self.n}C{sign}"
        if self.is_elliptical and self.n > 2:
            return f"{self.n}E{sign}"
        return "generic"


_LABEL_RE = re.compile(r"^\s*(\d+)\s*([CE])\s*([+-])\s*$")


def parse_label(label: str) -> BareState:
    """``"55C-"`` -> |55, 54, -54>, ``"73E+"`` -> |73, 71, 71>."""
    match = _LABEL_RE.match(label.replace("−", "-"))
    if not match:
        raise ValueError(f"cannot parse state label {label!r}; expected e.g. '55C-' or '73E+'")
    n = int(match.group(1))
    kind = match.group(2)
    sign = 1 if match.group(3) == "+" else -1
    l = n - 1 if kind == "C" else n - 2
    return BareState(n, l, sign * l)


@dataclass(frozen=True)
class QuantumDefectTable:
    delta_by_l: Mapping[int, float] = field(default_factory=dict)

    def delta(self, l: int) -> float:
        return float(self.delta_by_l.get(l, 0.0))

    def nu(self, n: int, l: int) -> float:
        d = self.delta(l)
        if d >= n:
            raise ValueError(f"quantum defect {d} >= n={n} for l={l}: unphysical effective quantum number")
        return n - d

    def key(self) -> tuple:
        return tuple(sorted((int(k), float(v)) for k, v in self.delta_by_l.items() if v != 0.0))


HYDROGENIC = QuantumDefectTable()


@dataclass(frozen=True)
class FieldConfig:
    """Static fields along Z. ``e_dc`` in V/cm, ``b`` in Gauss."""

    e_dc: float = 0.0
    b: float = 0.0
    include_diamagnetic: bool = True

    def __post_init__(self):
        if self.e_dc < 0 or self.b < 0:
            raise ValueError(f"field strengths must be non-negative, got E={self.e_dc} B={self.b}")
        if self.e_dc > E_DC_LIMIT:
            warnings.warn(
                f"E_dc={self.e_dc} V/cm exceeds the {E_DC_LIMIT} V/cm limit assumed for n <~ 73 (field ionisation)",
                stacklevel=3,
            )
        if self.b > B_LIMIT:
            warnings.warn(f"B={self.b} G exceeds the {B_LIMIT} G laboratory limit", stacklevel=3)

    def with_b(self, b: float) -> "FieldConfig":
        return FieldConfig(self.e_dc, b, self.include_diamagnetic)


@dataclass(frozen=True)
class OneBodyBasis:
    m: int
    states: tuple[BareState, ...]

    def __post_init__(self):
        if not self.states:
            raise ValueError("empty one-body basis")
        ms = {s.m for s in self.states}
        if ms != {self.m}:
            raise ValueError(f"mixed-m basis: block m={self.m} contains m values {sorted(ms)}")
        keys = [(s.n, s.l) for s in self.states]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (n, l) entries in basis")

    @classmethod
    def for_m(cls, m: int, n_min: int, n_max: int) -> "OneBodyBasis":
        states = tuple(
            BareState(n, l, m) for n in range(max(n_min, abs(m) + 1), n_max + 1) for l in range(abs(m), n)
        )
        return cls(m, states)

    def __len__(self) -> int:
        return len(self.states)

    def index(self, state: BareState) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise KeyError(f"{state} not in basis block m={self.m}") from None


# --------------------------------------------------------------------------- radial


class RadialIntegrals:
    """Numerov-backed radial matrix elements with a shared dipole cache."""

    def __init__(self, solver: NumerovSolver | None = None, cache: RadialCache | None = None):
        self.solver = solver or NumerovSolver(n_max=150, points_per_wavelength=10.0)
        self.cache = cache if cache is not None else RadialCache()
        self._moments: dict[tuple, float] = {}

    def _wf(self, n, l, defects):
        return self.solver.wavefunction(n, l, defects.nu(n, l))

    def dipole(self, n1, l1, n2, l2, defects: QuantumDefectTable = HYDROGENIC) -> float:
        if abs(l1 - l2) != 1:
            raise ValueError(f"dipole radial integral needs |l1 - l2| = 1, got l1={l1} l2={l2}")
        key = RadialCache.key(n1, l1, n2, l2, defects.delta(l1), defects.delta(l2))
        value = self.cache.get(key)
        if value is None:
            value = self.compute(n1, l1, n2, l2, defects, power=1)
            self.cache.put(key, value)
        return value

    def moment(self, n1, l1, n2, l2, power: int, defects: QuantumDefectTable = HYDROGENIC) -> float:
        a, b = (n1, l1), (n2, l2)
        if b < a:
            a, b = b, a
        key = (a, b, power, defects.key())
        value = self._moments.get(key)
        if value is None:
            value = self.compute(a[0], a[1], b[0], b[1], defects, power)
            self._moments[key] = value
        return value

    def compute(self, n1, l1, n2, l2, defects, power: int) -> float:
        return self.solver.matrix_element(self._wf(n1, l1, defects), self._wf(n2, l2, defects), power)


_default_radial = RadialIntegrals()
_default_lock = threading.Lock()


def default_radial() -> RadialIntegrals:
    return _default_radial


def set_default_radial(radial: RadialIntegrals) -> None:
    global _default_radial
    with _default_lock:
        _default_radial = radial


# --------------------------------------------------------------------------- bare


def bare_energy(n: int, l: int, defects: QuantumDefectTable = HYDROGENIC) -> float:
    """Rydberg-Ritz energy -Ry / (n - delta_l)^2 in Hz."""
    return -CONSTANTS.rydberg_frequency / defects.nu(n, l) ** 2


def radial_integral(n1: int, l1: int, n2: int, l2: int, defects: QuantumDefectTable = HYDROGENIC) -> float:
    """Radial dipole integral <n1 l1| r |n2 l2> in units of a0 (|l1 - l2| = 1)."""
    return default_radial().dipole(n1, l1, n2, l2, defects)


def bare_dipole_element(
    s1: BareState, s2: BareState, q: int, defects: QuantumDefectTable = HYDROGENIC
) -> float:
    """Amplitude <s2| d_q |s1> in e a0; zero unless |l2 - l1| = 1 and m2 = m1 + q."""
    if abs(s1.l - s2.l) != 1 or s2.m != s1.m + q:
        return 0.0
    angular = spherical_tensor_element(s2.l, s2.m, 1, q, s1.l, s1.m)
    if angular == 0.0:
        return 0.0
    return radial_integral(s1.n, s1.l, s2.n, s2.l, defects) * angular


def bare_dipole_matrix(
    bra: OneBodyBasis, ket: OneBodyBasis, defects: QuantumDefectTable = HYDROGENIC, radial=None
) -> np.ndarray:
    """<bra_i| d_q |ket_j> with q = bra.m - ket.m."""
    radial = radial or default_radial()
    q = bra.m - ket.m
    out = np.zeros((len(bra), len(ket)))
    if abs(q) > 1:
        return out
    for i, s2 in enumerate(bra.states):
        for j, s1 in enumerate(ket.states):
            if abs(s1.l - s2.l) != 1:
                continue
            angular = spherical_tensor_element(s2.l, s2.m, 1, q, s1.l, s1.m)
            if angular:
                out[i, j] = radial.dipole(s1.n, s1.l, s2.n, s2.l, defects) * angular
    return out


def block_operators(
    basis: OneBodyBasis, defects: QuantumDefectTable = HYDROGENIC, radial: RadialIntegrals | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Field-independent pieces of a block: bare energies (Hz), z and rho^2 (a.u.)."""
    radial = radial or default_radial()
    dim = len(basis)
    m = basis.m
    energies = np.array([bare_energy(s.n, s.l, defects) for s in basis.states])
    z = np.zeros((dim, dim))
    rho2 = np.zeros((dim, dim))
    for i, si in enumerate(basis.states):
        for j in range(i, dim):
            sj = basis.states[j]
            dl = abs(si.l - sj.l)
            if dl == 1:
                ang = spherical_tensor_element(si.l, m, 1, 0, sj.l, m)
                if ang:
                    z[i, j] = z[j, i] = ang * radial.dipole(si.n, si.l, sj.n, sj.l, defects)
            elif dl in (0, 2):
                ang = sin2_element(si.l, sj.l, m)
                if ang:
                    rho2[i, j] = rho2[j, i] = ang * radial.moment(si.n, si.l, sj.n, sj.l, 2, defects)
    return energies, z, rho2


def assemble_one_body(
    operators: tuple[np.ndarray, np.ndarray, np.ndarray],
    m: int,
    fields: FieldConfig,
    diamagnetic_scale: float | None = None,
) -> np.ndarray:
    energies, z, rho2 = operators
    zeeman = CONSTANTS.bohr_magneton * 1e6 * fields.b * m
    h = np.diag(energies + zeeman)
    if fields.e_dc:
        h = h + units.au_to_hz(units.efield_to_au(fields.e_dc)) * z
    if diamagnetic_scale is None:
        diamagnetic_scale = 1.0 if fields.include_diamagnetic else 0.0
    if fields.b and diamagnetic_scale:
        h = h + diamagnetic_scale * units.au_to_hz(units.bfield_to_au(fields.b) ** 2 / 8.0) * rho2
    return h


def build_one_body_hamiltonian(
    basis: OneBodyBasis,
    fields: FieldConfig,
    defects: QuantumDefectTable = HYDROGENIC,
    radial: RadialIntegrals | None = None,
) -> np.ndarray:
    """Field-dressed one-body Hamiltonian of one m block, in Hz.

    Bare Rydberg-Ritz energies, orbital Zeeman term mu_B B m, Stark term
    e E z and, if enabled, the diamagnetic term B^2 rho^2 / 8.
    """
    if len({s.m for s in basis.states}) != 1:
        raise ValueError("mixed-m basis")
    return assemble_one_body(block_operators(basis, defects, radial), basis.m, fields)


# --------------------------------------------------------------------------- dressing


@dataclass
class BlockEigensystem:
    basis: OneBodyBasis
    energies: np.ndarray
    """Sorted eigenenergies, Hz."""
    vectors: np.ndarray
    """Columns are eigenvectors over ``basis``."""

    @property
    def m(self) -> int:
        return self.basis.m

    def dominant_states(self) -> list[BareState]:
        idx = np.argmax(np.abs(self.vectors) ** 2, axis=0)
        return [self.basis.states[i] for i in idx]


def diagonalize_block(h: np.ndarray, basis: OneBodyBasis | None = None, atol: float = 1e-10):
    """Eigen-decomposition sorted by energy, phase-fixed so the dominant amplitude is real positive.

    Returns a ``BlockEigensystem`` when ``basis`` is given, else ``(energies, vectors)``.
    """
    h = np.asarray(h)
    scale = max(np.max(np.abs(h)), 1.0)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"square matrix required, got shape {h.shape}")
    if np.max(np.abs(h - h.conj().T)) > atol * scale:
        raise ValueError("non-Hermitian input")
    # Shift by the mean diagonal to keep the solver well conditioned.
    shift = float(np.mean(np.real(np.diag(h))))
    energies, vectors = np.linalg.eigh(h - shift * np.eye(len(h)))
    energies = energies + shift
    dom = np.argmax(np.abs(vectors), axis=0)
    phases = vectors[dom, np.arange(vectors.shape[1])]
    vectors = vectors * (np.abs(phases) / phases)[np.newaxis, :]
    if basis is None:
        return energies, vectors
    return BlockEigensystem(basis, energies, vectors)


@dataclass(frozen=True, eq=False)
class DressedState:
    label: str
    energy: float
    """Hz."""
    composition: np.ndarray
    dominant_overlap: float
    m: int
    index: int
    """Position of the eigenstate in its sorted block."""
    parent: BareState | None = None


def identify_dressed_state(eig: BlockEigensystem, target: BareState, threshold: float = 0.5) -> DressedState:
    """Eigenstate with maximal overlap on ``target``; raises AmbiguousLabel if that overlap <= threshold."""
    if target.m != eig.m:
        raise ValueError(f"target m={target.m} does not match block m={eig.m}")
    try:
        row = eig.basis.index(target)
    except KeyError as exc:
        raise AmbiguousLabel(f"{target} is not contained in the truncated basis") from exc
    overlaps = np.abs(eig.vectors[row, :]) ** 2
    k = int(np.argmax(overlaps))
    best = float(overlaps[k])
    if best <= threshold:
        raise AmbiguousLabel(
            f"best overlap with {target.label or target} is {best:.4f} <= {threshold}; "
            "near an avoided crossing, refine fields or basis"
        )
    label = target.label
    return DressedState(
        label=label,
        energy=float(eig.energies[k]),
        composition=eig.vectors[:, k].copy(),
        dominant_overlap=best,
        m=eig.m,
        index=k,
        parent=target,
    )


@dataclass
class DressedDipoleSet:
    """Dressed one-body dipole matrices keyed by ``(m_bra, m_ket)``; q = m_bra - m_ket."""

    matrices: dict[tuple[int, int], np.ndarray]

    def get(self, m_bra: int, m_ket: int) -> np.ndarray:
        try:
            return self.matrices[(m_bra, m_ket)]
        except KeyError:
            raise MissingBlock(f"no dressed dipole matrix for m block pair (bra m={m_bra}, ket m={m_ket})") from None

    def element(self, m_bra: int, i_bra: int, m_ket: int, i_ket: int, q: int) -> float:
        if m_bra != m_ket + q:
            return 0.0
        return self.get(m_bra, m_ket)[i_bra, i_ket]


def dressed_dipole_matrices(
    blocks: Mapping[int, BlockEigensystem],
    defects: QuantumDefectTable = HYDROGENIC,
    radial: RadialIntegrals | None = None,
) -> DressedDipoleSet:
    """Bare dipole matrices rotated into the dressed eigenbases of every linked block pair."""
    mats = {}
    for m_ket, ket in blocks.items():
        for q in (-1, 0, 1):
            m_bra = m_ket + q
            if m_bra not in blocks:
                continue
            bra = blocks[m_bra]
            d = bare_dipole_matrix(bra.basis, ket.basis, defects, radial)
            mats[(m_bra, m_ket)] = bra.vectors.conj().T @ d @ ket.vectors
    return DressedDipoleSet(mats)


# --------------------------------------------------------------------------- registry


class OneBodySystem:
    """Lazily dressed m blocks of a single atom at fixed fields.

    Parameters
    ----------
    fields : FieldConfig
    n_min, n_max : int
        Principal quantum number window of every block.
    defects : QuantumDefectTable
    label_mode : {"auto", "overlap", "adiabatic"}
        How :meth:`dressed` assigns labels. ``"overlap"`` is the plain
        maximal-overlap rule; ``"adiabatic"`` follows the state from zero
        electric field; ``"auto"`` uses the overlap rule and falls back to
        following the state when the overlap rule is ambiguous.
    """

    def __init__(
        self,
        fields: FieldConfig,
        n_min: int,
        n_max: int,
        defects: QuantumDefectTable = HYDROGENIC,
        radial: RadialIntegrals | None = None,
        label_mode: str = "auto",
    ):
        if n_min < 1 or n_max < n_min:
            raise ValueError(f"invalid n window [{n_min}, {n_max}]")
        if label_mode not in ("auto", "overlap", "adiabatic"):
            raise ValueError(f"unknown label_mode {label_mode!r}")
        self.fields = fields
        self.n_min = n_min
        self.n_max = n_max
        self.defects = defects
        self.radial = radial or default_radial()
        self.label_mode = label_mode
        self._operators: dict[int, tuple] = {}
        self._blocks: dict[int, BlockEigensystem] = {}
        self._dipoles: dict[tuple[int, int], np.ndarray] = {}
        self._dressed: dict[BareState, DressedState] = {}
        self._lock = threading.Lock()

    @classmethod
    def around(cls, targets: Iterable[BareState], fields: FieldConfig, n_window: int = 5, **kw) -> "OneBodySystem":
        ns = [t.n for t in targets]
        return cls(fields, max(1, min(ns) - n_window), max(ns) + n_window, **kw)

    def with_fields(self, fields: FieldConfig) -> "OneBodySystem":
        """Same basis at other fields; field-independent operators are shared."""
        other = OneBodySystem(fields, self.n_min, self.n_max, self.defects, self.radial, self.label_mode)
        other._operators = self._operators
        return other

    def has_m(self, m: int) -> bool:
        return abs(m) < self.n_max

    def basis(self, m: int) -> OneBodyBasis:
        if not self.has_m(m):
            raise MissingBlock(f"m={m} has no states below n_max={self.n_max}")
        return OneBodyBasis.for_m(m, self.n_min, self.n_max)

    def operators(self, m: int) -> tuple:
        ops = self._operators.get(m)
        if ops is None:
            ops = block_operators(self.basis(m), self.defects, self.radial)
            with self._lock:
                self._operators.setdefault(m, ops)
        return ops

    def hamiltonian(self, m: int, fields: FieldConfig | None = None, diamagnetic_scale=None) -> np.ndarray:
        return assemble_one_body(self.operators(m), m, fields or self.fields, diamagnetic_scale)

    def block(self, m: int) -> BlockEigensystem:
        blk = self._blocks.get(m)
        if blk is None:
            blk = diagonalize_block(self.hamiltonian(m), self.basis(m))
            with self._lock:
                self._blocks.setdefault(m, blk)
        return blk

    def dipole(self, m_bra: int, m_ket: int) -> np.ndarray:
        """Dressed <bra| d_q |ket> between blocks, q = m_bra - m_ket."""
        key = (m_bra, m_ket)
        mat = self._dipoles.get(key)
        if mat is None:
            if abs(m_bra - m_ket) > 1:
                raise ValueError("dipole couples only |dm| <= 1")
            bra, ket = self.block(m_bra), self.block(m_ket)
            d = bare_dipole_matrix(bra.basis, ket.basis, self.defects, self.radial)
            mat = bra.vectors.conj().T @ d @ ket.vectors
            with self._lock:
                self._dipoles.setdefault(key, mat)
        return mat

    def dressed(self, target: BareState | str) -> DressedState:
        if isinstance(target, str):
            target = parse_label(target)
        cached = self._dressed.get(target)
        if cached is not None:
            return cached
        blk = self.block(target.m)
        if self.label_mode == "overlap":
            state = identify_dressed_state(blk, target)
        elif self.label_mode == "adiabatic":
            state = self._follow(target)
        else:
            try:
                state = identify_dressed_state(blk, target)
            except AmbiguousLabel:
                state = self._follow(target)
        with self._lock:
            self._dressed.setdefault(target, state)
        return state

    def _follow(self, target: BareState, e_step: float = 0.25, dia_steps: int = 10) -> DressedState:
        """Continue ``target`` from zero electric field (diamagnetism on) to the actual fields.

        With exact hydrogenic degeneracies the Stark field alone mixes l = n-2
        and l = n-1 elliptical levels equally, so the starting point keeps the
        diamagnetic splitting and switches it off at the end if requested.
        """
        m = target.m
        basis = self.basis(m)
        row = basis.index(target) if target in basis.states else None
        if row is None:
            raise AmbiguousLabel(f"{target} is not contained in the truncated basis")
        b = self.fields.b
        path: list[tuple[FieldConfig, float]] = []
        n_e = max(1, int(np.ceil(self.fields.e_dc / e_step)))
        for e in np.linspace(0.0, self.fields.e_dc, n_e + 1):
            path.append((FieldConfig(float(e), b, True), 1.0))
        if not self.fields.include_diamagnetic and b > 0:
            for scale in np.linspace(1.0, 0.0, dia_steps + 1)[1:]:
                path.append((FieldConfig(self.fields.e_dc, b, True), float(scale)))

        energies, vectors = diagonalize_block(self.hamiltonian(m, *path[0]))
        start = identify_dressed_state(BlockEigensystem(basis, energies, vectors), target)
        current = start.composition
        for step_fields, scale in path[1:]:
            energies, vectors = diagonalize_block(self.hamiltonian(m, step_fields, scale))
            overlaps = np.abs(vectors.conj().T @ current) ** 2
            k = int(np.argmax(overlaps))
            if overlaps[k] <= 0.5:
                raise AmbiguousLabel(
                    f"lost continuity of {target.label} at E={step_fields.e_dc:.3f} V/cm "
                    f"(overlap {overlaps[k]:.3f}); the path crosses a degeneracy"
                )
            current = vectors[:, k]

        blk = self.block(m)
        overlaps = np.abs(blk.vectors.conj().T @ current) ** 2
        k = int(np.argmax(overlaps))
        return DressedState(
            label=target.label,
            energy=float(blk.energies[k]),
            composition=blk.vectors[:, k].copy(),
            dominant_overlap=float(np.abs(blk.vectors[row, k]) ** 2),
            m=m,
            index=k,
            parent=target,
        )

    def dipole_set(self, ms: Iterable[int]) -> DressedDipoleSet:
        ms = sorted(set(ms))
        mats = {}
        for m in ms:
            for q in (-1, 0, 1):
                if m + q in ms:
                    mats[(m + q, m)] = self.dipole(m + q, m)
        return DressedDipoleSet(mats)

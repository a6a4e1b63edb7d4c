"""Two-atom product basis, dipole-dipole coupling and the pair Hamiltonian."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .atom import FieldConfig, OneBodySystem
from .constants import CONSTANTS
from .species import AtomWorkspace, SpinSpecies, default_workspace

SQRT2 = math.sqrt(2.0)


class EmptyComplement(ValueError):
    """The selection cut left no intermediate pair states."""


# --------------------------------------------------------------------------- geometry


@dataclass(frozen=True)
class PairGeometry:
    distance: float
    """Micrometres."""
    theta: float = math.pi / 2
    phi: float = 0.0

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError(f"distance must be positive, got {self.distance}")
        theta = math.remainder(self.theta, 2 * math.pi)
        phi = self.phi
        if theta < 0:
            theta, phi = -theta, phi + math.pi
        phi = phi % (2 * math.pi)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", 0.0 if math.isclose(phi, 2 * math.pi) else phi)

    @classmethod
    def from_vector(cls, r) -> "PairGeometry":
        x, y, z = (float(c) for c in r)
        dist = math.sqrt(x * x + y * y + z * z)
        if dist == 0:
            raise ValueError("coincident atoms")
        return cls(dist, math.acos(max(-1.0, min(1.0, z / dist))), math.atan2(y, x) % (2 * math.pi))


@dataclass(frozen=True)
class AngularCoupling:
    """v[q'+1, q+1] in Hz per (e a0)^2: V = sum v_{q'q} d_{q'} (x) d_q."""

    v: np.ndarray

    def __getitem__(self, qq: tuple[int, int]) -> complex:
        return self.v[qq[0] + 1, qq[1] + 1]

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.v.imag == 0))


def angular_factors(geometry: PairGeometry, scale: float = 1.0) -> AngularCoupling:
    c, s = math.cos(geometry.theta), math.sin(geometry.theta)
    pre = scale * CONSTANTS.dd_prefactor / geometry.distance**3
    e1 = complex(math.cos(geometry.phi), -math.sin(geometry.phi))  # e^{-i phi}
    if geometry.phi == 0:
        e1 = 1.0
    v = np.zeros((3, 3), dtype=complex)
    v[1, 1] = 1 - 3 * c * c
    v[2, 0] = v[0, 2] = 0.5 * (1 - 3 * c * c)
    v[1, 2] = v[2, 1] = 3 / SQRT2 * s * c * e1
    v[1, 0] = v[0, 1] = -3 / SQRT2 * s * c * np.conj(e1)
    v[2, 2] = -1.5 * s * s * e1 * e1
    v[0, 0] = -1.5 * s * s * np.conj(e1) ** 2
    v *= pre
    if geometry.phi == 0:
        v = v.real.astype(complex)
    return AngularCoupling(v)


# --------------------------------------------------------------------------- one-atom level tables


@dataclass
class LevelTable:
    """Dressed levels available to one atom of the pair, over a window of m blocks."""

    species: SpinSpecies
    system: OneBodySystem
    m: np.ndarray
    k: np.ndarray
    """Index of each level inside its sorted m block."""
    energy: np.ndarray
    n: np.ndarray
    l: np.ndarray
    """Dominant bare quantum numbers, for metadata only."""
    dipoles: tuple[np.ndarray, np.ndarray, np.ndarray]
    """<i|d_q|j> over the table, q = -1, 0, +1."""
    up: int
    down: int
    blocks: tuple[list, list, list] = ()
    """Per q, the nonzero (bra slice, ket slice, matrix) pieces of ``dipoles``."""

    def __len__(self) -> int:
        return len(self.m)

    @classmethod
    def build(cls, species: SpinSpecies, system: OneBodySystem, m_window: int = 1) -> "LevelTable":
        up, down = system.dressed(species.up), system.dressed(species.down)
        lo = min(up.m, down.m) - m_window
        hi = max(up.m, down.m) + m_window
        ms = [m for m in range(lo, hi + 1) if system.has_m(m)]
        offsets, m_arr, k_arr, e_arr, n_arr, l_arr = {}, [], [], [], [], []
        for m in ms:
            blk = system.block(m)
            offsets[m] = len(m_arr)
            dom = np.argmax(np.abs(blk.vectors) ** 2, axis=0)
            for k, e in enumerate(blk.energies):
                s = blk.basis.states[dom[k]]
                m_arr.append(m)
                k_arr.append(k)
                e_arr.append(e)
                n_arr.append(s.n)
                l_arr.append(s.l)
        size = len(m_arr)
        dip = [np.zeros((size, size)) for _ in range(3)]
        pieces: tuple[list, list, list] = ([], [], [])
        for m_ket in ms:
            for q in (-1, 0, 1):
                m_bra = m_ket + q
                if m_bra not in offsets:
                    continue
                block = system.dipole(m_bra, m_ket)
                if np.iscomplexobj(block):
                    block = block.real
                a, b = offsets[m_bra], offsets[m_ket]
                bra_sl, ket_sl = slice(a, a + block.shape[0]), slice(b, b + block.shape[1])
                dip[q + 1][bra_sl, ket_sl] = block
                pieces[q + 1].append((bra_sl, ket_sl, np.ascontiguousarray(block)))
        return cls(
            species=species,
            system=system,
            m=np.array(m_arr),
            k=np.array(k_arr),
            energy=np.array(e_arr),
            n=np.array(n_arr),
            l=np.array(l_arr),
            dipoles=tuple(dip),
            up=offsets[up.m] + up.index,
            down=offsets[down.m] + down.index,
            blocks=pieces,
        )


# --------------------------------------------------------------------------- basis


@dataclass(frozen=True)
class PairState:
    i1: int
    i2: int
    """Indices into the two atoms' level tables."""
    total_m: int
    energy: float
    """Hz, sum of dressed one-body energies."""


@dataclass(frozen=True)
class PairSelection:
    """Predicate defining the complement Q of the spin subspace.

    Energies are compared with the nearest spin-pair energy, which keeps
    intermediate states close to every one of the four reference levels.
    """

    energy_cut: float = 100e9
    """Hz. At 25 GHz the diagonal shifts U are still off by ~15%; 100 GHz agrees with 200 GHz to 0.1%."""
    n_window: int = 5
    m_window_total: int = 2
    m_window_atom: int = 3


SPIN_ORDER = ("uu", "ud", "du", "dd")


@dataclass
class PairBasis:
    atom1: LevelTable
    atom2: LevelTable
    i1: np.ndarray
    i2: np.ndarray
    """Level indices of all basis states; the first four form P in the order uu, ud, du, dd."""
    energy: np.ndarray
    selection: PairSelection
    fields: FieldConfig

    n_p = 4

    @property
    def dim(self) -> int:
        return len(self.i1)

    @property
    def n_q(self) -> int:
        return self.dim - self.n_p

    @property
    def total_m(self) -> np.ndarray:
        return self.atom1.m[self.i1] + self.atom2.m[self.i2]

    def state(self, idx: int) -> PairState:
        return PairState(int(self.i1[idx]), int(self.i2[idx]), int(self.total_m[idx]), float(self.energy[idx]))

    @property
    def p_states(self) -> list[PairState]:
        return [self.state(i) for i in range(self.n_p)]

    @property
    def q_states(self) -> list[PairState]:
        return [self.state(i) for i in range(self.n_p, self.dim)]

    @property
    def p_energies(self) -> np.ndarray:
        return self.energy[: self.n_p]

    def describe(self, idx: int) -> str:
        a, b = self.i1[idx], self.i2[idx]
        t1, t2 = self.atom1, self.atom2
        return f"|n={t1.n[a]},l={t1.l[a]},m={t1.m[a]}; n={t2.n[b]},l={t2.l[b]},m={t2.m[b]}>"


def select_pair_basis(
    species: tuple[SpinSpecies, SpinSpecies],
    fields: FieldConfig,
    selection: PairSelection = PairSelection(),
    workspace: AtomWorkspace | None = None,
) -> PairBasis:
    ws = workspace or default_workspace()
    if ws.n_window != selection.n_window:
        ws = AtomWorkspace(selection.n_window, ws.defects, ws.radial, ws.label_mode)
    sp1, sp2 = species
    t1 = LevelTable.build(sp1, ws.system(sp1, fields), selection.m_window_atom)
    t2 = t1 if sp2 == sp1 else LevelTable.build(sp2, ws.system(sp2, fields), selection.m_window_atom)

    p1 = [t1.up, t1.up, t1.down, t1.down]
    p2 = [t2.up, t2.down, t2.up, t2.down]
    e_p = t1.energy[p1] + t2.energy[p2]
    m_p = t1.m[p1] + t2.m[p2]

    grid_e = t1.energy[:, None] + t2.energy[None, :]
    grid_m = t1.m[:, None] + t2.m[None, :]
    dist = np.min(np.abs(grid_e[..., None] - e_p[None, None, :]), axis=-1)
    mask = (dist <= selection.energy_cut) & (grid_m >= m_p.min() - selection.m_window_total)
    mask &= grid_m <= m_p.max() + selection.m_window_total
    mask[p1, p2] = False
    q1, q2 = np.nonzero(mask)
    if len(q1) == 0:
        raise EmptyComplement(
            f"no intermediate pair states within {selection.energy_cut:g} Hz and total-m window "
            f"+-{selection.m_window_total}; widen the cuts"
        )
    e_q = grid_e[q1, q2]
    order = np.lexsort((q2, q1, e_q))
    i1 = np.concatenate([p1, q1[order]])
    i2 = np.concatenate([p2, q2[order]])
    return PairBasis(t1, t2, i1, i2, np.concatenate([e_p, e_q[order]]), selection, fields)


# --------------------------------------------------------------------------- interaction


def pair_interaction_element(basis: PairBasis, bra: int, ket: int, v: AngularCoupling) -> complex:
    """<bra|V|ket> for basis indices ``bra`` and ``ket``."""
    a1, a2 = basis.i1[bra], basis.i2[bra]
    b1, b2 = basis.i1[ket], basis.i2[ket]
    q1 = int(basis.atom1.m[a1] - basis.atom1.m[b1])
    q2 = int(basis.atom2.m[a2] - basis.atom2.m[b2])
    if abs(q1) > 1 or abs(q2) > 1:
        return 0.0
    return v[q1, q2] * basis.atom1.dipoles[q1 + 1][a1, b1] * basis.atom2.dipoles[q2 + 1][a2, b2]


@dataclass
class PairHamiltonian:
    """H = diag(E) + V over P and Q, applied without materialising V.

    Energies are stored relative to ``offset`` (the mean spin-pair energy) so
    that all arithmetic happens on the GHz scale.
    """

    basis: PairBasis
    coupling: AngularCoupling
    offset: float = field(init=False)
    diag0: np.ndarray = field(init=False)

    def __post_init__(self):
        self.offset = float(np.mean(self.basis.p_energies))
        self.diag0 = self.basis.energy - self.offset
        t1, t2 = self.basis.atom1, self.basis.atom2
        self._grid = np.full((len(t1), len(t2)), -1, dtype=np.int64)
        self._grid[self.basis.i1, self.basis.i2] = np.arange(self.basis.dim)
        self._terms = [
            (self.coupling[q1, q2], t1.dipoles[q1 + 1], t2.dipoles[q2 + 1])
            for q1 in (-1, 0, 1)
            for q2 in (-1, 0, 1)
            if self.coupling[q1, q2] != 0
        ]

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def is_real(self) -> bool:
        return self.coupling.is_real

    @property
    def dtype(self):
        return np.float64 if self.is_real else np.complex128

    def apply_v(self, x: np.ndarray) -> np.ndarray:
        """V @ x for x of shape (dim,) or (dim, k)."""
        vec = x.ndim == 1
        x2 = x[:, None] if vec else x
        t1, t2 = self.basis.atom1, self.basis.atom2
        dtype = np.result_type(x2.dtype, self.dtype)
        v = self.coupling.v if dtype == np.complex128 else self.coupling.v.real
        k = x2.shape[1]
        grid = np.zeros((k, len(t1), len(t2)), dtype=dtype)
        grid[:, self.basis.i1, self.basis.i2] = x2.T
        # Atom 2 first: half[q2] = grid @ d2_q2^T, then atom 1 acts on the sum over q2.
        half = []
        for q2 in range(3):
            acc = np.zeros_like(grid)
            for bra, ket, blk in t2.blocks[q2]:
                acc[:, :, bra] += grid[:, :, ket] @ blk.T
            half.append(acc)
        out = np.zeros_like(grid)
        for q1 in range(3):
            if not np.any(v[q1]):
                continue
            mix = sum(v[q1, q2] * half[q2] for q2 in range(3) if v[q1, q2] != 0)
            for bra, ket, blk in t1.blocks[q1]:
                out[:, bra, :] += np.matmul(blk, mix[:, ket, :])
        y = out[:, self.basis.i1, self.basis.i2].T
        return y[:, 0] if vec else y

    def matvec(self, x: np.ndarray) -> np.ndarray:
        shifted = self.diag0[:, None] * x if x.ndim == 2 else self.diag0 * x
        return shifted + self.apply_v(x)

    def v_columns(self, cols) -> np.ndarray:
        """V[:, cols] as a dense (dim, len(cols)) array."""
        e = np.zeros((self.dim, len(cols)))
        e[list(cols), range(len(cols))] = 1.0
        return self.apply_v(e)

    def v_pp(self) -> np.ndarray:
        return self.v_columns(range(4))[:4]

    def v_qp(self) -> np.ndarray:
        return self.v_columns(range(4))[4:]

    def dense(self, relative: bool = True, chunk: int = 64) -> np.ndarray:
        """Full matrix; for small bases and tests."""
        h = np.empty((self.dim, self.dim), dtype=self.dtype)
        for start in range(0, self.dim, chunk):
            cols = range(start, min(self.dim, start + chunk))
            h[:, start : start + len(cols)] = self.v_columns(cols)
        h[np.diag_indices(self.dim)] += self.diag0 if relative else self.basis.energy
        return h

    def to_sparse(self, drop_tol: float = 1.0) -> sp.csr_array:
        """Assembled V plus diagonal (absolute energies), dropping |V_ij| < drop_tol Hz.

        Built block by block over pairs of (m1, m2) cells so only the
        dipole-allowed stencil is visited.
        """
        b = self.basis
        t1, t2 = b.atom1, b.atom2
        m1, m2 = t1.m[b.i1], t2.m[b.i2]
        cells: dict[tuple[int, int], np.ndarray] = {}
        for idx, key in enumerate(zip(m1.tolist(), m2.tolist())):
            cells.setdefault(key, []).append(idx)
        cells = {k: np.array(v) for k, v in cells.items()}
        rows, cols, vals = [], [], []
        for (ma, mb), ket in cells.items():
            for q1 in (-1, 0, 1):
                for q2 in (-1, 0, 1):
                    bra = cells.get((ma + q1, mb + q2))
                    coeff = self.coupling[q1, q2]
                    if bra is None or coeff == 0:
                        continue
                    d1 = t1.dipoles[q1 + 1][np.ix_(b.i1[bra], b.i1[ket])]
                    d2 = t2.dipoles[q2 + 1][np.ix_(b.i2[bra], b.i2[ket])]
                    block = coeff * d1 * d2
                    if self.is_real:
                        block = block.real
                    r, c = np.nonzero(np.abs(block) >= drop_tol)
                    rows.append(bra[r])
                    cols.append(ket[c])
                    vals.append(block[r, c])
        diag = np.arange(self.dim)
        rows.append(diag)
        cols.append(diag)
        vals.append(b.energy.astype(self.dtype))
        mat = sp.coo_array(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.dim, self.dim),
        )
        return mat.tocsr()


def assemble_pair_hamiltonian(
    basis: PairBasis,
    geometry: PairGeometry,
    scale: float = 1.0,
) -> PairHamiltonian:
    """Pair Hamiltonian operator; ``scale`` multiplies V (0 gives the bare diagonal)."""
    return PairHamiltonian(basis, angular_factors(geometry, scale))


def dump_matrix(h: PairHamiltonian, path: str | Path, drop_tol: float = 1.0) -> Path:
    """Coordinate text dump ``row col real imag`` with the basis listed in the header."""
    path = Path(path)
    mat = h.to_sparse(drop_tol).tocoo()
    lines = ["# rydspin pair matrix v1", f"# dim {h.dim}; rows 0-3 are uu ud du dd; energies in Hz"]
    for i in range(h.dim):
        lines.append(f"# basis {i} {h.basis.describe(i)} E={h.basis.energy[i]:.6f}")
    order = np.lexsort((mat.col, mat.row))
    for r, c, v in zip(mat.row[order], mat.col[order], mat.data[order]):
        v = complex(v)
        lines.append(f"{r} {c} {v.real:.12e} {v.imag:.12e}")
    path.write_text("\n".join(lines) + "\n")
    return path

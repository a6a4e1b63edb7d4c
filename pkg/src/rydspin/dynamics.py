"""Exact time evolution of N-spin models and observables along trajectories.

Basis convention: index bit j describes site j (site 0 least significant);
a set bit means spin down. Hamiltonians are in Hz and times in seconds.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .model import N_CAP, SpinModel, assemble_many_body_hamiltonian

NORM_TOL = 1e-9


def product_state(spins: str) -> np.ndarray:
    """Basis vector for a string such as ``"udu"`` (character j is site j)."""
    idx = 0
    for j, s in enumerate(spins):
        if s not in "ud":
            raise ValueError(f"spin characters are 'u' or 'd', got {s!r}")
        if s == "d":
            idx |= 1 << j
    psi = np.zeros(2 ** len(spins), dtype=complex)
    psi[idx] = 1.0
    return psi


def rotating_frame(model: SpinModel) -> float:
    """Common reference frequency: mean one-body splitting over sites."""
    return float(np.mean([f.one_body for f in model.site_fields]))


def model_hamiltonian(model: SpinModel, rotating: bool = True, cap: int = N_CAP) -> np.ndarray:
    return assemble_many_body_hamiltonian(model, cap=cap, frame=rotating_frame(model) if rotating else 0.0)


class Propagator:
    """Eigendecomposition of a Hermitian H, reused across time grids."""

    def __init__(self, h: np.ndarray, herm_tol: float = 1e-9):
        h = np.asarray(h)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError(f"Hamiltonian must be square, got shape {h.shape}")
        scale = max(1.0, float(np.abs(h).max(initial=0.0)))
        if np.abs(h - h.conj().T).max(initial=0.0) > herm_tol * scale:
            raise ValueError("Hamiltonian is not Hermitian")
        self.h = h
        self.energies, self.vectors = np.linalg.eigh(h)

    @property
    def dim(self) -> int:
        return self.h.shape[0]

    def evolve(self, psi0: np.ndarray, times) -> np.ndarray:
        """States at each time, shape (len(times), dim)."""
        psi0 = np.asarray(psi0, dtype=complex)
        if psi0.shape != (self.dim,):
            raise ValueError(f"state of dimension {psi0.shape} does not match H of dimension {self.dim}")
        norm = np.linalg.norm(psi0)
        if abs(norm - 1) > NORM_TOL:
            raise ValueError(f"initial state has norm {norm}")
        c = self.vectors.conj().T @ psi0
        t = np.atleast_1d(np.asarray(times, dtype=float))
        phases = np.exp(-2j * np.pi * np.outer(t, self.energies))
        states = (phases * c) @ self.vectors.T
        drift = np.abs(np.linalg.norm(states, axis=1) - 1).max(initial=0.0)
        if drift > NORM_TOL:
            raise RuntimeError(f"norm drift {drift:.2e} exceeds {NORM_TOL}")
        return states


def evolve(psi0: np.ndarray, h: np.ndarray, times) -> np.ndarray:
    return Propagator(h).evolve(psi0, times)


def energy(states: np.ndarray, h: np.ndarray) -> np.ndarray:
    states = np.atleast_2d(states)
    return np.real(np.einsum("ti,ij,tj->t", states.conj(), h, states))


@dataclass
class ObservableSeries:
    times: np.ndarray
    sz: np.ndarray
    """Shape (n_times, n_sites)."""
    correlators: dict[tuple[int, int], np.ndarray]

    @property
    def n_sites(self) -> int:
        return self.sz.shape[1]

    @property
    def magnetization(self) -> np.ndarray:
        return self.sz.sum(axis=1)


def _sz_diag(n: int, j: int) -> np.ndarray:
    return 0.5 - ((np.arange(2**n) >> j) & 1)


def measure(states: np.ndarray, times=None, pairs=None) -> ObservableSeries:
    """<S_z^j> for every site and <S_z^i S_z^j> for ``pairs`` (default: all)."""
    states = np.atleast_2d(states)
    n = int(round(np.log2(states.shape[1])))
    if 2**n != states.shape[1]:
        raise ValueError("state dimension is not a power of two")
    prob = np.abs(states) ** 2
    prob /= prob.sum(axis=1, keepdims=True)
    diags = np.array([_sz_diag(n, j) for j in range(n)])
    sz = np.clip(prob @ diags.T, -0.5, 0.5)
    if pairs is None:
        pairs = list(itertools.combinations(range(n), 2))
    corr = {(i, j): prob @ (diags[i] * diags[j]) for i, j in pairs}
    t = np.arange(len(states), dtype=float) if times is None else np.asarray(times, dtype=float)
    return ObservableSeries(t, sz, corr)


def boson_view(series: ObservableSeries) -> np.ndarray:
    """Hardcore-boson occupations n_j = 1/2 - <S_z^j>."""
    return 0.5 - series.sz


def _header(fh, extra: str = "") -> None:
    fh.write(f"# rydspin v{__version__.rsplit('.', 1)[0]}\n")
    if extra:
        fh.write(f"# {extra}\n")


def write_timeseries_csv(series: ObservableSeries, path: str | Path, comment: str = "") -> Path:
    path = Path(path)
    occ = boson_view(series)
    with path.open("w", newline="") as fh:
        _header(fh, comment)
        w = csv.writer(fh)
        w.writerow(["t_s", "site", "Sz", "n_boson"])
        for ti, t in enumerate(series.times):
            for j in range(series.n_sites):
                w.writerow([repr(float(t)), j, repr(float(series.sz[ti, j])), repr(float(occ[ti, j]))])
    return path


def write_correlator_csv(series: ObservableSeries, path: str | Path, comment: str = "") -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        _header(fh, comment)
        w = csv.writer(fh)
        w.writerow(["t_s", "site_i", "site_j", "SzSz"])
        for ti, t in enumerate(series.times):
            for (i, j), vals in series.correlators.items():
                w.writerow([repr(float(t)), i, j, repr(float(vals[ti]))])
    return path

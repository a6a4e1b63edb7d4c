"""Effective spin Hamiltonian of a pair: Schrieffer-Wolff reduction, coefficients and kappa.

The four spin pair states are ordered uu, ud, du, dd, where the first
letter refers to atom j and the second to atom k.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .pair import PairHamiltonian

logger = logging.getLogger(__name__)

SW_GUARD = 50e3
"""Hz; smallest energy denominator accepted by the perturbative backend."""


class NearResonantIntermediate(ArithmeticError):
    def __init__(self, q: int, gap: float, description: str = ""):
        self.q, self.gap = q, gap
        super().__init__(
            f"intermediate state {q} {description} lies {gap:.4g} Hz from a spin pair state "
            f"(guard {SW_GUARD:g} Hz); use the exact backend"
        )


class DegenerateSelection(RuntimeError):
    pass


class SingularOverlap(np.linalg.LinAlgError):
    pass


# --------------------------------------------------------------------------- problem adapters


class MatrixProblem:
    """Adapter giving a dense Hermitian matrix the interface of a pair Hamiltonian.

    The first ``n_p`` basis states span P; the diagonal of ``matrix`` is
    taken as the unperturbed energies and everything else as V.
    """

    def __init__(self, matrix, n_p: int = 4):
        self.matrix = np.asarray(matrix)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("square matrix required")
        if not np.allclose(self.matrix, self.matrix.conj().T, rtol=0, atol=1e-10 * max(1.0, np.abs(self.matrix).max())):
            raise ValueError("matrix is not Hermitian")
        self.n_p = n_p
        energies = np.real(np.diag(self.matrix)).copy()
        self.offset = float(np.mean(energies[:n_p]))
        self.diag0 = energies - self.offset
        self._v = self.matrix - np.diag(np.diag(self.matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def dtype(self):
        return self.matrix.dtype

    def apply_v(self, x):
        return self._v @ x

    def matvec(self, x):
        return (self.diag0[:, None] if x.ndim == 2 else self.diag0) * x + self._v @ x

    def v_pp(self):
        return self._v[: self.n_p, : self.n_p]

    def v_qp(self):
        return self._v[self.n_p :, : self.n_p]

    def dense(self):
        return self._v + np.diag(self.diag0)

    def describe(self, idx: int) -> str:
        return f"#{idx}"


def _n_p(h) -> int:
    return getattr(h, "n_p", None) or h.basis.n_p


def _describe(h, idx: int) -> str:
    if hasattr(h, "basis"):
        return h.basis.describe(idx)
    return h.describe(idx)


# --------------------------------------------------------------------------- results


@dataclass
class EffectivePair:
    """Effective Hamiltonian on P, stored relative to ``offset`` (Hz)."""

    h_rel: np.ndarray
    offset: float
    method: str
    e_p: np.ndarray
    """Unperturbed spin-pair energies, relative to ``offset``."""
    first_order: np.ndarray
    """V restricted to P."""

    @property
    def h_eff(self) -> np.ndarray:
        return self.h_rel + self.offset * np.eye(len(self.h_rel))

    @property
    def v_eff(self) -> np.ndarray:
        """Interaction part h_eff - diag(E_p)."""
        return self.h_rel - np.diag(self.e_p)

    @property
    def higher_order(self) -> np.ndarray:
        """Contribution beyond first order."""
        return self.v_eff - self.first_order

    def restricted(self, order: str) -> "EffectivePair":
        """Keep only the ``first`` or ``higher`` order part of the interaction."""
        part = {"first": self.first_order, "higher": self.higher_order, "all": self.v_eff}[order]
        return EffectivePair(np.diag(self.e_p) + part, self.offset, f"{self.method}:{order}", self.e_p, self.first_order)


@dataclass
class KappaReport:
    kappa: float
    overlaps: np.ndarray
    """P weights of the selected eigenstates, descending."""
    energies: np.ndarray
    """Hz, absolute, in the same order."""
    remainder: float
    """Upper bound on the P weight of any eigenstate not selected."""
    offender: str = ""
    """Dominant basis state of the eigenstate that sets kappa."""


@dataclass
class SpinEigenstates:
    energies: np.ndarray
    """Relative to the problem offset."""
    vectors: np.ndarray
    weights: np.ndarray
    remainder: float
    iterations: int = 0


# --------------------------------------------------------------------------- eigen-solver


def _dense_spin_eigenstates(h, n_p: int) -> SpinEigenstates:
    mat = h.dense()
    energies, vectors = np.linalg.eigh(mat)
    weights = np.sum(np.abs(vectors[:n_p]) ** 2, axis=0)
    order = np.lexsort((energies, -weights))
    sel, rest = order[:n_p], order[n_p:]
    remainder = float(weights[rest].max()) if len(rest) else 0.0
    return SpinEigenstates(energies[sel], vectors[:, sel], weights[sel], remainder)


def spin_eigenstates(
    h,
    tol: float = 1e-2,
    max_iter: int = 200,
    max_subspace: int = 160,
    dense_below: int = 400,
) -> SpinEigenstates:
    """Eigenstates of H with the largest weight on P.

    Block Davidson started from the P basis vectors with a diagonal
    preconditioner; Q states nearly degenerate with P enter the search space
    through the corrections. ``tol`` is the residual norm in Hz. The
    unconverged P weight (``remainder``, from the trace sum rule) bounds the
    weight of every eigenstate not returned. The achievable residual is
    limited by round-off on the largest diagonal energy, so the tolerance is
    raised to that floor when needed.
    """
    cached = getattr(h, "_spin_eigenstates", None)
    if cached is not None:
        return cached
    n_p = _n_p(h)
    if h.dim <= dense_below:
        result = _dense_spin_eigenstates(h, n_p)
    else:
        result = _davidson(h, n_p, tol, max_iter, max_subspace)
    try:
        h._spin_eigenstates = result
    except AttributeError:
        pass
    return result


def _davidson(h, n_p: int, tol: float, max_iter: int, max_subspace: int) -> SpinEigenstates:
    dim = h.dim
    dtype = np.result_type(h.dtype, np.float64)
    diag = h.diag0
    scale = max(1.0, float(np.max(np.abs(diag))))
    floor = 1e-12 * scale
    tol = max(tol, 1e-13 * scale)
    x = np.zeros((dim, n_p), dtype=dtype)
    x[np.arange(n_p), np.arange(n_p)] = 1.0
    w = h.matvec(x)
    best, since_best = np.inf, 0
    for it in range(1, max_iter + 1):
        # Generalised Rayleigh-Ritz absorbs the slow loss of orthogonality in x,
        # which would otherwise cap the residual at ~1e-12 of the spectral width.
        hs = x.conj().T @ w
        hs = 0.5 * (hs + hs.conj().T)
        ss = x.conj().T @ x
        theta, y = sla.eigh(hs, 0.5 * (ss + ss.conj().T))
        ritz = x @ y
        weights = np.sum(np.abs(ritz[:n_p]) ** 2, axis=0)
        sel = np.lexsort((theta, -weights))[:n_p]
        resid = w @ y[:, sel] - ritz[:, sel] * theta[sel]
        norms = np.linalg.norm(resid, axis=0)
        if norms.max() < best:
            best, since_best = norms.max(), 0
        else:
            since_best += 1
        stalled = since_best >= 8 and norms.max() <= 100 * tol
        if stalled:
            logger.debug("Davidson stalled at residual %.3g Hz; accepting", norms.max())
        if np.all(norms <= tol) or stalled:
            vecs = ritz[:, sel]
            remainder = max(0.0, n_p - float(np.sum(weights[sel])))
            return SpinEigenstates(theta[sel], vecs, weights[sel], remainder, it)
        active = norms > tol
        denom = theta[sel][active][None, :] - diag[:, None]
        denom = np.where(np.abs(denom) < floor, floor, denom)
        t = resid[:, active] / denom
        if x.shape[1] + t.shape[1] > max_subspace:
            keep = np.lexsort((theta, -weights))[: max(2 * n_p, 16)]
            x = ritz[:, keep]
            x, _ = np.linalg.qr(x)
            w = h.matvec(x)
        t /= np.linalg.norm(t, axis=0)
        for _ in range(2):
            t -= x @ (x.conj().T @ t)
        t, r = np.linalg.qr(t)
        good = np.abs(np.diag(r)) > 1e-8
        if not np.any(good):
            # Stagnation: the subspace already contains the corrections.
            logger.debug("Davidson stagnated at iteration %d, residuals %s", it, norms)
            break
        t = t[:, good]
        x = np.hstack([x, t])
        w = np.hstack([w, h.matvec(t)])
    if h.dim <= 6000:
        logger.warning("Davidson did not converge (residuals %s Hz); falling back to dense eigh", norms)
        return _dense_spin_eigenstates(h, n_p)
    raise RuntimeError(f"spin eigenstates did not converge: residuals {norms} Hz")


# --------------------------------------------------------------------------- backends


def sw_second_order(h, guard: float = SW_GUARD) -> EffectivePair:
    """Second-order Schrieffer-Wolff effective Hamiltonian on P."""
    n_p = _n_p(h)
    e = h.diag0
    e_p, e_q = e[:n_p], e[n_p:]
    v_pp = np.asarray(h.v_pp())
    v_qp = np.asarray(h.v_qp())
    gaps = e_p[None, :] - e_q[:, None]
    coupled = np.abs(v_qp) > 0
    if np.any(coupled):
        close = np.where(coupled, np.abs(gaps), np.inf)
        q, p = np.unravel_index(np.argmin(close), close.shape)
        if close[q, p] < guard:
            raise NearResonantIntermediate(int(q + n_p), float(close[q, p]), _describe(h, int(q + n_p)))
    inv = np.where(coupled, 1.0 / np.where(gaps == 0, np.inf, gaps), 0.0)
    a = v_qp * inv  # V_qp / (E_p - E_q)
    second = 0.5 * (v_qp.conj().T @ a + a.conj().T @ v_qp)
    h_rel = np.diag(e_p) + v_pp + second
    h_rel = 0.5 * (h_rel + h_rel.conj().T)
    return EffectivePair(h_rel, h.offset, "second_order", e_p.copy(), v_pp.copy())


def sw_exact_direct_rotation(h, tie_tol: float = 1e-8, **solver) -> EffectivePair:
    """Exact block diagonalisation by the direct rotation closest to identity.

    With Psi the selected eigenvectors and A = Psi restricted to P, the
    rotation maps Psi onto the unitary polar factor U of A, so
    h_eff = U diag(lambda) U^dagger.
    """
    n_p = _n_p(h)
    eig = spin_eigenstates(h, **solver)
    if eig.remainder > eig.weights.min() - tie_tol:
        raise DegenerateSelection(
            f"P weight {eig.weights.min():.10f} of the last selected eigenstate is not separated "
            f"from the unselected remainder {eig.remainder:.10f}"
        )
    a = eig.vectors[:n_p]
    w, s, zh = np.linalg.svd(a)
    if s.min() < 1e-8:
        raise SingularOverlap(f"overlap of selected eigenstates with P is rank deficient (sigma_min={s.min():.3g})")
    u = w @ zh
    h_rel = (u * eig.energies) @ u.conj().T
    h_rel = 0.5 * (h_rel + h_rel.conj().T)
    e_p = h.diag0[:n_p].copy()
    return EffectivePair(h_rel, h.offset, "exact", e_p, np.asarray(h.v_pp()).copy())


def compute_kappa(h, **solver) -> KappaReport:
    """kappa = n_p-th largest P weight among the eigenstates of H."""
    n_p = _n_p(h)
    eig = spin_eigenstates(h, **solver)
    order = np.lexsort((eig.energies, -eig.weights))
    weights = eig.weights[order]
    kappa = float(min(1.0, weights[-1]))
    worst = eig.vectors[:, order[-1]]
    offender_idx = int(np.argmax(np.abs(worst[n_p:]) ** 2)) + n_p if len(worst) > n_p else int(np.argmax(np.abs(worst)))
    return KappaReport(
        kappa=kappa,
        overlaps=weights,
        energies=eig.energies[order] + h.offset,
        remainder=eig.remainder,
        offender=f"largest Q admixture {_describe(h, offender_idx)} ({abs(worst[offender_idx]) ** 2:.3g})",
    )


def effective_pair(h, method: str = "exact", **kw) -> EffectivePair:
    if method == "exact":
        return sw_exact_direct_rotation(h, **kw)
    if method in ("second_order", "second-order", "second", "2nd"):
        return sw_second_order(h, **kw)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------- coefficients

UU, UD, DU, DD = range(4)


@dataclass
class SpinCoefficients:
    """Coefficients of one pair (j, k) in Hz.

    ``c_pz`` multiplies S_j^+ S_k^z and ``c_zp`` multiplies S_j^z S_k^+;
    ``c_p_j`` and ``c_p_k`` are the single-raise contributions of this pair
    to C_+ of atoms j and k. Lowering terms are the Hermitian conjugates.
    """

    u: np.ndarray
    """U indexed [sigma_j][sigma_k] with 0 = up, 1 = down."""
    c_pm: complex
    c_pp: complex
    c_pz: complex
    c_zp: complex
    c_p_j: complex
    c_p_k: complex
    kappa: float = 1.0
    method: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def c_zz(self) -> float:
        u = self.u
        return float(u[0, 0] - u[0, 1] - u[1, 0] + u[1, 1])

    @property
    def shift_j(self) -> float:
        """Interaction contribution of the partner to C_z of atom j."""
        u = self.u
        return float(0.5 * (u[0, 0] + u[0, 1] - u[1, 0] - u[1, 1]))

    @property
    def shift_k(self) -> float:
        u = self.u
        return float(0.5 * (u[0, 0] + u[1, 0] - u[0, 1] - u[1, 1]))

    @property
    def constant(self) -> float:
        return float(0.25 * self.u.sum())

    def v_eff(self) -> np.ndarray:
        """Rebuild the 4x4 interaction matrix in the uu, ud, du, dd basis."""
        v = np.zeros((4, 4), dtype=complex)
        v[np.diag_indices(4)] = self.u.reshape(4)
        # S_j^+ raises atom j: |d sigma> -> |u sigma>.
        lower = {
            (UD, DU): self.c_pm,
            (UU, DD): self.c_pp,
            (UU, DU): self.c_pz * 0.5 + self.c_p_j,
            (UD, DD): -self.c_pz * 0.5 + self.c_p_j,
            (UU, UD): self.c_zp * 0.5 + self.c_p_k,
            (DU, DD): -self.c_zp * 0.5 + self.c_p_k,
        }
        for (a, b), val in lower.items():
            v[a, b] = val
            v[b, a] = np.conj(val)
        return v

    def as_row(self) -> dict:
        u = self.u
        row = {"U_uu": u[0, 0], "U_ud": u[0, 1], "U_du": u[1, 0], "U_dd": u[1, 1]}
        for name in ("c_pm", "c_pp", "c_pz", "c_zp", "c_p_j", "c_p_k"):
            val = complex(getattr(self, name))
            col = "C" + name[1:]
            row[f"{col}_re"] = val.real
            row[f"{col}_im"] = val.imag
        row["C_zz"] = self.c_zz
        row["kappa"] = self.kappa
        return row


def extract_pair_coefficients(eff: EffectivePair, kappa: float = 1.0) -> SpinCoefficients:
    """Read every coefficient off h_eff - diag(E_p); the map is a bijection."""
    v = eff.v_eff
    herm_err = np.abs(v - v.conj().T).max()
    if herm_err > 1e-6 * max(1.0, np.abs(v).max()):
        raise ValueError(f"effective Hamiltonian not Hermitian (deviation {herm_err:.3g} Hz)")
    u = np.real(np.diag(v)).reshape(2, 2).copy()
    a, b = v[UU, DU], v[UD, DD]
    c, d = v[UU, UD], v[DU, DD]
    return SpinCoefficients(
        u=u,
        c_pm=v[UD, DU],
        c_pp=v[UU, DD],
        c_pz=a - b,
        c_zp=c - d,
        c_p_j=0.5 * (a + b),
        c_p_k=0.5 * (c + d),
        kappa=kappa,
        method=eff.method,
    )


COEFFICIENT_COLUMNS = (
    "U_uu", "U_ud", "U_du", "U_dd",
    "C_pm_re", "C_pm_im", "C_pp_re", "C_pp_im",
    "C_pz_re", "C_pz_im", "C_zp_re", "C_zp_im",
    "C_p_j_re", "C_p_j_im", "C_p_k_re", "C_p_k_im",
    "C_zz", "kappa",
)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import basis, pair_h
from rydspin.atom import FieldConfig
from rydspin.constants import CONSTANTS
from rydspin.effective import compute_kappa, effective_pair, extract_pair_coefficients
from rydspin.pair import (
    EmptyComplement,
    PairGeometry,
    PairSelection,
    angular_factors,
    assemble_pair_hamiltonian,
    dump_matrix,
    pair_interaction_element,
    select_pair_basis,
)
from rydspin.species import SpinSpecies

SMALL = SpinSpecies("S", "CC", "20C-", "21C-")
SMALL_E = SpinSpecies("T", "CE", "26C+", "28E+")
SMALL_FIELDS = FieldConfig(2.0, 300.0)

angles = st.floats(0.0, math.pi)
azimuths = st.floats(0.0, 2 * math.pi, exclude_max=True)


def _small_basis(pair=(SMALL, SMALL), **sel):
    return select_pair_basis(pair, SMALL_FIELDS, PairSelection(**{"energy_cut": 60e9, **sel}))


# --------------------------------------------------------------------------- geometry


def test_geometry_validation_and_reduction():
    with pytest.raises(ValueError):
        PairGeometry(0.0)
    with pytest.raises(ValueError):
        PairGeometry(-1.0)
    g = PairGeometry(5.0, -0.3, 0.0)
    assert g.theta == pytest.approx(0.3) and g.phi == pytest.approx(math.pi)
    assert 0 <= PairGeometry(1.0, 1.0, 7.0).phi < 2 * math.pi


def test_geometry_from_vector():
    g = PairGeometry.from_vector((0.0, 3.0, 4.0))
    assert g.distance == pytest.approx(5.0)
    assert g.theta == pytest.approx(math.acos(0.8))
    assert g.phi == pytest.approx(math.pi / 2)


# --------------------------------------------------------------------------- angular factors


def test_angular_on_axis():
    v = angular_factors(PairGeometry(1.0, 0.0))
    assert v[0, 0] == pytest.approx(-2 * CONSTANTS.dd_prefactor)
    for q in (-1, 1):
        assert v[q, q] == 0 and v[0, q] == 0 and v[q, 0] == 0


def test_angular_magic_angle_zero():
    v = angular_factors(PairGeometry(7.0, math.acos(1 / math.sqrt(3))))
    assert abs(v[0, 0]) < 1e-15 * CONSTANTS.dd_prefactor


@given(angles, azimuths, st.floats(0.5, 50))
def test_angular_identity_and_distance(theta, phi, r):
    v = angular_factors(PairGeometry(r, theta, phi))
    assert v[0, 0] == 2 * v[1, -1] == 2 * v[-1, 1]
    far = angular_factors(PairGeometry(2 * r, theta, phi))
    assert np.allclose(far.v * 8, v.v, rtol=1e-15, atol=1e-300)


@given(angles, azimuths, st.floats(-3, 3))
def test_angular_phi_phases(theta, phi, delta):
    a = angular_factors(PairGeometry(3.0, theta, phi))
    b = angular_factors(PairGeometry(3.0, theta, phi + delta))
    for q1 in (-1, 0, 1):
        for q2 in (-1, 0, 1):
            s = q1 + q2
            assert b[q1, q2] == pytest.approx(a[q1, q2] * np.exp(-1j * s * delta), abs=1e-9 * abs(a.v).max())


@given(angles)
def test_angular_real_at_phi_zero(theta):
    assert angular_factors(PairGeometry(7.0, theta, 0.0)).is_real


# --------------------------------------------------------------------------- basis


def test_empty_complement():
    with pytest.raises(EmptyComplement):
        _small_basis(energy_cut=1.0, m_window_total=0)


def test_p_and_q_disjoint_and_selected():
    b = _small_basis()
    p = {(s.i1, s.i2) for s in b.p_states}
    q = [(s.i1, s.i2) for s in b.q_states]
    assert len(p) == 4 and not p & set(q) and len(set(q)) == len(q)
    e_p = b.p_energies
    m_p = b.total_m[:4]
    for s in b.q_states:
        assert np.min(np.abs(s.energy - e_p)) <= b.selection.energy_cut
        assert m_p.min() - 2 <= s.total_m <= m_p.max() + 2


def test_basis_ordering_deterministic():
    a, b = _small_basis(), _small_basis()
    assert np.array_equal(a.i1, b.i1) and np.array_equal(a.i2, b.i2)
    assert np.all(np.diff(a.energy[4:]) >= 0)


def test_pair_energy_is_sum():
    b = _small_basis()
    e = b.atom1.energy[b.i1] + b.atom2.energy[b.i2]
    assert np.allclose(b.energy, e, rtol=1e-10, atol=0)


def test_reference_complement_size():
    b = basis(("CC", "CE"), 6.0, 784.07)
    assert 5e3 <= b.n_q <= 5e4


# --------------------------------------------------------------------------- elements


def test_element_selection_rule_and_hermitian():
    b = _small_basis()
    v = angular_factors(PairGeometry(3.0, 1.0, 0.7))
    dm = np.abs(b.total_m[:, None] - b.total_m[None, :])
    far = np.argwhere(dm >= 3)
    assert len(far)
    i, j = far[0]
    assert pair_interaction_element(b, i, j, v) == 0
    rng = np.random.default_rng(3)
    for i, j in rng.integers(0, b.dim, size=(50, 2)):
        assert pair_interaction_element(b, i, j, v) == pytest.approx(np.conj(pair_interaction_element(b, j, i, v)))


def test_cc_exchange_element_order_10_mhz():
    h = pair_h(("CC", "CC"))
    x = pair_interaction_element(h.basis, 1, 2, h.coupling)
    assert 1e6 < abs(x) < 1e8


# --------------------------------------------------------------------------- assembled matrix


def test_zero_scale_is_diagonal():
    h = assemble_pair_hamiltonian(_small_basis(), PairGeometry(3.0), scale=0.0)
    m = h.to_sparse().toarray()
    assert np.count_nonzero(m - np.diag(np.diag(m))) == 0
    assert np.allclose(np.diag(m), h.basis.energy, rtol=1e-15)


def test_matrix_hermitian_and_diagonal():
    h = assemble_pair_hamiltonian(_small_basis((SMALL, SMALL_E)), PairGeometry(2.0, 0.8, 1.1))
    m = h.to_sparse(drop_tol=0.0).toarray()
    scale = np.abs(m - np.diag(np.diag(m))).max()
    assert np.abs(m - m.conj().T).max() <= 1e-10 * scale
    v_diag = np.array([pair_interaction_element(h.basis, i, i, h.coupling) for i in range(h.dim)])
    assert np.allclose(np.diag(m), h.basis.energy + v_diag, rtol=1e-14)


def test_operator_matches_sparse():
    h = assemble_pair_hamiltonian(_small_basis((SMALL, SMALL_E)), PairGeometry(2.0, 0.8, 1.1))
    x = np.random.default_rng(0).normal(size=(h.dim, 3))
    dense = h.to_sparse(drop_tol=0.0).toarray() - h.offset * np.eye(h.dim)
    assert np.allclose(h.matvec(x), dense @ x, rtol=1e-9, atol=1e-6)


def test_swapping_atoms_preserves_spectrum():
    g = PairGeometry(2.5, 1.1)
    a = assemble_pair_hamiltonian(_small_basis((SMALL, SMALL_E)), g).to_sparse(drop_tol=0.0).toarray()
    b = assemble_pair_hamiltonian(_small_basis((SMALL_E, SMALL)), g).to_sparse(drop_tol=0.0).toarray()
    ea, eb = np.linalg.eigvalsh(a), np.linalg.eigvalsh(b)
    assert np.max(np.abs(ea - eb)) <= 1e-9 * np.abs(ea).max()


def _stencil_bound(b):
    """Number of (bra, ket) pairs whose per-atom m differ by at most one."""
    m1, m2 = b.atom1.m[b.i1], b.atom2.m[b.i2]
    cells = {}
    for key in zip(m1.tolist(), m2.tolist()):
        cells[key] = cells.get(key, 0) + 1
    return sum(
        n * cells.get((a + q1, c + q2), 0) for (a, c), n in cells.items() for q1 in (-1, 0, 1) for q2 in (-1, 0, 1)
    )


def test_nnz_bounded_by_coupling_stencil():
    dims, fill = [], []
    for cut in (20e9, 60e9, 150e9):
        b = _small_basis(energy_cut=cut)
        nnz = assemble_pair_hamiltonian(b, PairGeometry(3.0, 1.0)).to_sparse().nnz
        assert nnz <= _stencil_bound(b) + b.dim
        dims.append(b.dim)
        fill.append(nnz / b.dim**2)
    assert dims[-1] > 2 * dims[0]
    assert fill[-1] < fill[0]


def test_distance_law_exact():
    b = _small_basis()
    a = assemble_pair_hamiltonian(b, PairGeometry(3.0, 0.9)).to_sparse(drop_tol=0).toarray()
    c = assemble_pair_hamiltonian(b, PairGeometry(6.0, 0.9)).to_sparse(drop_tol=0).toarray()
    off = ~np.eye(b.dim, dtype=bool)
    assert np.allclose(a[off], 8 * c[off], rtol=1e-14, atol=0)


def test_dump_matrix(tmp_path):
    h = assemble_pair_hamiltonian(_small_basis(), PairGeometry(3.0))
    path = dump_matrix(h, tmp_path / "m.txt")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# rydspin pair matrix")
    body = [ln.split() for ln in lines if not ln.startswith("#")]
    assert len(body) == h.to_sparse().nnz
    r, c = int(body[0][0]), int(body[0][1])
    assert float(body[0][2]) == pytest.approx(h.to_sparse()[r, c].real, rel=1e-11)


@pytest.mark.slow
@pytest.mark.parametrize("pair", [("CC", "CC"), ("CC", "CE"), ("CE", "CE")])
def test_energy_cut_doubling_convergence(pair):
    """Doubling the default energy window moves every coefficient by < 1%."""
    from helpers import SPECIES, b_res

    fields = FieldConfig(6.0, b_res(6.0))
    species = tuple(SPECIES[p] for p in pair)
    out = []
    for factor in (1, 2):
        sel = PairSelection(energy_cut=factor * PairSelection().energy_cut)
        h = assemble_pair_hamiltonian(select_pair_basis(species, fields, sel), PairGeometry(7.0, math.pi / 2))
        out.append(extract_pair_coefficients(effective_pair(h, "exact")))
    assert out[1].c_pm.real == pytest.approx(out[0].c_pm.real, rel=0.01)
    assert out[1].c_zz == pytest.approx(out[0].c_zz, rel=0.01)
    assert np.allclose(out[1].u, out[0].u, rtol=0.01, atol=0)

"""Shared, memoised physics fixtures for the test suite.

Expensive quantities (resonance fields, pair bases) are computed once per
process so the module tests and the acceptance suite can share them.
"""

from __future__ import annotations

import math
import warnings
from functools import cache

from rydspin.atom import FieldConfig
from rydspin.effective import compute_kappa, effective_pair, extract_pair_coefficients
from rydspin.pair import PairGeometry, assemble_pair_hamiltonian, select_pair_basis
from rydspin.species import CC, CE, default_workspace
from rydspin.tuner import find_b_res

E_FIELDS = (6.0, 8.0, 10.0, 11.0, 13.0)
REFERENCE_B_RES = (784.07, 727.82, 678.36, 656.33, 617.97)
MAGIC = 0.3041 * math.pi
SPECIES = {"CC": CC, "CE": CE}
PAIRS = (("CC", "CC"), ("CE", "CE"), ("CC", "CE"))


def workspace():
    return default_workspace()


@cache
def b_res(e_dc: float, diamagnetic: bool = True) -> float:
    return find_b_res(e_dc, include_diamagnetic=diamagnetic, workspace=workspace())


@cache
def basis(pair: tuple[str, str], e_dc: float, b: float, diamagnetic: bool = True):
    fields = FieldConfig(e_dc, b, diamagnetic)
    return select_pair_basis((SPECIES[pair[0]], SPECIES[pair[1]]), fields, workspace=workspace())


def pair_h(pair, e_dc=6.0, theta=math.pi / 2, distance=7.0, phi=0.0, b=None, scale=1.0):
    b = b_res(e_dc) if b is None else b
    return assemble_pair_hamiltonian(basis(tuple(pair), e_dc, b), PairGeometry(distance, theta, phi), scale)


@cache
def coefficients(pair, e_dc=6.0, theta=math.pi / 2, distance=7.0, method="exact"):
    h = pair_h(pair, e_dc, theta, distance)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        kappa = compute_kappa(h).kappa
    return extract_pair_coefficients(effective_pair(h, method), kappa)

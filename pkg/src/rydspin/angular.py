"""Wigner 3-j symbols and spherical-tensor matrix elements (integer momenta)."""

from fractions import Fraction
from functools import lru_cache
from math import factorial, sqrt


@lru_cache(maxsize=None)
def wigner_3j(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    """Racah formula, evaluated in exact integer arithmetic."""
    if m1 + m2 + m3 != 0:
        return 0.0
    if not abs(j1 - j2) <= j3 <= j1 + j2:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0.0

    tmin = max(0, j2 - j3 - m1, j1 - j3 + m2)
    tmax = min(j1 + j2 - j3, j1 - m1, j2 + m2)
    total = 0
    for t in range(tmin, tmax + 1):
        den = (
            factorial(t)
            * factorial(j3 - j2 + t + m1)
            * factorial(j3 - j1 + t - m2)
            * factorial(j1 + j2 - j3 - t)
            * factorial(j1 - t - m1)
            * factorial(j2 - t + m2)
        )
        total += Fraction((-1) ** t, den)
    if total == 0:
        return 0.0

    triangle = Fraction(
        factorial(j1 + j2 - j3) * factorial(j1 - j2 + j3) * factorial(-j1 + j2 + j3),
        factorial(j1 + j2 + j3 + 1),
    )
    prefactor = (
        factorial(j1 + m1)
        * factorial(j1 - m1)
        * factorial(j2 + m2)
        * factorial(j2 - m2)
        * factorial(j3 + m3)
        * factorial(j3 - m3)
    )
    magnitude = sqrt(total * total * triangle * prefactor)
    sign = (-1) ** ((j1 - j2 - m3) % 2) * (1 if total > 0 else -1)
    return sign * magnitude


@lru_cache(maxsize=None)
def spherical_tensor_element(l_bra: int, m_bra: int, k: int, q: int, l_ket: int, m_ket: int) -> float:
    """<l_bra m_bra| C^k_q |l_ket m_ket> with Condon-Shortley phases."""
    if m_bra != m_ket + q:
        return 0.0
    reduced = wigner_3j(l_bra, k, l_ket, 0, 0, 0)
    if reduced == 0.0:
        return 0.0
    phase = -1.0 if m_bra % 2 else 1.0
    return (
        phase
        * sqrt((2 * l_bra + 1) * (2 * l_ket + 1))
        * wigner_3j(l_bra, k, l_ket, -m_bra, q, m_ket)
        * reduced
    )


def sin2_element(l_bra: int, l_ket: int, m: int) -> float:
    """<l_bra m| sin^2(theta) |l_ket m>, using sin^2 = 2/3 (1 - C^2_0)."""
    value = -2.0 / 3.0 * spherical_tensor_element(l_bra, m, 2, 0, l_ket, m)
    if l_bra == l_ket:
        value += 2.0 / 3.0
    return value

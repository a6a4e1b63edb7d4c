"""Forster defect between the two species and the magnetic field that cancels it."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .atom import AmbiguousLabel, FieldConfig
from .species import CC, CE, AtomWorkspace, SpinSpecies, default_workspace

logger = logging.getLogger(__name__)

B_GRID = 0.01
"""Resolution of the resonance field, Gauss."""


class NoSignChange(ValueError):
    pass


class MultipleRoots(ValueError):
    def __init__(self, brackets):
        self.brackets = list(brackets)
        super().__init__(
            f"{len(self.brackets)} sign changes of the defect at B in "
            + ", ".join(f"[{a:g}, {b:g}] G" for a, b in self.brackets)
            + "; pass root=<index> to choose one"
        )


@dataclass(frozen=True)
class DefectReport:
    delta: float
    """Hz; (E_up - E_down) of the first species minus the same for the second."""
    first_transition: float
    second_transition: float
    fields: FieldConfig


def forster_defect(
    fields: FieldConfig,
    cc: SpinSpecies = CC,
    ce: SpinSpecies = CE,
    workspace: AtomWorkspace | None = None,
) -> DefectReport:
    ws = workspace or default_workspace()
    up1, down1 = ws.levels(cc, fields)
    up2, down2 = ws.levels(ce, fields)
    w1 = up1.energy - down1.energy
    w2 = up2.energy - down2.energy
    return DefectReport(delta=w1 - w2, first_transition=w1, second_transition=w2, fields=fields)


def find_b_res(
    e_dc: float,
    cc: SpinSpecies = CC,
    ce: SpinSpecies = CE,
    b_range: tuple[float, float] = (0.0, 1000.0),
    include_diamagnetic: bool = True,
    root: int | None = 0,
    coarse_step: float = 1.0,
    workspace: AtomWorkspace | None = None,
) -> float:
    """Magnetic field (Gauss, on the 0.01 G grid) minimising |Delta| at fixed ``e_dc``.

    A coarse scan brackets sign changes; bisection on grid indices then
    narrows the bracket to adjacent grid points and the smaller |Delta| wins.
    ``root`` picks among several brackets; ``None`` raises MultipleRoots
    instead.
    """
    ws = workspace or default_workspace()
    lo, hi = b_range
    if not 0 <= lo < hi:
        raise ValueError(f"invalid b_range {b_range}")

    cache: dict[int, float] = {}

    def delta_at(k: int) -> float:
        if k not in cache:
            fields = FieldConfig(e_dc, k * B_GRID, include_diamagnetic)
            try:
                cache[k] = forster_defect(fields, cc, ce, ws).delta
            except AmbiguousLabel as exc:
                logger.debug("unlabelled point at B=%.2f G: %s", k * B_GRID, exc)
                cache[k] = math.nan
        return cache[k]

    k_lo = int(math.ceil(lo / B_GRID - 1e-9))
    k_hi = int(math.floor(hi / B_GRID + 1e-9))
    stride = max(1, int(round(coarse_step / B_GRID)))
    ks = list(range(k_lo, k_hi + 1, stride))
    if ks[-1] != k_hi:
        ks.append(k_hi)
    values = [delta_at(k) for k in ks]
    brackets = [
        (a, b)
        for (a, va), (b, vb) in zip(zip(ks, values), zip(ks[1:], values[1:]))
        if np.isfinite(va) and np.isfinite(vb) and (va == 0 or va * vb < 0)
    ]
    if not brackets:
        raise NoSignChange(f"defect keeps one sign for B in [{lo:g}, {hi:g}] G at E_dc={e_dc:g} V/cm")
    if len(brackets) > 1:
        if root is None:
            raise MultipleRoots((a * B_GRID, b * B_GRID) for a, b in brackets)
        logger.warning("%d defect zeros at E_dc=%g V/cm; taking index %d", len(brackets), e_dc, root)
    a, b = brackets[root or 0]
    va = delta_at(a)
    while b - a > 1:
        mid = (a + b) // 2
        vm = delta_at(mid)
        if not np.isfinite(vm):
            raise AmbiguousLabel(f"dressed levels unlabelled at B={mid * B_GRID:.2f} G")
        if va * vm <= 0:
            b = mid
        else:
            a, va = mid, vm
    best = a if abs(delta_at(a)) <= abs(delta_at(b)) else b
    return round(best * B_GRID, 2)

"""Spin-1/2 encodings in pairs of dressed Rydberg levels."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .atom import (
    HYDROGENIC,
    BareState,
    DressedState,
    FieldConfig,
    OneBodySystem,
    QuantumDefectTable,
    RadialIntegrals,
    parse_label,
)


@dataclass(frozen=True)
class SpinSpecies:
    """Two dressed levels playing the roles of spin up and spin down.

    ``kind`` is ``"CC"`` (two circular levels, consecutive n) or ``"CE"``
    (a circular level n' and an elliptical level at n'+1 or n'+2).
    """

    name: str
    kind: str
    level_up: str
    level_down: str

    def __post_init__(self):
        up, down = parse_label(self.level_up), parse_label(self.level_down)
        if self.kind == "CC":
            if not (up.is_circular and down.is_circular and abs(up.n - down.n) == 1):
                raise ValueError(f"CC species {self.name} needs circular levels with consecutive n")
        elif self.kind == "CE":
            circ, ell = (up, down) if up.is_circular else (down, up)
            if not (circ.is_circular and ell.is_elliptical and ell.n - circ.n in (1, 2)):
                raise ValueError(f"CE species {self.name} needs a circular level n' and an elliptical level n'+1 or n'+2")
        else:
            raise ValueError(f"unknown species kind {self.kind!r}")

    @property
    def up(self) -> BareState:
        return parse_label(self.level_up)

    @property
    def down(self) -> BareState:
        return parse_label(self.level_down)

    @property
    def scheme(self) -> int | None:
        """n step of a CE species (1 or 2); None for CC."""
        if self.kind != "CE":
            return None
        return abs(self.down.n - self.up.n)

    @property
    def levels(self) -> tuple[BareState, BareState]:
        return self.up, self.down


CC = SpinSpecies("CC", "CC", "55C-", "56C-")
CE = SpinSpecies("CE", "CE", "71C+", "73E+")
DEFAULT_SPECIES = {"CC": CC, "CE": CE}


@dataclass
class AtomWorkspace:
    """One-body systems per species, sharing field-independent operators across field points."""

    n_window: int = 5
    defects: QuantumDefectTable = HYDROGENIC
    radial: RadialIntegrals | None = None
    label_mode: str = "auto"
    _base: dict = field(default_factory=dict, repr=False)
    _systems: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def system(self, species: SpinSpecies, fields: FieldConfig) -> OneBodySystem:
        key = (species.level_up, species.level_down, fields)
        sys_ = self._systems.get(key)
        if sys_ is not None:
            return sys_
        base_key = (species.level_up, species.level_down)
        base = self._base.get(base_key)
        if base is None:
            base = OneBodySystem.around(
                species.levels, fields, self.n_window,
                defects=self.defects, radial=self.radial, label_mode=self.label_mode,
            )
            with self._lock:
                base = self._base.setdefault(base_key, base)
        sys_ = base if base.fields == fields else base.with_fields(fields)
        with self._lock:
            if len(self._systems) > 256:
                self._systems.clear()
            self._systems[key] = sys_
        return sys_

    def levels(self, species: SpinSpecies, fields: FieldConfig) -> tuple[DressedState, DressedState]:
        sys_ = self.system(species, fields)
        return sys_.dressed(species.up), sys_.dressed(species.down)


_default_workspace = AtomWorkspace()


def default_workspace() -> AtomWorkspace:
    return _default_workspace

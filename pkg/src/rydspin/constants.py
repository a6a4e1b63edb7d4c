"""Physical constants and unit conversions.

Everything inside the package runs in Hartree atomic units. Energies cross
the public interface in units of h x Hz, electric fields in V/cm, magnetic
fields in Gauss and distances in micrometres.
"""

from dataclasses import dataclass

from scipy import constants as _sc

_pc = _sc.physical_constants


@dataclass(frozen=True)
class Constants:
    """CODATA values used throughout the package."""

    hartree_hz: float = _pc["hartree-hertz relationship"][0]
    rydberg_frequency: float = _pc["Rydberg constant times c in Hz"][0]
    bohr_radius_m: float = _pc["Bohr radius"][0]
    field_au_v_per_m: float = _pc["atomic unit of electric field"][0]
    flux_density_au_tesla: float = _pc["atomic unit of mag. flux density"][0]
    bohr_magneton_hz_per_tesla: float = _pc["Bohr magneton in Hz/T"][0]

    @property
    def bohr_magneton(self) -> float:
        """Bohr magneton in MHz per Gauss."""
        return self.bohr_magneton_hz_per_tesla * 1e-4 * 1e-6

    @property
    def dipole_unit(self) -> float:
        """e * a0 in C m."""
        return _sc.e * self.bohr_radius_m

    @property
    def dd_prefactor(self) -> float:
        """(e a0)^2 / (4 pi eps0 (1 um)^3 h) in Hz.

        Uses e^2 / (4 pi eps0 a0) = E_h, so the prefactor is E_h (a0 / 1 um)^3.
        """
        return self.hartree_hz * (self.bohr_radius_m / 1e-6) ** 3


CONSTANTS = Constants()


def hz_to_au(energy_hz):
    return energy_hz / CONSTANTS.hartree_hz


def au_to_hz(energy_au):
    return energy_au * CONSTANTS.hartree_hz


def efield_to_au(e_v_per_cm):
    return e_v_per_cm * 100.0 / CONSTANTS.field_au_v_per_m


def efield_from_au(e_au):
    return e_au * CONSTANTS.field_au_v_per_m / 100.0


def bfield_to_au(b_gauss):
    return b_gauss * 1e-4 / CONSTANTS.flux_density_au_tesla


def bfield_from_au(b_au):
    return b_au * CONSTANTS.flux_density_au_tesla * 1e4


def um_to_au(r_um):
    return r_um * 1e-6 / CONSTANTS.bohr_radius_m


def um_from_au(r_au):
    return r_au * CONSTANTS.bohr_radius_m / 1e-6

"""Radial wavefunctions by inward Numerov integration and their matrix elements.

Wavefunctions live on a shared logarithmic grid ``x = ln(r / a0)`` with nodes at
integer multiples of the step, so any two of them can be integrated against each
other without interpolation. With ``u(r) = r R(r) = sqrt(r) y(x)`` the radial
equation becomes ``y'' = f(x) y`` where

    f(x) = (l + 1/2)^2 + 2 r^2 (V(r) - E),    V(r) = -1/r,   E = -1 / (2 nu^2).

Quantum defects enter only through the effective quantum number ``nu``
(Coulomb approximation).
"""

from __future__ import annotations

import logging
import math
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

CACHE_HEADER = "rydspin-radial-cache v1"


class RadialConvergenceError(RuntimeError):
    """Raised when a wavefunction fails its normalisation or node-count checks."""


@dataclass(frozen=True)
class Wavefunction:
    n: int
    l: int
    nu: float
    start: int
    """Grid index of the first stored sample."""
    y: np.ndarray
    """Normalised ``y(x)`` samples on ``x = (start + i) * step``."""


def r_max_for(n: int) -> float:
    return 2.0 * n * (n + 15)


class NumerovSolver:
    """Computes and memoises radial wavefunctions on a common log grid.

    Parameters
    ----------
    n_max : int
        Largest principal quantum number expected; fixes the grid step.
    points_per_wavelength : float
        Resolution in the fastest-varying region of the grid.
    """

    def __init__(self, n_max: int = 100, points_per_wavelength: float = 40.0):
        # |f| is bounded by ~ (2 n + 30)^2 near r_max (decaying region) and by
        # ~ nu^2 in the oscillating region.
        k_max = 2.0 * n_max + 30.0
        self.step = 2.0 * math.pi / (points_per_wavelength * k_max)
        self.points_per_wavelength = points_per_wavelength
        self._cache: dict[tuple[int, int, float], Wavefunction] = {}
        self._lock = threading.Lock()

    def wavefunction(self, n: int, l: int, nu: float | None = None) -> Wavefunction:
        if nu is None:
            nu = float(n)
        key = (n, l, round(nu, 12))
        wf = self._cache.get(key)
        if wf is None:
            wf = self._integrate(n, l, nu)
            with self._lock:
                self._cache.setdefault(key, wf)
        return wf

    def _integrate(self, n: int, l: int, nu: float) -> Wavefunction:
        if nu <= l:
            raise ValueError(f"effective quantum number {nu} must exceed l={l}")
        h = self.step
        i_max = int(math.ceil(math.log(r_max_for(n)) / h))
        # Classical inner turning point; the inward solution is followed past it
        # until the regular solution has decayed.
        lam = (l + 0.5) ** 2
        disc = 1.0 - lam / nu**2
        r_in = nu**2 * (1.0 - math.sqrt(max(disc, 0.0))) if disc > 0 else nu**2
        i_floor = int(math.floor(math.log(1e-6) / h))

        x = np.arange(i_max, i_floor - 1, -1) * h
        r = np.exp(x)
        f = lam - 2.0 * r + (r / nu) ** 2
        g = 1.0 - (h * h / 12.0) * f
        h2 = h * h
        ys_prev, ys = 0.0, 1e-30
        gl = g.tolist()
        fl = f.tolist()
        rl = r.tolist()
        out = [0.0, 1e-30]
        for i in range(1, len(x) - 1):
            y_next = ((2.0 + 10.0 * h2 * fl[i] / 12.0) * ys - gl[i - 1] * ys_prev) / gl[i + 1]
            # Past the inner turning point the regular solution decays inward;
            # growth signals the irregular solution taking over.
            if rl[i + 1] < r_in and abs(y_next) > abs(ys):
                break
            out.append(y_next)
            ys_prev, ys = ys, y_next
            if abs(ys) > 1e200:
                out = [v * 1e-200 for v in out]
                ys_prev *= 1e-200
                ys *= 1e-200
        y = np.asarray(out)
        x = x[: len(y)]
        r = np.exp(x)

        norm2 = h * np.sum(y * y * r * r)
        if not np.isfinite(norm2) or norm2 <= 0:
            raise RadialConvergenceError(
                f"normalisation failed for n={n} l={l} (step={h:.3e}, points={len(y)})"
            )
        y = y / math.sqrt(norm2)

        # Sign convention: innermost lobe positive, as for hydrogenic R_nl.
        threshold = 1e-3 * np.max(np.abs(y))
        significant = np.nonzero(np.abs(y) > threshold)[0]
        if y[significant[-1]] < 0:
            y = -y

        nodes = int(np.sum(np.diff(np.sign(y[significant[0] : significant[-1] + 1])) != 0))
        if nodes != n - l - 1 and abs(nu - n) < 1e-12:
            raise RadialConvergenceError(
                f"node count {nodes} != {n - l - 1} for n={n} l={l}; grid step {h:.3e} too coarse?"
            )
        # Stored increasing in x.
        y = y[::-1].copy()
        start = i_max - (len(y) - 1)
        return Wavefunction(n=n, l=l, nu=nu, start=start, y=y)

    def matrix_element(self, wf1: Wavefunction, wf2: Wavefunction, power: int = 1) -> float:
        """Integral of u1 u2 r^power dr, in atomic units."""
        lo = max(wf1.start, wf2.start)
        hi = min(wf1.start + len(wf1.y), wf2.start + len(wf2.y))
        if hi <= lo:
            return 0.0
        y1 = wf1.y[lo - wf1.start : hi - wf1.start]
        y2 = wf2.y[lo - wf2.start : hi - wf2.start]
        r = np.exp(np.arange(lo, hi) * self.step)
        return float(self.step * np.sum(y1 * y2 * r ** (power + 2)))


class RadialCache:
    """Thread-safe store of dipole radial integrals with a text file format.

    File layout: a header line ``rydspin-radial-cache v1`` followed by rows
    ``n1 l1 n2 l2 delta1 delta2 value_e_a0 crc`` with 12 significant digits;
    ``crc`` is the CRC-32 of the preceding fields and flags hand edits.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._data: dict[tuple, float] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self.load(self.path)

    @staticmethod
    def key(n1, l1, n2, l2, d1, d2) -> tuple:
        # Integrals are symmetric; store under a canonical ordering.
        a = (int(n1), int(l1), float(d1))
        b = (int(n2), int(l2), float(d2))
        if b < a:
            a, b = b, a
        return (a[0], a[1], b[0], b[1], a[2], b[2])

    def get(self, key):
        return self._data.get(key)

    def put(self, key, value: float) -> None:
        with self._lock:
            self._data.setdefault(key, value)

    def __len__(self) -> int:
        return len(self._data)

    def items(self):
        return sorted(self._data.items())

    def clear(self) -> None:
        with self._lock:
            self._data.clear()

    def load(self, path: str | Path) -> None:
        rows = read_cache_file(path)
        with self._lock:
            for _, key, value in rows:
                self._data[key] = value

    def save(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path is not None else self.path
        if path is None:
            raise ValueError("no cache path configured")
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [CACHE_HEADER]
        for key, value in self.items():
            lines.append(format_row(key, value))
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text("\n".join(lines) + "\n")
        tmp.replace(path)
        return path


class CacheFormatError(ValueError):
    pass


def format_row(key: tuple, value: float) -> str:
    n1, l1, n2, l2, d1, d2 = key
    body = f"{n1} {l1} {n2} {l2} {d1:.12g} {d2:.12g} {value:.12g}"
    return f"{body} {zlib.crc32(body.encode()):08x}"


def scan_cache_file(path: str | Path) -> tuple[list[tuple[int, tuple, float]], list[int]]:
    """Parse a cache file into ``(line_number, key, value)`` rows plus the
    line numbers of unparsable or checksum-failing rows."""
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != CACHE_HEADER:
        raise CacheFormatError(f"{path}: missing header '{CACHE_HEADER}'")
    rows, bad = [], []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        body, _, crc = line.strip().rpartition(" ")
        parts = body.split()
        try:
            if len(parts) != 7 or int(crc, 16) != zlib.crc32(body.encode()):
                raise ValueError
            n1, l1, n2, l2 = (int(p) for p in parts[:4])
            d1, d2, value = (float(p) for p in parts[4:])
        except ValueError:
            bad.append(lineno)
            continue
        rows.append((lineno, RadialCache.key(n1, l1, n2, l2, d1, d2), value))
    return rows, bad


def read_cache_file(path: str | Path) -> list[tuple[int, tuple, float]]:
    rows, bad = scan_cache_file(path)
    if bad:
        raise CacheFormatError(f"{path}: corrupt rows at lines {bad}")
    return rows

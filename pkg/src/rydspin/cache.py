"""Administration of the persistent radial-integral cache."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .atom import QuantumDefectTable, RadialIntegrals, default_radial
from .radial import CACHE_HEADER, RadialCache, scan_cache_file

VERIFY_TOL = 1e-9


def default_cache_path() -> Path:
    env = os.environ.get("RYDSPIN_CACHE")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "rydspin" / "radial.txt"


@dataclass
class CacheStatus:
    path: Path
    entries: int
    checked: int = 0
    bad_rows: list[int] = field(default_factory=list)
    """File line numbers of corrupt or mismatching rows."""
    details: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.bad_rows


def _recompute(radial: RadialIntegrals, key: tuple) -> float:
    n1, l1, n2, l2, d1, d2 = key
    defects = QuantumDefectTable({l1: d1, l2: d2}) if l1 != l2 else QuantumDefectTable({l1: d1})
    return radial.compute(n1, l1, n2, l2, defects, power=1)


def cache_list(path: str | Path) -> CacheStatus:
    path = Path(path)
    if not path.exists():
        return CacheStatus(path, 0)
    rows, bad = scan_cache_file(path)
    return CacheStatus(path, len(rows), bad_rows=bad, details=[f"line {b}: corrupt" for b in bad])


def cache_verify(
    path: str | Path,
    fraction: float = 0.01,
    seed: int = 0,
    radial: RadialIntegrals | None = None,
    tol: float = VERIFY_TOL,
) -> CacheStatus:
    """Checksum every row, then recompute a random ``fraction`` of them.

    A recomputed value must agree to ``tol`` relative to the stored one.
    """
    path = Path(path)
    if not path.exists():
        return CacheStatus(path, 0)
    rows, bad = scan_cache_file(path)
    status = CacheStatus(path, len(rows), bad_rows=list(bad), details=[f"line {b}: corrupt" for b in bad])
    if not rows:
        return status
    radial = radial or RadialIntegrals(solver=default_radial().solver)
    k = min(len(rows), max(1, math.ceil(fraction * len(rows))))
    picks = np.random.default_rng(seed).choice(len(rows), size=k, replace=False)
    for i in sorted(picks.tolist()):
        lineno, key, stored = rows[i]
        fresh = _recompute(radial, key)
        if abs(fresh - stored) > tol * max(1.0, abs(fresh)):
            status.bad_rows.append(lineno)
            status.details.append(f"line {lineno}: stored {stored:.12g}, recomputed {fresh:.12g}")
    status.checked = k
    status.bad_rows.sort()
    return status


def cache_clear(path: str | Path) -> CacheStatus:
    path = Path(path)
    n = cache_list(path).entries if path.exists() else 0
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(CACHE_HEADER + "\n")
    return CacheStatus(path, 0, details=[f"removed {n} entries"])


def cache_admin(command: str, path: str | Path | None = None, **kw) -> CacheStatus:
    path = Path(path) if path is not None else default_cache_path()
    actions = {"list": cache_list, "verify": cache_verify, "clear": cache_clear}
    if command not in actions:
        raise ValueError(f"unknown cache command {command!r}; expected one of {sorted(actions)}")
    return actions[command](path, **kw)


def attach_cache(path: str | Path) -> RadialCache:
    """Load ``path`` into the process-wide radial integrals and return the cache."""
    radial = default_radial()
    path = Path(path)
    if path.exists():
        radial.cache.load(path)
    radial.cache.path = path
    return radial.cache

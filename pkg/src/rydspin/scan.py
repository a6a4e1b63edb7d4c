"""Coefficient scans over angle and field with a restartable journal."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .atom import FieldConfig
from .config import RunConfig, ScanSpec
from .effective import COEFFICIENT_COLUMNS, SpinCoefficients
from .model import PairEvaluator, SpinModel
from .pair import PairGeometry
from .species import AtomWorkspace, default_workspace
from .tuner import find_b_res

logger = logging.getLogger(__name__)

VERSION_LINE = f"# rydspin v{__version__.rsplit('.', 1)[0]}"
GRID_COLUMNS = ("theta_rad", "phi_rad", "distance_um", "e_dc_V_per_cm", "b_gauss", "species_pair")
EXTRA_COLUMNS = ("shift_j", "shift_k", "errors")
SCAN_COLUMNS = GRID_COLUMNS + COEFFICIENT_COLUMNS + EXTRA_COLUMNS


def fmt(value) -> str:
    """Shortest round-tripping text for floats; identical inputs give identical bytes."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def coefficient_row(coeffs: SpinCoefficients) -> dict:
    row = {k: float(v) for k, v in coeffs.as_row().items()}
    row["shift_j"] = coeffs.shift_j
    row["shift_k"] = coeffs.shift_k
    return row


def write_rows(fh, columns, rows, comment: str = "") -> None:
    fh.write(VERSION_LINE + "\n")
    if comment:
        fh.write(f"# {comment}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row.get(c, "")) for c in columns])


def write_csv(path: str | Path, columns, rows, comment: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="") as fh:
        write_rows(fh, columns, rows, comment)
    tmp.replace(path)
    return path


def read_csv(path: str | Path) -> list[dict]:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


class Journal:
    """Append-only JSON-lines record of finished scan work, keyed by a spec fingerprint."""

    def __init__(self, path: Path, fingerprint: str):
        self.path = path
        self.fingerprint = fingerprint
        self.rows: dict[tuple[int, int], dict] = {}
        self.b_res: dict[int, float] = {}
        if path.exists():
            self._load()
        else:
            self._start()

    def _start(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps({"fingerprint": self.fingerprint}) + "\n")

    def _load(self) -> None:
        lines = self.path.read_text().splitlines()
        try:
            head = json.loads(lines[0])
        except (IndexError, json.JSONDecodeError):
            head = {}
        if head.get("fingerprint") != self.fingerprint:
            logger.warning("journal %s belongs to a different scan; starting over", self.path)
            self._start()
            return
        for line in lines[1:]:
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                break  # torn final write
            if "b_res" in rec:
                self.b_res[rec["ie"]] = rec["b_res"]
            else:
                self.rows[(rec["ie"], rec["it"])] = rec["row"]
        logger.info("resuming scan: %d rows already done", len(self.rows))

    def _append(self, rec: dict) -> None:
        with self.path.open("a") as fh:
            fh.write(json.dumps(rec) + "\n")
            fh.flush()

    def add_b_res(self, ie: int, b: float) -> None:
        self.b_res[ie] = b
        self._append({"ie": ie, "b_res": b})

    def add_row(self, ie: int, it: int, row: dict) -> None:
        self.rows[(ie, it)] = row
        self._append({"ie": ie, "it": it, "row": row})


def scan_fingerprint(spec: ScanSpec, config: RunConfig) -> str:
    payload = {
        "spec": asdict(spec),
        "method": config.method,
        "selection": asdict(config.selection),
        "diamagnetic": config.fields.diamagnetic,
        "species": [config.species_of(n).__dict__ for n in spec.species_pair],
        "version": __version__,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]


def run_scan(
    spec: ScanSpec,
    config: RunConfig | None = None,
    workspace: AtomWorkspace | None = None,
    output: str | Path | None = None,
    journal: bool = True,
    _stop_after: int | None = None,
) -> list[dict]:
    """One coefficient row per (e_dc, theta), e_dc outermost; writes the CSV.

    Failed points carry their error message in the ``errors`` column. With
    ``journal`` on, finished rows are logged next to the output so an
    interrupted scan resumes where it stopped.
    """
    config = config or RunConfig(scan=spec)
    ws = workspace or default_workspace()
    out = Path(output if output is not None else spec.output)
    sp1, sp2 = (config.species_of(n) for n in spec.species_pair)
    jr = Journal(out.with_name(out.name + ".journal"), scan_fingerprint(spec, config)) if journal else None
    done = 0

    rows = []
    for ie, e_dc in enumerate(spec.e_dc):
        b_err = ""
        if spec.b == "auto":
            if jr is not None and ie in jr.b_res:
                b = jr.b_res[ie]
            else:
                try:
                    b = find_b_res(
                        e_dc, config.species_of("CC"), config.species_of("CE"),
                        include_diamagnetic=config.fields.diamagnetic, workspace=ws,
                    )
                except Exception as exc:  # recorded per row, scan continues
                    b, b_err = math.nan, f"b_res: {exc}"
                if jr is not None and not b_err:
                    jr.add_b_res(ie, b)
        else:
            b = float(spec.b)
        evaluator = None
        for it, theta in enumerate(spec.theta):
            if jr is not None and (ie, it) in jr.rows:
                rows.append(jr.rows[(ie, it)])
                continue
            if _stop_after is not None and done >= _stop_after:
                raise KeyboardInterrupt("scan interrupted")
            row = {
                "theta_rad": float(theta),
                "phi_rad": float(spec.phi),
                "distance_um": float(spec.distance),
                "e_dc_V_per_cm": float(e_dc),
                "b_gauss": float(b),
                "species_pair": f"{sp1.name}-{sp2.name}",
                "errors": b_err,
            }
            if not b_err:
                try:
                    if evaluator is None:
                        fields = FieldConfig(e_dc, b, config.fields.diamagnetic)
                        evaluator = PairEvaluator(fields, config.method, config.selection, ws)
                    coeffs = evaluator(sp1, sp2, PairGeometry(spec.distance, theta, spec.phi))
                    row.update(coefficient_row(coeffs))
                except Exception as exc:
                    row["errors"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            done += 1
            if jr is not None:
                jr.add_row(ie, it, row)

    write_csv(out, SCAN_COLUMNS, rows, comment=f"method={config.method} diamagnetic={config.fields.diamagnetic}")
    if jr is not None:
        jr.path.unlink(missing_ok=True)
    return rows


SITE_COLUMNS = ("site", "x_um", "y_um", "z_um", "species", "C_z_one_body", "C_z_shift", "C_z_total")
MODEL_COLUMNS = ("site_j", "site_k") + GRID_COLUMNS + COEFFICIENT_COLUMNS + ("shift_j", "shift_k")


def dump_model(model: SpinModel, prefix: str | Path) -> tuple[Path, Path]:
    """Site table and per-pair coefficient table (the scan schema plus site indices)."""
    prefix = Path(prefix)
    sites = []
    for j, (s, f) in enumerate(zip(model.sites, model.site_fields)):
        sites.append({
            "site": j, "x_um": s.position[0], "y_um": s.position[1], "z_um": s.position[2],
            "species": s.species.name, "C_z_one_body": f.one_body, "C_z_shift": f.interaction_shift,
            "C_z_total": f.total,
        })
    pairs = []
    for (j, k), c in sorted(model.pair_coeffs.items()):
        g = PairGeometry.from_vector(np.subtract(model.sites[k].position, model.sites[j].position))
        row = {
            "site_j": j, "site_k": k, "theta_rad": g.theta, "phi_rad": g.phi, "distance_um": g.distance,
            "e_dc_V_per_cm": model.fields.e_dc, "b_gauss": model.fields.b,
            "species_pair": f"{model.sites[j].species.name}-{model.sites[k].species.name}",
        }
        row.update(coefficient_row(c))
        pairs.append(row)
    p1 = write_csv(prefix.with_name(prefix.name + "_sites.csv"), SITE_COLUMNS, sites)
    p2 = write_csv(prefix.with_name(prefix.name + "_pairs.csv"), MODEL_COLUMNS, pairs)
    return p1, p2

"""Command-line entry point: ``rydspin <command>``."""

from __future__ import annotations

import logging
import math
import sys
import warnings
from pathlib import Path

import click
import numpy as np

from .atom import FieldConfig
from .cache import attach_cache, cache_admin, default_cache_path
from .config import ConfigError, RunConfig, ScanSpec, parse_config, resolve_geometry_spec
from .dynamics import Propagator, measure, model_hamiltonian, product_state, write_correlator_csv, write_timeseries_csv
from .effective import compute_kappa, effective_pair, extract_pair_coefficients
from .model import build_model
from .pair import PairGeometry, assemble_pair_hamiltonian, dump_matrix, select_pair_basis
from .scan import SCAN_COLUMNS, coefficient_row, dump_model, run_scan, write_csv, write_rows
from .species import DEFAULT_SPECIES, default_workspace
from .tuner import find_b_res, forster_defect


def _b_value(text: str) -> float | str:
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise click.BadParameter("expected 'auto' or a field in Gauss") from None


def _resolve_b(b, e_dc: float, diamagnetic: bool) -> float:
    return find_b_res(e_dc, include_diamagnetic=diamagnetic) if b == "auto" else b


def _species(name: str):
    try:
        return DEFAULT_SPECIES[name]
    except KeyError:
        raise click.BadParameter(f"unknown species {name!r}; choose from {sorted(DEFAULT_SPECIES)}") from None


def _emit(columns, rows, output: str | None) -> None:
    if output:
        write_csv(output, columns, rows)
        click.echo(f"wrote {output}", err=True)
        return
    write_rows(click.get_text_stream("stdout"), columns, rows)


@click.group()
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), default=None,
              help="Radial cache file (default: $RYDSPIN_CACHE or ~/.cache/rydspin/radial.txt).")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def main(ctx, cache_path, verbose):
    """Effective spin models of interacting circular Rydberg atoms."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {"cache": Path(cache_path) if cache_path else default_cache_path()}


def _with_cache(ctx, override: str | None = None):
    path = Path(override) if override else ctx.obj["cache"]
    cache = attach_cache(path)
    start = len(cache)
    ctx.call_on_close(lambda: cache.save(path) if len(cache) != start else None)


@main.command()
@click.option("--e-dc", type=float, default=6.0, show_default=True, help="V/cm")
@click.option("--b", "b_text", default="auto", show_default=True, help="Gauss or 'auto'")
@click.option("--species", "names", multiple=True, default=("CC", "CE"), show_default=True)
@click.option("--no-diamagnetic", is_flag=True)
@click.option("--output", "-o", default=None)
@click.pass_context
def levels(ctx, e_dc, b_text, names, no_diamagnetic, output):
    """Dressed spin levels of each species."""
    _with_cache(ctx)
    dia = not no_diamagnetic
    b = _resolve_b(_b_value(b_text), e_dc, dia)
    fields = FieldConfig(e_dc, b, dia)
    ws = default_workspace()
    rows = []
    for name in names:
        sp = _species(name)
        up, down = ws.levels(sp, fields)
        for role, st in (("up", up), ("down", down)):
            rows.append({
                "species": name, "role": role, "label": st.label, "m": st.m, "energy_hz": st.energy,
                "overlap": st.dominant_overlap, "transition_hz": up.energy - down.energy,
                "e_dc_V_per_cm": e_dc, "b_gauss": b,
            })
    _emit(list(rows[0]), rows, output)


@main.command()
@click.option("--e-dc", "e_values", type=float, multiple=True, default=(6.0, 8.0, 10.0, 11.0, 13.0), show_default=True)
@click.option("--no-diamagnetic", is_flag=True)
@click.option("--b-min", type=float, default=0.0, show_default=True)
@click.option("--b-max", type=float, default=1000.0, show_default=True)
@click.option("--root", type=int, default=0, show_default=True, help="Which sign change to report when several exist.")
@click.option("--output", "-o", default=None)
@click.pass_context
def bres(ctx, e_values, no_diamagnetic, b_min, b_max, root, output):
    """Magnetic field cancelling the Forster defect, per electric field."""
    _with_cache(ctx)
    dia = not no_diamagnetic
    rows = []
    for e in e_values:
        b = find_b_res(e, b_range=(b_min, b_max), include_diamagnetic=dia, root=root)
        d = forster_defect(FieldConfig(e, b, dia))
        rows.append({"e_dc_V_per_cm": e, "b_res_gauss": b, "residual_delta_hz": d.delta, "diamagnetic": dia})
    _emit(list(rows[0]), rows, output)


@main.command()
@click.option("--pair", nargs=2, default=("CC", "CC"), show_default=True)
@click.option("--distance", type=float, default=7.0, show_default=True, help="um")
@click.option("--theta", type=float, default=math.pi / 2, show_default=True, help="rad")
@click.option("--phi", type=float, default=0.0, show_default=True, help="rad")
@click.option("--e-dc", type=float, default=6.0, show_default=True)
@click.option("--b", "b_text", default="auto", show_default=True)
@click.option("--method", type=click.Choice(["exact", "second_order"]), default="exact", show_default=True)
@click.option("--no-diamagnetic", is_flag=True)
@click.option("--dump-matrix", "dump_path", type=click.Path(dir_okay=False), default=None, help="Write the sparse pair Hamiltonian.")
@click.option("--output", "-o", default=None)
@click.pass_context
def paircoeffs(ctx, pair, distance, theta, phi, e_dc, b_text, method, no_diamagnetic, dump_path, output):
    """Effective spin coefficients of one pair."""
    _with_cache(ctx)
    dia = not no_diamagnetic
    b = _resolve_b(_b_value(b_text), e_dc, dia)
    sp1, sp2 = (_species(n) for n in pair)
    basis = select_pair_basis((sp1, sp2), FieldConfig(e_dc, b, dia))
    h = assemble_pair_hamiltonian(basis, PairGeometry(distance, theta, phi))
    if dump_path:
        dump_matrix(h, dump_path)
    kappa = compute_kappa(h)
    coeffs = extract_pair_coefficients(effective_pair(h, method), kappa.kappa)
    row = {
        "theta_rad": theta, "phi_rad": phi, "distance_um": distance, "e_dc_V_per_cm": e_dc,
        "b_gauss": b, "species_pair": f"{sp1.name}-{sp2.name}", "errors": "",
    }
    row.update(coefficient_row(coeffs))
    if kappa.kappa < 0.99:
        click.echo(f"warning: kappa={kappa.kappa:.4f}; strongest admixture {kappa.offender}", err=True)
    _emit(SCAN_COLUMNS, [row], output)


def _load(config_path) -> RunConfig:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return parse_config(config_path)
    except ConfigError as exc:
        raise click.ClickException(str(exc)) from None


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "-o", default=None)
@click.option("--no-journal", is_flag=True)
@click.pass_context
def scan(ctx, config_path, output, no_journal):
    """Coefficient scan described by the 'scan' section of a config file."""
    config = _load(config_path)
    if config.scan is None:
        raise click.ClickException(f"{config_path}: no 'scan' section")
    _with_cache(ctx, config.cache)
    spec: ScanSpec = config.scan
    out = Path(output or spec.output)
    if not out.is_absolute() and output is None:
        out = Path(config_path).parent / out
    rows = run_scan(spec, config, output=out, journal=not no_journal)
    failed = sum(1 for r in rows if r.get("errors"))
    click.echo(f"wrote {len(rows)} rows to {out} ({failed} with errors)", err=True)


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def simulate(ctx, config_path):
    """Build an N-site model and evolve a product state."""
    config = _load(config_path)
    sim = config.simulate
    if sim is None:
        raise click.ClickException(f"{config_path}: no 'simulate' section")
    _with_cache(ctx, config.cache)
    base = Path(config_path).parent
    geometry = resolve_geometry_spec(sim, config, base)
    if len(sim.initial) != len(geometry.sites):
        raise click.ClickException(f"initial state has {len(sim.initial)} spins but the geometry has {len(geometry.sites)} sites")
    b = config.fields.b
    if b == "auto":
        b = find_b_res(config.fields.e_dc, include_diamagnetic=config.fields.diamagnetic)
    model = build_model(
        geometry.sites, config.field_config(b=b), method=config.method, selection=config.selection,
        include_c_p=sim.include_c_p, include_c_pp=sim.include_c_pp, include_c_pz=sim.include_c_pz,
    )
    prefix = base / sim.output
    dump_model(model, prefix)
    h = model_hamiltonian(model, rotating=sim.rotating_frame)
    times = np.linspace(0.0, sim.t_max, sim.n_times)
    states = Propagator(h).evolve(product_state(sim.initial), times)
    series = measure(states, times)
    write_timeseries_csv(series, prefix.with_name(prefix.name + "_timeseries.csv"))
    write_correlator_csv(series, prefix.with_name(prefix.name + "_correlators.csv"))
    click.echo(f"wrote {prefix}_*.csv", err=True)


@main.command()
@click.argument("command", type=click.Choice(["list", "verify", "clear"]))
@click.option("--fraction", type=float, default=0.01, show_default=True, help="Share of rows recomputed by verify.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def cache(ctx, command, fraction, seed):
    """Inspect, verify or clear the radial cache."""
    kw = {"fraction": fraction, "seed": seed} if command == "verify" else {}
    status = cache_admin(command, ctx.obj["cache"], **kw)
    click.echo(f"{status.path}: {status.entries} entries")
    if command == "verify":
        click.echo(f"checked {status.checked} recomputed rows; {len(status.bad_rows)} bad")
    for line in status.details:
        click.echo(line)
    if not status.ok:
        sys.exit(1)


if __name__ == "__main__":
    main()

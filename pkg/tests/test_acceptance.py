"""Acceptance criteria 1-10 plus the curve-shape checks.

Each criterion is a function returning ``(passed, detail)``. Under pytest every
one becomes a test and a one-line verdict is printed in the terminal summary;
``python tests/test_acceptance.py`` prints the same lines directly.
"""

from __future__ import annotations

import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg as sla
from scipy.optimize import brentq, minimize_scalar

sys.path.insert(0, str(Path(__file__).parent))
from helpers import E_FIELDS, MAGIC, PAIRS, REFERENCE_B_RES, b_res, basis, coefficients, pair_h  # noqa: E402

from rydspin.atom import FieldConfig, OneBodySystem, parse_label, radial_integral  # noqa: E402
from rydspin.dynamics import Propagator, energy, measure, boson_view, model_hamiltonian, product_state  # noqa: E402
from rydspin.effective import (  # noqa: E402
    MatrixProblem,
    NearResonantIntermediate,
    compute_kappa,
    effective_pair,
    extract_pair_coefficients,
    spin_eigenstates,
    sw_exact_direct_rotation,
    sw_second_order,
)
from rydspin.model import AtomSite, build_model  # noqa: E402
from rydspin.species import CC, CE  # noqa: E402

VERDICTS: dict[int | str, tuple[bool, str]] = {}
HYDROGEN_1S2P = 128 * math.sqrt(6) / 243  # symbolic integration oracle


def _kappa(h) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return compute_kappa(h).kappa


# --------------------------------------------------------------------------- 1


def criterion_1():
    start = time.perf_counter()
    results = {flag: [b_res(e, flag) for e in E_FIELDS] for flag in (True, False)}
    elapsed = time.perf_counter() - start
    worst = {
        flag: max(abs(b - p) / p for b, p in zip(vals, REFERENCE_B_RES)) for flag, vals in results.items()
    }
    best = min(worst, key=worst.get)
    decreasing = all(all(a > b for a, b in zip(v, v[1:])) for v in results.values())
    ok = worst[best] <= 0.02 and decreasing and elapsed < 300
    detail = (
        f"diamagnetic on {results[True]} (max dev {worst[True]:.2%}); "
        f"off {results[False]} (max dev {worst[False]:.2%}); strictly decreasing={decreasing}; {elapsed:.0f}s"
    )
    return ok, detail


# --------------------------------------------------------------------------- 2


def criterion_2():
    start = time.perf_counter()
    thetas = np.linspace(0.0, math.pi / 2, 50)
    roots, at_half = [], []
    for e in E_FIELDS:
        def cpm(t, e=e):
            return coefficients(("CC", "CC"), e, float(t)).c_pm.real

        vals = np.array([cpm(t) for t in thetas])
        idx = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
        if len(idx) != 1:
            return False, f"E={e}: {len(idx)} sign changes of C+- on the grid"
        roots.append(brentq(cpm, thetas[idx[0]], thetas[idx[0] + 1], xtol=1e-9) / math.pi)
        at_half.append(vals[-1])
    elapsed = time.perf_counter() - start
    spread = (max(at_half) - min(at_half)) / abs(np.mean(at_half))
    ok = all(abs(r - 0.3041) <= 0.002 for r in roots) and spread < 0.01 and elapsed < 600
    return ok, (
        "zero crossings/pi = " + ", ".join(f"{r:.5f}" for r in roots)
        + f"; C+-(pi/2) spread {spread:.2e}; {elapsed:.0f}s"
    )


# --------------------------------------------------------------------------- 3


def criterion_3():
    rows, ok = [], True
    for e in E_FIELDS:
        cc, ce, x = (coefficients(p, e) for p in PAIRS)
        checks = {
            "CC-CC |C+-| in [1,100] MHz": 1e6 <= abs(cc.c_pm) <= 1e8,
            "CE-CE |C+-| in [1,100] kHz": 1e3 <= abs(ce.c_pm) <= 1e5,
            "CC-CE |C+-| in [0.1,10] MHz": 1e5 <= abs(x.c_pm) <= 1e7,
            "CE-CE |Czz/C+-| > 10": abs(ce.c_zz / ce.c_pm) > 10,
            "CC-CC |Czz/C+-| < 1": abs(cc.c_zz / cc.c_pm) < 1,
            "CC-CE |Czz| <= 100 kHz": abs(x.c_zz) <= 1e5,
        }
        failed = [k for k, v in checks.items() if not v]
        ok &= not failed
        rows.append(
            f"E={e:g}: CC {abs(cc.c_pm) / 1e6:.3f} MHz, CE {abs(ce.c_pm) / 1e3:.2f} kHz, "
            f"CC-CE {abs(x.c_pm) / 1e6:.3f} MHz, CE Czz/C+- {abs(ce.c_zz / ce.c_pm):.0f}, "
            f"CC Czz/C+- {abs(cc.c_zz / cc.c_pm):.4f}, CC-CE Czz {abs(x.c_zz) / 1e3:.2f} kHz"
            + (f" FAILED {failed}" if failed else "")
        )
    return ok, "; ".join(rows)


# --------------------------------------------------------------------------- 4


def criterion_4():
    thetas = np.linspace(0.0, math.pi / 2, 11)
    s2 = np.sin(thetas) ** 2
    parts, ok = [], True
    for e in E_FIELDS:
        y = np.array([abs(coefficients(("CC", "CE"), e, float(t)).c_pm) for t in thetas])
        amp = float(y @ s2 / (s2 @ s2))
        resid = float(np.linalg.norm(y - amp * s2) / np.linalg.norm(y))
        ok &= resid < 0.05 and y[0] < 1e3
        parts.append(f"E={e:g}: A={amp / 1e6:.3f} MHz resid {resid:.2%} |C+-(0)|={y[0]:.2e} Hz")
    return ok, "; ".join(parts)


# --------------------------------------------------------------------------- 5


def criterion_5():
    zero = [_kappa(pair_h(p, scale=0.0)) for p in PAIRS]
    thetas = list(np.linspace(0.0, math.pi / 2, 11)) + [MAGIC]
    worst = {}
    for p in PAIRS:
        for e in E_FIELDS:
            for t in thetas:
                k = _kappa(pair_h(p, e, float(t)))
                key = "-".join(p)
                if key not in worst or k < worst[key][0]:
                    worst[key] = (k, e, t / math.pi)
    far = {"-".join(p): 1 - _kappa(pair_h(p, distance=100.0)) for p in PAIRS}
    ok = all(z == 1.0 for z in zero) and all(v[0] >= 0.98 for v in worst.values()) and all(
        v < 1e-6 for v in far.values()
    )
    detail = (
        f"kappa(V=0)={zero}; min kappa on grid: "
        + ", ".join(f"{k} {v[0]:.4f} at E={v[1]:g}, theta={v[2]:.3f}pi" for k, v in worst.items())
        + "; 1-kappa at 100um: "
        + ", ".join(f"{k} {v:.1e}" for k, v in far.items())
    )
    return ok, detail


# --------------------------------------------------------------------------- 6


def random_sw_problem(rng):
    n_q = int(rng.integers(4, 40))
    e_p = rng.uniform(-1.0, 1.0, 4)
    gap0 = rng.uniform(5.0, 20.0)
    e_q = rng.choice([-1.0, 1.0], n_q) * (gap0 + rng.uniform(0.0, 10.0, n_q))
    eps = rng.uniform(0.02, 0.3)
    dim = 4 + n_q
    v = eps * (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    v = 0.5 * (v + v.conj().T)
    np.fill_diagonal(v, 0.0)
    return np.diag(np.concatenate([e_p, e_q])) + v


def criterion_6():
    rng = np.random.default_rng(20240611)
    worst_ratio = 0.0
    for _ in range(100):
        h = MatrixProblem(random_sw_problem(rng), n_p=4)
        exact = sw_exact_direct_rotation(h).h_rel
        second = sw_second_order(h, guard=0.0).h_rel
        v_qp = h.v_qp()
        gap = np.min(np.abs(h.diag0[:4][None, :] - h.diag0[4:][:, None]))
        bound = np.linalg.norm(v_qp, 2) ** 3 / gap**2
        worst_ratio = max(worst_ratio, np.linalg.norm(exact - second, 2) / bound)

    toy = MatrixProblem(np.array([[0.0, 0.1], [0.1, 1.0]]), n_p=1)
    toy2 = sw_second_order(toy, guard=0.0).h_rel[0, 0]
    toyx = sw_exact_direct_rotation(toy).h_rel[0, 0]
    toy_ok = abs(toy2 - (-0.01)) < 1e-12 and abs(toyx - (1 - math.sqrt(1.04)) / 2) < 1e-12

    spec_err = {}
    for p in PAIRS:
        h = pair_h(p)
        eff = effective_pair(h, "exact")
        lam = np.linalg.eigvalsh(eff.h_rel)
        err, how = _spectrum_error(h, lam)
        spec_err[f"{'-'.join(p)} ({how})"] = err / np.max(np.abs(lam))
    ok = worst_ratio <= 10 and toy_ok and all(v <= 1e-9 for v in spec_err.values())
    return ok, (
        f"max |h_exact-h_2nd| / (|V_PQ|^3/gap^2) = {worst_ratio:.3f} over 100 problems; "
        f"toy 2nd {toy2:.15f} exact {toyx:.15f}; spectrum preservation rel err "
        + ", ".join(f"{k} {v:.1e}" for k, v in spec_err.items())
    )


DENSE_ORACLE_DIM = 4000


def _spectrum_error(h, lam):
    """Largest distance from eig(h_eff) to the true spectrum of H.

    Dense diagonalization when H fits in memory. Otherwise a residual
    certificate: for unit v with rho = <v|H|v>, some eigenvalue of H lies
    within |Hv - rho v| of rho. Only H's matvec is trusted, and that is
    checked against elementwise assembly in the pair tests.
    """
    lam = np.sort(lam)
    if h.dim <= DENSE_ORACLE_DIM:
        full = np.linalg.eigvalsh(h.to_sparse(drop_tol=0.0).toarray() - h.offset * np.eye(h.dim))
        return float(max(np.min(np.abs(full - x)) for x in lam)), "dense"
    v = spin_eigenstates(h).vectors
    v = v / np.linalg.norm(v, axis=0)
    hv = h.matvec(v)
    rho = np.real(np.sum(v.conj() * hv, axis=0))
    resid = np.linalg.norm(hv - v * rho, axis=0)
    order = np.argsort(rho)
    return float(np.max(np.abs(lam - rho[order]) + resid[order])), "residual"


# --------------------------------------------------------------------------- 7


def _slope(rs, ys):
    return float(np.polyfit(np.log(rs), np.log(np.abs(ys)), 1)[0])


def criterion_7():
    rs = np.array([7.0, 10.0, 14.0, 20.0])
    parts, ok = [], True
    for p in PAIRS:
        first, second = [], []
        for r in rs:
            h = pair_h(p, distance=float(r))
            first.append(extract_pair_coefficients(sw_second_order(h).restricted("first")))
            second.append(extract_pair_coefficients(sw_second_order(h).restricted("higher")))
        c1 = np.array([abs(c.c_pm) for c in first])
        u2 = np.array([c.u.ravel() for c in second])
        s1 = _slope(rs, c1)
        dev1 = np.max(np.abs(c1 * rs**3 / (c1[0] * rs[0] ** 3) - 1))
        s2 = [_slope(rs, u2[:, i]) for i in range(4)]
        dev2 = max(np.max(np.abs(u2[:, i] * rs**6 / (u2[0, i] * rs[0] ** 6) - 1)) for i in range(4))
        ok &= abs(s1 / -3 - 1) < 0.01 and dev1 < 0.01
        ok &= all(abs(s / -6 - 1) < 0.01 for s in s2) and dev2 < 0.01
        parts.append(f"{'-'.join(p)}: C+- first-order slope {s1:.4f}, U second-order slopes "
                     + "/".join(f"{s:.4f}" for s in s2))
    return ok, "; ".join(parts)


# --------------------------------------------------------------------------- 8


def criterion_8():
    h1 = radial_integral(1, 0, 2, 1)
    ns = np.arange(40, 81, 10)
    cc = np.array([radial_integral(n, n - 1, n + 1, n) for n in ns]) / ns**2
    ce = np.array([radial_integral(n, n - 1, n + 2, n) for n in ns]) / ns**1.5
    cc_var = (cc.max() - cc.min()) / cc.mean()
    ce_var = (ce.max() - ce.min()) / ce.mean()

    fields = np.linspace(0.5, 5.0, 10)
    system = OneBodySystem.around([parse_label("55C-")], FieldConfig(0.0, 0.0))
    e0 = system.dressed("55C-").energy
    shifts = np.array([system.with_fields(FieldConfig(f, 0.0)).dressed("55C-").energy - e0 for f in fields])
    c = float(shifts @ fields**2 / (fields**4).sum())
    stark_dev = float(np.max(np.abs(shifts - c * fields**2) / np.abs(c * fields**2)))

    ok = abs(h1 - 1.2902) < 1e-4 and cc_var < 0.05 and ce_var < 0.10 and stark_dev < 1e-2
    return ok, (
        f"1s-2p {h1:.6f} a0 (closed form {HYDROGEN_1S2P:.6f}); nC-(n+1)C / n^2 spread {cc_var:.2%}; "
        f"nC-(n+2)E / n^1.5 spread {ce_var:.2%}; 55C- Stark c={c:.1f} Hz/(V/cm)^2, max dev from quadratic {stark_dev:.1e}"
    )


# --------------------------------------------------------------------------- 9


def _pair_model(pair=("CC", "CC"), sites=2, spacing=7.0, theta=math.pi / 2, **toggles):
    species = {"CC": CC, "CE": CE}
    direction = np.array([math.sin(theta), 0.0, math.cos(theta)])
    atoms = [AtomSite(tuple(i * spacing * direction), species[pair[i % 2]]) for i in range(sites)]
    fields = FieldConfig(6.0, b_res(6.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_model(atoms, fields, **toggles)


def criterion_9():
    model = _pair_model()
    c = abs(model.coefficient(0, 1).c_pm)
    h = model_hamiltonian(model)
    prop = Propagator(h)
    psi0 = product_state("ud")
    target = product_state("du")

    def transfer(t):
        return abs(np.vdot(target, prop.evolve(psi0, [t])[0])) ** 2

    expected = 1 / (2 * c)
    # the population returns to zero after one full exchange period
    res = minimize_scalar(transfer, bounds=(0.75 * expected, 1.25 * expected), method="bounded",
                          options={"xatol": 1e-12 * expected})
    period_err = abs(res.x - expected) / expected
    half = transfer(expected / 2)

    three = _pair_model(("CC", "CE"), sites=3, theta=0.4 * math.pi,
                        include_c_p=True, include_c_pp=True, include_c_pz=True)
    h3 = model_hamiltonian(three)
    times = np.linspace(0.0, 2e-6, 7)
    psi = product_state("udu")
    ours = Propagator(h3).evolve(psi, times)
    brute = np.array([sla.expm(-2j * np.pi * h3 * t) @ psi for t in times])
    amp_err = float(np.max(np.abs(ours - brute)))

    conserving = _pair_model(("CC", "CE"), sites=3, theta=0.4 * math.pi)
    hc = model_hamiltonian(conserving)
    tgrid = np.linspace(0.0, 5e-6, 201)
    states = Propagator(hc).evolve(psi, tgrid)
    series = measure(states, tgrid)
    mag_drift = float(np.ptp(series.magnetization))
    en = energy(states, hc)
    en_drift = float(np.ptp(en) / max(1.0, np.max(np.abs(en))))
    occ = boson_view(series)
    bounded = bool(occ.min() >= 0.0 and occ.max() <= 1.0)

    ok = period_err < 1e-6 and half > 1 - 1e-9 and amp_err < 1e-8 and mag_drift < 1e-9 and en_drift < 1e-8 and bounded
    return ok, (
        f"exchange period rel err {period_err:.1e} (transfer at half period {half:.12f}); "
        f"N=3 vs expm max amp err {amp_err:.1e}; magnetization drift {mag_drift:.1e}; "
        f"energy drift {en_drift:.1e}; occupations in [0,1]={bounded}"
    )


# --------------------------------------------------------------------------- 10


def ce_exchange_vs_field(theta=math.pi / 4, fields=np.arange(6.0, 14.01, 0.25)):
    """Second-order C+- of the CE-CE pair along the auto-B_res field line."""
    from rydspin.tuner import find_b_res

    out = []
    for e in fields:
        b = find_b_res(float(e), coarse_step=10.0)
        h = pair_h(("CE", "CE"), float(e), theta, b=b)
        try:
            out.append(extract_pair_coefficients(sw_second_order(h)).c_pm.real)
        except NearResonantIntermediate:
            out.append(math.nan)
    return np.asarray(fields), np.asarray(out)


def criterion_10():
    fields, cpm = ce_exchange_vs_field()
    # Guard trips mark fields where the second-order formula is undefined; they are
    # reported, and the derivative is taken between the neighbouring valid points.
    tripped = fields[~np.isfinite(cpm)]
    ok_pts = np.isfinite(cpm)
    f, c = fields[ok_pts], cpm[ok_pts]
    deriv = np.abs(np.diff(c) / np.diff(f))
    mids = 0.5 * (f[1:] + f[:-1])
    k = int(np.argmax(deriv))
    baseline = float(np.median(deriv))
    ratio = deriv[k] / baseline
    ok = ratio > 5 and abs(mids[k] - 11.0) <= 1.0
    return ok, (
        f"largest |dC+-/dE| {deriv[k] / 1e3:.0f} kHz/(V/cm) at E={mids[k]:.3f} V/cm "
        f"(C+- {c[k] / 1e3:.1f} -> {c[k + 1] / 1e3:.1f} kHz), {ratio:.0f}x the median "
        f"{baseline / 1e3:.2f} kHz/(V/cm); perturbative guard tripped at E={[float(x) for x in tripped]} V/cm"
    )


# --------------------------------------------------------------------------- shapes


def shape_checks():
    thetas = np.linspace(0.0, math.pi / 2, 11)
    law = (1 - 3 * np.cos(thetas) ** 2) ** 2
    parts, ok = [], True
    for p in (("CC", "CC"), ("CE", "CE")):
        coeffs = [coefficients(p, 6.0, float(t)) for t in thetas]
        series = {"U_uu": [c.u[0, 0] for c in coeffs], "U_ud": [c.u[0, 1] for c in coeffs],
                  "U_dd": [c.u[1, 1] for c in coeffs], "C_zz": [c.c_zz for c in coeffs]}
        for name, y in series.items():
            y = np.asarray(y)
            amp = float(y @ law / (law @ law))
            resid = float(np.linalg.norm(y - amp * law) / np.linalg.norm(y))
            ok &= resid < 0.10
            parts.append(f"{'-'.join(p)} {name} resid {resid:.1%}")
    ce = coefficients(("CE", "CE"), 6.0)
    reversal = ce.u[0, 1] * ce.u[0, 0] < 0 and ce.u[0, 1] * ce.u[1, 1] < 0
    ok &= reversal
    parts.append(f"CE-CE U_ud sign reversal={reversal}")
    return ok, "; ".join(parts)


CRITERIA = {
    1: ("B_res reproduction", criterion_1),
    2: ("magic angle", criterion_2),
    3: ("coefficient magnitudes", criterion_3),
    4: ("CC-CE angular law", criterion_4),
    5: ("kappa suite", criterion_5),
    6: ("SW cross-validation", criterion_6),
    7: ("distance laws", criterion_7),
    8: ("atomic-structure oracles", criterion_8),
    9: ("dynamics", criterion_9),
    10: ("Stark-resonance locator", criterion_10),
    "shapes": ("curve shapes", shape_checks),
}


def _run(key):
    name, fn = CRITERIA[key]
    ok, detail = fn()
    VERDICTS[key] = (ok, f"{name}: {detail}")
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {key} {name}: {detail}")
    return ok, detail


@pytest.mark.parametrize("key", list(CRITERIA), ids=[f"criterion_{k}" for k in CRITERIA])
def test_acceptance(key):
    ok, detail = _run(key)
    assert ok, detail


if __name__ == "__main__":
    failures = sum(not _run(k)[0] for k in CRITERIA)
    sys.exit(1 if failures else 0)

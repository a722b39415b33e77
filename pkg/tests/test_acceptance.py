"""The thirteen acceptance criteria, one test each, at their stated tolerances.

Every test records a PASS/FAIL line (shown in the "acceptance criteria"
section of the pytest summary) before asserting.
"""

import json
import time

import numpy as np
import pytest

from conftest import HEIS_THETA, HEIS_THETA1, heisenberg_coframe, record_criterion, rigid_coframe, sample
from fefferlab.cli import run
from fefferlab.cr_geometry import (
    BaseCoframe,
    DensityField,
    commutator_residuals,
    expr_field,
    rescale_contact,
    rescaled_coframe,
    structure_residual,
    webster_connection,
)
from fefferlab.curvature import curvature_at, metric_from_expressions
from fefferlab.exprlang import eval_jet, parse
from fefferlab.fefferman import FeffermanChart, PerturbationData, rescaled_chart
from fefferlab.fourier import (
    lambda0_ode_residuals,
    lambda_alpha_ode_check,
    petrov3_xi0_predict,
    psi_mode_tables,
    weyl_modes_closed_form,
)
from fefferlab.petrov import (
    PetrovType,
    bach_psi2_identity,
    classify,
    classify_points,
    np_scalars,
    same_type_with_hysteresis,
)
from fefferlab.scales import asymptotic_checks, base_reduction_residuals, scale_equation_residual
from fefferlab.scenarios import SEED_ZERO, Sampling, builtin, debney_bridge
from oracles import fd_curvature

CURVED = metric_from_expressions(
    {
        (0, 0): "1+0.2*y*y",
        (0, 1): "0.1*x*u",
        (1, 1): "1+0.1*sin(u)",
        (2, 2): "exp(0.2*x)",
        (2, 3): "0.15*y",
        (3, 3): "-1-0.1*x*phi",
        (0, 3): "0.05*u*u",
    }
)
BASES = np.array([[0.1, -0.2, 0.15, 0.0], [-0.25, 0.3, 0.05, 0.0]]).T


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(1e-300, np.max(np.abs(b))))


def _finish(number, title, checks, start):
    """``checks`` maps a label to ``(value, tolerance)``; ``value <= tolerance`` passes."""
    elapsed = time.perf_counter() - start
    failed = [k for k, (v, t) in checks.items() if not v <= t]

    def ratio(item):
        value, tol = item[1]
        return value / tol if tol else (np.inf if value > 0 else 0.0)

    worst = max(checks.items(), key=ratio)
    detail = f"worst {worst[0]} = {worst[1][0]:.2e} (tol {worst[1][1]:.0e}), {elapsed:.1f} s"
    if failed:
        detail += f"; failing: {', '.join(failed)}"
    record_criterion(number, title, not failed and elapsed < 60, detail)
    assert not failed, detail
    assert elapsed < 60, detail


def test_criterion_01_flatness():
    t0 = time.perf_counter()
    pts = sample(100, seed=21)
    pack = curvature_at(FeffermanChart(heisenberg_coframe()).metric, pts, 2)
    _finish(1, "flat CR structure gives a conformally flat metric", {"max |W|": (float(np.max(np.abs(pack.weyl))), 1e-9)}, t0)


def test_criterion_02_finite_difference_oracle():
    t0 = time.perf_counter()
    pts = sample(20, seed=22)
    pack = curvature_at(CURVED, pts, 2)
    fn = lambda p: CURVED(np.asarray(p, dtype=float)[:, None], 0).value[..., 0].real  # noqa: E731
    worst = 0.0
    for j in range(pts.shape[1]):
        R = fd_curvature.riemann_lowered(fn, pts[:, j])
        worst = max(worst, float(np.max(np.abs(pack.riemann[..., j].real - R)) / np.max(np.abs(R))))
    _finish(2, "jet curvature against the finite-difference oracle", {"relative Riemann": (worst, 1e-5)}, t0)


def _random_coframes(count=5, seed=23):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        c = rng.uniform(-0.3, 0.3, 5)
        f = f"{c[0]}*x+{c[1]}*y*y+{c[2]}*u*x+{c[3]}*x*y+{c[4]}*u"
        base = rigid_coframe() if rng.random() < 0.5 else heisenberg_coframe()
        out.append(rescaled_coframe(base, expr_field(f)))
    return out


def test_criterion_03_structure_round_trip():
    t0 = time.perf_counter()
    pts = sample(10, seed=24)
    frames = {"heisenberg": heisenberg_coframe(), "rescaled heisenberg": rescaled_coframe(heisenberg_coframe(), expr_field("0.1*x"))}
    frames.update({f"random {i}": cf for i, cf in enumerate(_random_coframes())})
    checks = {name: (structure_residual(webster_connection(cf, pts, 3, upto="connection")), 1e-9) for name, cf in frames.items()}
    _finish(3, "structure equation round trip", checks, t0)


def test_criterion_04_covariance():
    # Q-hat = exp(-f) Q is checked as stated; the frame component obeys exp(-2 f)
    # instead, so the Q line fails (see the decision ledger).
    t0 = time.perf_counter()
    pts = sample(10, seed=25)
    f = expr_field("0.1*x")
    base = rigid_coframe()
    cf, predictor = rescale_contact(base, f)
    pred = predictor(pts, 2)
    new = webster_connection(cf, pts, 4)
    old = webster_connection(base, pts, 4)
    ef = np.exp(f(pts, 0).value.real)
    checks = {
        "A": (_rel(new.torsionA.value, pred.torsionA.value), 1e-6),
        "P": (_rel(new.schoutenP.value, pred.schouten.value), 1e-6),
        "Q = exp(-f) Q": (_rel(new.cartanQ.value, old.cartanQ.value / ef), 1e-6),
    }
    frame_law = _rel(new.cartanQ.value, old.cartanQ.value / ef**2)
    print(f"  frame law Q-hat = exp(-2f) Q: relative {frame_law:.2e}")
    _finish(4, "covariance under contact rescaling", checks, t0)


def test_criterion_05_commutators():
    t0 = time.perf_counter()
    pts = sample(50, seed=26)
    web = webster_connection(rigid_coframe(), pts, 4, upto="schouten")
    rng = np.random.default_rng(26)
    worst1 = worst2 = 0.0
    for _ in range(20):
        c = rng.uniform(-1, 1, 4)
        w, wbar = rng.integers(-3, 4, 2)
        expr = f"({c[0]})+({c[1]})*i*x*y+({c[2]})*sin(u+x)+({c[3]})*exp(i*y)"
        field = DensityField(eval_jet(parse(expr), pts, 3), float(w), float(wbar))
        r1, r2 = commutator_residuals(field, web)
        worst1, worst2 = max(worst1, float(np.max(np.abs(r1)))), max(worst2, float(np.max(np.abs(r2))))
    _finish(5, "density commutator identities", {"first": (worst1, 1e-8), "second": (worst2, 1e-8)}, t0)


def test_criterion_06_weyl_modes():
    t0 = time.perf_counter()
    chart = builtin("typeII_seed").chart()
    pred = weyl_modes_closed_form(chart, BASES)
    mismatch = leak = 0.0
    for j in range(BASES.shape[1]):
        tables = psi_mode_tables(chart, BASES[:3, j], 10)
        for key in ("psi2", "psi3", "psi4"):
            t = tables[key]
            leak = max(leak, t.leakage)
            ref = max(abs(c) for c in t.modes.values())
            for k in range(-10, 11):
                want = complex(pred[key][k][j]) if k in pred[key] else 0.0
                mismatch = max(mismatch, abs(t.coefficient(k) - want) / ref)
    calib = FeffermanChart(heisenberg_coframe(), PerturbationData.build({}, {4: "0.1*i+0.2*x"}))
    got = psi_mode_tables(calib, BASES[:3, 0], 8)["psi2"].coefficient(-4)
    want = 4 * np.conj(0.1j + 0.2 * BASES[0, 0])
    checks = {
        "closed-form modes (relative)": (mismatch, 1e-6),
        "out-of-band leakage": (leak, 1e-8),
        "Psi2^(-4) = 4 xi0^(-4)": (abs(got - want) / abs(want), 1e-6),
    }
    _finish(6, "Weyl Fourier modes against the closed forms", checks, t0)


def test_criterion_07_bach_identity():
    t0 = time.perf_counter()
    pts = sample(20, seed=27)
    two = bach_psi2_identity(builtin("typeII_seed").chart(), pts)
    three = bach_psi2_identity(builtin("typeIII_seed").chart(), pts)
    _finish(7, "Bach identity", {"type II identity": (two.residual, 1e-6), "type III B(k,k)": (three.bach_kk, 1e-8)}, t0)


def _bach_flat_type_two():
    base = builtin("typeII_seed").chart()
    xi00, _ = petrov3_xi0_predict(base.coframe, base.pert)
    zero = {0: xi00, 2: expr_field(SEED_ZERO[2]), 4: expr_field(SEED_ZERO[4])}
    return FeffermanChart(base.coframe, PerturbationData(dict(base.pert.alpha), zero))


def test_criterion_08_fibre_odes():
    t0 = time.perf_counter()
    half = builtin("half_einstein_seed")
    rad = builtin("pure_radiation_seed")
    lam_alpha = ode1 = ode2 = fourth = 0.0
    for j in range(BASES.shape[1]):
        bp = BASES[:3, j]
        lam_alpha = max(lam_alpha, lambda_alpha_ode_check(builtin("typeII_seed").chart(), bp).residual)
        ode1 = max(ode1, lambda0_ode_residuals(half.chart(), bp, "ode1", half.cosmological))
        ode2 = max(ode2, lambda0_ode_residuals(rad.chart(), bp, "ode2", rad.cosmological))
        fourth = max(fourth, lambda0_ode_residuals(_bach_flat_type_two(), bp, "fourth_order"))
    checks = {
        "lambda_alpha second order": (lam_alpha, 1e-9),
        "lambda_0 first equation": (ode1, 1e-8),
        "lambda_0 radiation equation": (ode2, 1e-8),
        "lambda_0 fourth order": (fourth, 1e-7),
    }
    _finish(8, "fibre ODE suite", checks, t0)


def test_criterion_09_scale_equivalences():
    t0 = time.perf_counter()
    checks = {}
    for name, kinds in (("half_einstein_seed", ("weakly_half", "half")), ("pure_radiation_seed", ("pure_radiation",))):
        scn = builtin(name)
        chart, pts = scn.chart(), scn.points(16, 9)
        for kind in kinds:
            base = base_reduction_residuals(chart, pts, kind, cosmological=scn.cosmological, mu=scn.mu)
            metric = scale_equation_residual(chart, kind, pts, cosmological=None if kind == "weakly_half" else scn.cosmological)
            checks[f"{kind} base"] = (base.worst, 1e-6)
            checks[f"{kind} metric"] = (metric.worst, 1e-6)
    flat = builtin("heisenberg")
    checks["flat almost Einstein"] = (scale_equation_residual(flat.chart(), "einstein", flat.points(32, 9)).worst, 1e-6)
    _finish(9, "scale equations on the base and on the metric", checks, t0)


def test_criterion_10_asymptotics():
    t0 = time.perf_counter()
    rad = asymptotic_checks(builtin("pure_radiation_seed").chart(), BASES, ("purad_psi2", "strong_einstein", "weyl_vanish_Z"))
    half = asymptotic_checks(builtin("half_einstein_seed").chart(), BASES, ("hEin_psi2", "petrovIII_Z"))
    checks = {f"pure radiation {k}": (v, 1e-6) for k, v in rad.residuals.items()}
    checks.update({f"half Einstein {k}": (v, 1e-6) for k, v in half.residuals.items()})
    _finish(10, "behaviour on the zero set", checks, t0)


def test_criterion_11_petrov_taxonomy():
    t0 = time.perf_counter()
    pts = sample(24, seed=28)

    def share(chart, allowed):
        types = classify_points(np_scalars(chart, pts))
        return sum(t in allowed for t in types) / len(types)

    checks = {
        "flat is O": (1 - share(FeffermanChart(heisenberg_coframe()), {PetrovType.O}), 0.0),
        "non-flat unperturbed is N": (1 - share(FeffermanChart(rigid_coframe()), {PetrovType.N}), 0.0),
        "type II seed": (1 - share(builtin("typeII_seed").chart(), {PetrovType.II}), 0.1),
        "type III seed": (1 - share(builtin("typeIII_seed").chart(), {PetrovType.III, PetrovType.N}), 0.0),
    }
    rng = np.random.default_rng(28)
    mismatches = 0
    total = 0
    for name in ("typeII_seed", "typeIII_seed"):
        chart = builtin(name).chart()
        scal = np_scalars(chart, pts)
        hat = np_scalars(rescaled_chart(chart, expr_field("0.1*x")), pts)
        for j in range(pts.shape[1]):
            c = complex(*rng.uniform(-3, 3, 2))
            mismatches += not same_type_with_hysteresis(scal.at(j), scal.at(j).scaled(c))
            mismatches += not same_type_with_hysteresis(scal.at(j), hat.at(j))
            total += 2
    checks["invariance failures"] = (mismatches / total, 0.0)
    assert classify(np_scalars(FeffermanChart(heisenberg_coframe()), pts).at(0)) == PetrovType.O
    _finish(11, "Petrov taxonomy and its invariance", checks, t0)


def test_criterion_12_debney_bridge():
    t0 = time.perf_counter()
    pts = Sampling(count=64, seed=29, phi_policy="random").points()
    rep = debney_bridge(builtin("heisenberg"), pts)
    checks = {f"block {k}": (v, 1e-6) for k, v in rep.blocks.items()}
    checks["CR function"] = (rep.cr_function, 1e-6)
    checks["omega shape"] = (rep.omega_shape, 1e-6)
    _finish(12, "Kerr-Schild block form of the flat scale", checks, t0)


def test_criterion_13_cli(tmp_path, capsys):
    t0 = time.perf_counter()
    reports = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        code = run(["verify-all", "builtin:heisenberg", "--seed", "5", "--points", "64", "--out", str(out)])
        reports.append((code, out.read_bytes()))
    bad = tmp_path / "bad.toml"
    bad.write_text('[coframe]\ntheta = ["-y", "x )", "1"]\n')
    claim = tmp_path / "claim.toml"
    claim.write_text('[meta]\ndeclared = ["typeII"]\n')
    code_bad = run(["validate", str(bad)])
    code_claim = run(["petrov", str(claim), "--points", "8"])
    capsys.readouterr()
    checks = {
        "byte-identical reports": (0.0 if reports[0][1] == reports[1][1] else 1.0, 0.0),
        "exit 0 on pass": (abs(reports[0][0]), 0),
        "exit 1 on residual failure": (abs(code_claim - 1), 0),
        "exit 2 on malformed input": (abs(code_bad - 2), 0),
        "report parses": (0.0 if json.loads(reports[0][1])["summary"]["failed"] == 0 else 1.0, 0.0),
    }
    _finish(13, "CLI determinism and exit codes", checks, t0)

"""Command-line front door: scenario files in, JSON (or CSV) reports out.

Exit status is 0 when every check passes, 1 when a residual exceeds its
tolerance and 2 for unreadable input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .cr_geometry import (
    DegenerateCoframeError,
    DensityField,
    InconsistentCoframeError,
    as_field,
    commutator_residuals,
    structure_residual,
    validate_adapted,
    webster_connection,
)
from .curvature import curvature_at, symmetry_residuals
from .exprlang import ExprEvaluationError, ExprSyntaxError
from .fefferman import ConjugateModeError
from .fourier import UnsupportedModesError, psi_mode_tables, weyl_modes_closed_form
from .petrov import PetrovType, classify_points, np_scalars, pnd_residuals, weyl_frame_data
from .scales import asymptotic_checks, base_reduction_residuals, scale_equation_residual
from .scenarios import (
    BUILTINS,
    Scenario,
    ScenarioFormatError,
    builtin,
    debney_bridge,
    load_scenario,
)

COMMANDS = ("validate", "webster", "curvature", "petrov", "fourier", "scales", "bridge", "verify-all")
FOURIER_BASE_POINTS = 2
FOURIER_BAND = 10
# Relative closed-form tolerance for the mode tables (their values are O(1e-1)).
FOURIER_MATCH_TOL = 1e-6


class InputError(Exception):
    """Unusable command-line input (exit status 2)."""


# Errors that mean the scenario itself is unusable rather than a residual failing.
INPUT_ERRORS = (
    InputError,
    ScenarioFormatError,
    ExprSyntaxError,
    ExprEvaluationError,
    DegenerateCoframeError,
    InconsistentCoframeError,
    ConjugateModeError,
)


class Report:
    """Ordered list of check records plus free-form data sections."""

    def __init__(self, command: str, scenario: str, flags: dict):
        self.command = command
        self.scenario = scenario
        self.flags = flags
        self.checks: list[dict] = []
        self.data: dict[str, object] = {}

    def add(self, check: str, anchor: str, residual: float, tolerance: float) -> None:
        residual = float(residual)
        self.checks.append(
            {
                "check": check,
                "anchor": anchor,
                "max_residual": residual,
                "tolerance": float(tolerance),
                "pass": bool(np.isfinite(residual) and residual <= tolerance),
            }
        )

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_dict(self) -> dict:
        n_pass = sum(c["pass"] for c in self.checks)
        return {
            "tool": "fefferlab",
            "version": __version__,
            "command": self.command,
            "scenario": self.scenario,
            "flags": self.flags,
            "checks": self.checks,
            "data": self.data,
            "summary": {"total": len(self.checks), "passed": n_pass, "failed": len(self.checks) - n_pass},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        tables = self.data.get("fourier_tables")
        writer = csv.writer(buf, lineterminator="\n")
        if tables:
            writer.writerow(["base_point", "scalar", "k", "re", "im", "leakage"])
            for entry in tables:
                for name, rows in entry["tables"].items():
                    for row in rows:
                        writer.writerow([entry["index"], name, row["k"], repr(row["re"]), repr(row["im"]), repr(row["leakage"])])
        else:
            writer.writerow(["check", "anchor", "max_residual", "tolerance", "pass"])
            for c in self.checks:
                writer.writerow([c["check"], c["anchor"], repr(c["max_residual"]), repr(c["tolerance"]), c["pass"]])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def suite_validate(scn: Scenario, pts: np.ndarray, args, rep: Report) -> None:
    v = validate_adapted(scn.coframe, pts)
    rep.add("adapted_coframe", "contact structure equation", v.residual if v.passed else np.inf, args.tol)
    chart = scn.chart()
    sig = chart.signature_check(pts)
    rep.add("lorentzian_signature", "Fefferman metric signature", 0.0 if sig["lorentzian"] else np.inf, args.tol)
    rep.add("xi0_zero_mode_real", "reality of the zero mode", chart.pert.reality_residual(pts), args.tol)


def suite_webster(scn: Scenario, pts: np.ndarray, args, rep: Report) -> None:
    web = webster_connection(scn.coframe, pts, 4, upto="schouten")
    rep.add("structure_round_trip", "d theta1 from connection and torsion", structure_residual(web), max(args.tol, 1e-9))
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for w, wbar in ((1.0, 0.0), (0.0, 1.0), (-1.0, -1.0), (0.5, -1.5)):
        c = [_complex_literal(v) for v in rng.normal(size=4) + 1j * rng.normal(size=4)]
        expr = f"{c[0]}+{c[1]}*x*y+{c[2]}*u*u+{c[3]}*sin(x+y)"
        density = DensityField(as_field(expr)(pts, 3), w, wbar)
        r1, r2 = commutator_residuals(density, web)
        worst = max(worst, float(np.max(np.abs(r1))), float(np.max(np.abs(r2))))
    rep.add("density_commutators", "commutators on weighted densities", worst, args.tol)
    P = web.schoutenP.value
    rep.data["webster_scalar_max_abs"] = float(np.max(np.abs(P)))


def _complex_literal(z: complex) -> str:
    return f"({float(z.real):.17g}+({float(z.imag):.17g})*i)"


def suite_curvature(scn: Scenario, pts: np.ndarray, args, rep: Report) -> None:
    chart = scn.chart()
    pack = curvature_at(chart.metric, pts, args.order)
    scale = max(1.0, float(np.max(np.abs(pack.riemann))))
    for name, value in symmetry_residuals(pack).items():
        rep.add(f"symmetry_{name}", "curvature tensor symmetries", value / scale, args.tol)
    if "flat" in scn.declared:
        rep.add("weyl_vanishes", "flat CR structure has conformally flat Fefferman metric", float(np.max(np.abs(pack.weyl))), 1e-9)


def suite_petrov(scn: Scenario, pts: np.ndarray, args, rep: Report) -> None:
    chart = scn.chart()
    data = weyl_frame_data(chart, pts, 0)
    residuals, scale = pnd_residuals(data.weyl.value, data.frame)
    rep.add("repeated_pnd", "k is a repeated principal null direction", residuals[1] / max(1.0, scale), args.tol)
    types = classify_points(np_scalars(chart, pts), args.tol)
    counts = {t.value: sum(1 for s in types if s == t) for t in PetrovType}
    rep.data["petrov_counts"] = counts
    n = len(types)
    expected = None
    if "flat" in scn.declared:
        expected = ({PetrovType.O}, 1.0)
    elif "typeII" in scn.declared:
        expected = ({PetrovType.II}, 0.9)
    elif "typeIII" in scn.declared:
        expected = ({PetrovType.III, PetrovType.N}, 1.0)
    if expected is not None:
        allowed, share = expected
        frac = sum(1 for s in types if s in allowed) / n
        rep.add("declared_petrov_type", "Petrov type of the declared family", 1.0 - frac, 1.0 - share)


def suite_fourier(scn: Scenario, pts: np.ndarray, args, rep: Report) -> None:
    chart = scn.chart()
    base = pts[:, : min(FOURIER_BASE_POINTS, pts.shape[1])]
    entries = []
    leak = 0.0
    mismatch = 0.0
    try:
        predicted = weyl_modes_closed_form(chart, base)
    except UnsupportedModesError:
        predicted = None
    for j in range(base.shape[1]):
        tables = psi_mode_tables(chart, base[:3, j], FOURIER_BAND)
        leak = max(leak, max(t.leakage for t in tables.values()))
        entries.append({"index": j, "point": [float(v) for v in base[:3, j]], "tables": {k: t.rows() for k, t in tables.items()}})
        if predicted is not None:
            for name in ("psi2", "psi3", "psi4"):
                table = tables[name]
                ref = max(1.0, max(abs(c) for c in table.modes.values()))
                for k in range(-FOURIER_BAND, FOURIER_BAND + 1, 1):
                    want = predicted[name].get(k)
                    want = complex(np.asarray(want)[j]) if want is not None else 0.0
                    mismatch = max(mismatch, abs(table.coefficient(k) - want) / ref)
    rep.data["fourier_tables"] = entries
    rep.add("out_of_band_leakage", "finite Fourier support of the Weyl scalars", leak, args.tol)
    if predicted is not None:
        rep.add("closed_form_modes", "closed-form Weyl mode list", mismatch, FOURIER_MATCH_TOL)


def suite_scales(scn: Scenario, pts: np.ndarray, args, rep: Report) -> None:
    chart = scn.chart()
    scale_tol = max(args.tol, 1e-6)
    if "einstein" in scn.declared:
        r = scale_equation_residual(chart, "einstein", pts, tol=scale_tol)
        rep.add("almost_einstein", "almost Einstein scale equation", r.worst, scale_tol)
    for prop, kind, asymptotics in (
        ("half_einstein", "half", ("hEin_psi2", "petrovIII_Z")),
        ("pure_radiation", "pure_radiation", ("purad_psi2", "strong_einstein", "weyl_vanish_Z")),
    ):
        if prop not in scn.declared:
            continue
        base = base_reduction_residuals(chart, pts, kind, cosmological=scn.cosmological, mu=scn.mu, tol=scale_tol)
        for name, value in base.residuals.items():
            rep.add(f"{prop}_base_{name}", "scale equation reduced to the CR base", value, scale_tol)
        metric = scale_equation_residual(chart, kind, pts, cosmological=scn.cosmological, tol=scale_tol)
        for name, value in metric.residuals.items():
            rep.add(f"{prop}_metric_{name}", "scale equation on the scaled metric", value, scale_tol)
        asym = asymptotic_checks(chart, pts[:, :2], asymptotics, tol=scale_tol)
        for name, value in asym.residuals.items():
            rep.add(f"{prop}_zero_set_{name}", "behaviour on the zero set of the scale", value, scale_tol)


def suite_bridge(scn: Scenario, pts: np.ndarray, args, rep: Report) -> None:
    if not ({"einstein", "half_einstein"} & set(scn.declared)):
        rep.data["bridge"] = "skipped: scenario declares no Einstein-type scale"
        return
    b = debney_bridge(scn, pts, tol=max(args.tol, 1e-6))
    for name, value in b.blocks.items():
        rep.add(f"bridge_block_{name}", "Debney-Kerr-Schild block form", value, b.tol)
    rep.add("bridge_cr_function", "zeta is a CR function", b.cr_function, b.tol)
    rep.add("bridge_omega_shape", "omega has the du + Z dzeta + c.c. shape", b.omega_shape, b.tol)
    rep.data["bridge_excluded_points"] = b.excluded


SUITES: dict[str, Callable] = {
    "validate": suite_validate,
    "webster": suite_webster,
    "curvature": suite_curvature,
    "petrov": suite_petrov,
    "fourier": suite_fourier,
    "scales": suite_scales,
    "bridge": suite_bridge,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _resolve(spec: str) -> Scenario:
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTINS:
            raise InputError(f"unknown built-in scenario {name!r}; choose from {', '.join(BUILTINS)}")
        return builtin(name)
    path = Path(spec)
    if not path.exists():
        raise InputError(f"scenario file not found: {spec}")
    return load_scenario(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fefferlab", description="Checks on perturbed Fefferman metrics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} suite")
        p.add_argument("scenario", help="scenario TOML file, or builtin:<name>")
        p.add_argument("--order", type=int, default=4, help="jet order for curvature (default 4)")
        p.add_argument("--tol", type=float, default=1e-8, help="residual tolerance (default 1e-8)")
        p.add_argument("--points", type=int, default=64, help="number of sample points (default 64)")
        p.add_argument("--seed", type=int, default=7, help="sampling seed (default 7)")
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--phi", default=None, help="fibre sampling: grid:N, random or exclude-poles")
    dump = sub.add_parser("dump", help="write a built-in scenario as TOML")
    dump.add_argument("name", choices=BUILTINS)
    dump.add_argument("--out", help="output file (default stdout)")
    return parser


def run(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "dump":
        text = builtin(args.name).to_toml()
        _emit(text, args.out)
        return 0
    try:
        scn = _resolve(args.scenario)
        pts = scn.points(args.points, args.seed, args.phi)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    flags = {"order": args.order, "tol": args.tol, "points": args.points, "seed": args.seed, "phi": args.phi or scn.sampling.phi_policy}
    rep = Report(args.command, scn.name, flags)
    names = list(SUITES) if args.command == "verify-all" else [args.command]
    try:
        for name in names:
            SUITES[name](scn, pts, args, rep)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = rep.to_csv() if args.format == "csv" else rep.to_json()
    _emit(text, args.out)
    if not rep.passed:
        worst = max((c for c in rep.checks if not c["pass"]), key=lambda c: c["max_residual"])
        print(f"FAILED {worst['check']}: residual {worst['max_residual']:.3e} > {worst['tolerance']:.1e}", file=sys.stderr)
        return 1
    return 0


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

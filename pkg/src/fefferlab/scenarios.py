"""Built-in validated examples and the Debney-Kerr-Schild coordinate bridge.

A scenario is stored as expressions: the base coframe, the Fourier modes of
the perturbation that are given explicitly, and an optional ``completion``
that fills the ``xi_0`` modes from a closed form (type III, half-Einstein or
pure radiation).  Keeping the recipe rather than the computed fields lets a
scenario round-trip through a plain TOML file.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .cr_geometry import E1BAR, BaseCoframe, as_field, validate_adapted
from .curvature import curvature_jets
from .exprlang import ExprSyntaxError, parse
from .fefferman import PHI, FeffermanChart, PerturbationData
from .fourier import install_petrov3
from .jets import jet_apply, jet_coordinate
from .petrov import PetrovType, classify_points, np_scalars
from .scales import (
    ResidualBundle,
    base_reduction_residuals,
    install_scale,
    scale_equation_residual,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

import tomli_w

COMPLETIONS = ("none", "petrov3", "half_einstein", "pure_radiation")
PROPERTIES = ("flat", "einstein", "typeII", "typeIII", "half_einstein", "pure_radiation")
PHI_POLICIES = ("random", "exclude-poles")
POLE_EXCLUSION = 0.1


class ScenarioFormatError(ValueError):
    """A scenario file is malformed; the message names the offending key."""


HEISENBERG_THETA = ("-y", "x", "1")
HEISENBERG_THETA1 = ("1", "i", "0")


@dataclass
class Sampling:
    count: int = 64
    seed: int = 7
    box: tuple[float, ...] = (-0.4, 0.4, -0.4, 0.4, -0.4, 0.4)
    phi_policy: str = "exclude-poles"

    def points(self, count: Optional[int] = None, seed: Optional[int] = None, policy: Optional[str] = None) -> np.ndarray:
        """Sample ``(x, y, u, phi)`` points from the box and the fibre policy.

        ``grid:N`` puts every base point on ``N`` equally spaced fibre angles
        (the base points are then ``count // N``).
        """
        count = self.count if count is None else count
        seed = self.seed if seed is None else seed
        policy = policy or self.phi_policy
        rng = np.random.default_rng(seed)
        lo = np.array(self.box[0::2], dtype=float)
        hi = np.array(self.box[1::2], dtype=float)
        if policy.startswith("grid:"):
            n_phi = int(policy.split(":", 1)[1])
            n_base = max(1, count // n_phi)
            base = lo[:, None] + (hi - lo)[:, None] * rng.random((3, n_base))
            phi = 2 * np.pi * np.arange(n_phi) / n_phi
            return np.vstack([np.repeat(base, n_phi, axis=1), np.tile(phi, n_base)[None, :]])
        if policy not in PHI_POLICIES:
            raise ScenarioFormatError(f"[sampling] phi_policy: unknown policy {policy!r}")
        base = lo[:, None] + (hi - lo)[:, None] * rng.random((3, count))
        phi = rng.uniform(-np.pi, np.pi, count)
        if policy == "exclude-poles":
            near = np.abs(np.cos(phi)) < np.sin(POLE_EXCLUSION)
            phi[near] = phi[near] + np.sign(np.sin(phi[near]) + 0.5) * 2 * POLE_EXCLUSION
        return np.vstack([base, phi[None, :]])


@dataclass
class Scenario:
    name: str
    theta: tuple[str, str, str] = HEISENBERG_THETA
    theta1: tuple[str, str, str] = HEISENBERG_THETA1
    alpha: dict[int, str] = field(default_factory=dict)
    zero: dict[int, str] = field(default_factory=dict)
    sigma: str = "1"
    cosmological: float = 0.0
    mu: complex = 0.0
    completion: str = "none"
    declared: tuple[str, ...] = ()
    description: str = ""
    sampling: Sampling = field(default_factory=Sampling)

    def __post_init__(self) -> None:
        if self.completion not in COMPLETIONS:
            raise ScenarioFormatError(f"[meta] completion: expected one of {COMPLETIONS}")
        bad = [p for p in self.declared if p not in PROPERTIES]
        if bad:
            raise ScenarioFormatError(f"[meta] declared: unknown properties {bad}")
        if self.sigma.strip() != "1":
            raise ScenarioFormatError(
                "[sigma] fn: only the canonical density '1' is supported; rescale the coframe instead"
            )

    @property
    def coframe(self) -> BaseCoframe:
        return BaseCoframe.from_expressions(list(self.theta), list(self.theta1), self.name)

    @property
    def pert(self) -> PerturbationData:
        return PerturbationData.build(self.alpha, self.zero)

    def chart(self) -> FeffermanChart:
        """The perturbed Fefferman chart, with ``xi_0`` completed if requested."""
        chart = FeffermanChart(self.coframe, self.pert, self.name)
        if self.completion == "petrov3":
            return install_petrov3(chart)
        if self.completion in ("half_einstein", "pure_radiation"):
            return install_scale(chart, self.cosmological, self.mu, self.completion == "pure_radiation")
        return chart

    def points(self, count: Optional[int] = None, seed: Optional[int] = None, policy: Optional[str] = None) -> np.ndarray:
        return self.sampling.points(count, seed, policy)

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "meta": {
                "name": self.name,
                "description": self.description,
                "completion": self.completion,
                "declared": list(self.declared),
            },
            "coframe": {"theta": list(self.theta), "theta1": list(self.theta1)},
            "perturbation": {
                "alpha": {str(k): v for k, v in sorted(self.alpha.items())},
                "zero": {str(k): v for k, v in sorted(self.zero.items())},
            },
            "sigma": {"fn": self.sigma},
            "constants": {
                "lambda": float(self.cosmological),
                "mu_re": float(np.real(self.mu)),
                "mu_im": float(np.imag(self.mu)),
            },
            "sampling": {
                "count": self.sampling.count,
                "seed": self.sampling.seed,
                "box": list(self.sampling.box),
                "phi_policy": self.sampling.phi_policy,
            },
        }

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_toml(), encoding="utf-8")


_SCHEMA = {
    "meta": {"name", "description", "completion", "declared"},
    "coframe": {"theta", "theta1"},
    "perturbation": {"alpha", "zero"},
    "sigma": {"fn"},
    "constants": {"lambda", "mu_re", "mu_im"},
    "sampling": {"count", "seed", "box", "phi_policy"},
}


def _check_expr(where: str, text: object) -> str:
    if not isinstance(text, str):
        raise ScenarioFormatError(f"{where}: expected an expression string, got {type(text).__name__}")
    try:
        parse(text)
    except ExprSyntaxError as exc:
        raise ScenarioFormatError(f"{where}: {exc}") from exc
    return text


def _modes(where: str, table: object) -> dict[int, str]:
    if not isinstance(table, dict):
        raise ScenarioFormatError(f"{where}: expected a table of mode = expression")
    out = {}
    for key, text in table.items():
        try:
            k = int(key)
        except ValueError:
            raise ScenarioFormatError(f"{where}: mode key {key!r} is not an integer") from None
        out[k] = _check_expr(f"{where}.{key}", text)
    return out


def scenario_from_dict(data: dict) -> Scenario:
    """Build a scenario from parsed TOML, rejecting unknown keys."""
    for section, value in data.items():
        if section not in _SCHEMA:
            raise ScenarioFormatError(f"unknown section [{section}]")
        if not isinstance(value, dict):
            raise ScenarioFormatError(f"[{section}] must be a table")
        extra = set(value) - _SCHEMA[section]
        if extra:
            raise ScenarioFormatError(f"[{section}]: unknown keys {sorted(extra)}")
    meta = data.get("meta", {})
    cof = data.get("coframe", {})
    theta = tuple(cof.get("theta", HEISENBERG_THETA))
    theta1 = tuple(cof.get("theta1", HEISENBERG_THETA1))
    for name, row in (("theta", theta), ("theta1", theta1)):
        if len(row) != 3:
            raise ScenarioFormatError(f"[coframe] {name}: expected 3 expressions, got {len(row)}")
        for i, text in enumerate(row):
            _check_expr(f"[coframe] {name}[{i}]", text)
    pert = data.get("perturbation", {})
    alpha = _modes("[perturbation.alpha]", pert.get("alpha", {}))
    zero = _modes("[perturbation.zero]", pert.get("zero", {}))
    for k in zero:
        if k != 0 and -k in zero:
            raise ScenarioFormatError(f"[perturbation.zero]: modes {k} and {-k} are conjugate; give one")
    const = data.get("constants", {})
    samp = data.get("sampling", {})
    sampling = Sampling(
        count=int(samp.get("count", 64)),
        seed=int(samp.get("seed", 7)),
        box=tuple(float(b) for b in samp.get("box", Sampling().box)),
        phi_policy=str(samp.get("phi_policy", "exclude-poles")),
    )
    if len(sampling.box) != 6:
        raise ScenarioFormatError("[sampling] box: expected [xmin, xmax, ymin, ymax, umin, umax]")
    return Scenario(
        name=str(meta.get("name", "scenario")),
        description=str(meta.get("description", "")),
        completion=str(meta.get("completion", "none")),
        declared=tuple(meta.get("declared", ())),
        theta=theta,
        theta1=theta1,
        alpha=alpha,
        zero=zero,
        sigma=_check_expr("[sigma] fn", data.get("sigma", {}).get("fn", "1")),
        cosmological=float(const.get("lambda", 0.0)),
        mu=complex(float(const.get("mu_re", 0.0)), float(const.get("mu_im", 0.0))),
        sampling=sampling,
    )


def scenario_from_toml(text: str) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioFormatError(f"TOML syntax: {exc}") from exc
    return scenario_from_dict(data)


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_toml(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Built-in scenarios
# ---------------------------------------------------------------------------

# Low-degree data on the Heisenberg base; amplitudes stay well inside the
# Lorentzian region on the default sampling box.
SEED_ALPHA = {
    0: "0.1*x+0.05*i*y+0.07*x*y-0.03*i*x*x+0.04*i*u+0.03*u*y",
    -2: "0.1+0.05*x*y+0.03*i*u",
}
SEED_ZERO = {
    4: "(0.1+0.2*i)*(1+0.3*x-0.2*y*y)",
    2: "0.05*x+0.02*i*u*y",
    0: "0.1*y+0.2*x*x+0.1*u*x",
}
# lambda = i sigma^-1 nabla_1 sigma for the CR-holomorphic density sigma = 1 + 0.3 z.
HALF_EINSTEIN_ALPHA = {0: "0.3*i/(1+0.3*(x+i*y))", -2: "0.15*i/(1+0.3*(x+i*y))"}


def heisenberg() -> Scenario:
    """The flat model: Fefferman metric of the Heisenberg group, no perturbation."""
    return Scenario(
        name="heisenberg",
        description="flat CR structure; the unperturbed Fefferman metric is conformally flat and Einstein off the poles",
        declared=("flat", "einstein"),
    )


def perturbed_family(selector: str) -> Scenario:
    """Concrete perturbations of the Heisenberg chart with declared properties."""
    if selector == "typeII_seed":
        return Scenario(
            name="typeII_seed",
            description="xi_1 modes {0, -2} and xi_0 modes {0, 2, 4}: repeated principal null direction",
            alpha=dict(SEED_ALPHA),
            zero=dict(SEED_ZERO),
            declared=("typeII",),
        )
    if selector == "typeIII_seed":
        return Scenario(
            name="typeIII_seed",
            description="xi_0 completed by the type III closed forms",
            alpha=dict(SEED_ALPHA),
            completion="petrov3",
            declared=("typeIII",),
        )
    if selector == "half_einstein_seed":
        return Scenario(
            name="half_einstein_seed",
            description="canonical density with lambda from sigma = 1 + 0.3 z; xi_0 from the half-Einstein closed forms",
            alpha=dict(HALF_EINSTEIN_ALPHA),
            completion="half_einstein",
            cosmological=0.2,
            mu=0.3 + 0.1j,
            declared=("half_einstein",),
        )
    if selector == "pure_radiation_seed":
        return Scenario(
            name="pure_radiation_seed",
            description="lambda = 0 and imaginary constant mu; the radiation density vanishes for this seed",
            completion="pure_radiation",
            cosmological=0.3,
            mu=0.2j,
            declared=("pure_radiation",),
        )
    raise ValueError(f"unknown selector {selector!r}")


SELECTORS = ("typeII_seed", "typeIII_seed", "half_einstein_seed", "pure_radiation_seed")


def builtin(name: str) -> Scenario:
    if name == "heisenberg":
        return heisenberg()
    return perturbed_family(name)


BUILTINS = ("heisenberg",) + SELECTORS


# ---------------------------------------------------------------------------
# Declared-property self test
# ---------------------------------------------------------------------------


def _type_fraction(chart: FeffermanChart, points: np.ndarray, allowed: Iterable[PetrovType], tol: float) -> float:
    types = classify_points(np_scalars(chart, points), tol)
    allowed = set(allowed)
    return sum(t in allowed for t in types) / len(types)


def self_test(scn: Scenario, points: Optional[np.ndarray] = None, tol: float = 1e-6) -> dict[str, ResidualBundle]:
    """Run the residual suite of every declared property."""
    if points is None:
        points = scn.points(16)
    chart = scn.chart()
    out: dict[str, ResidualBundle] = {}
    report = validate_adapted(scn.coframe, points)
    out["adapted"] = ResidualBundle("adapted", {"structure": report.residual, "failures": float(len(report.failures))}, tol)
    for prop in scn.declared:
        if prop == "flat":
            weyl = curvature_jets(chart.metric(points, 2), "riemann").weyl.value
            out[prop] = ResidualBundle(prop, {"max_weyl": float(np.max(np.abs(weyl)))}, tol)
        elif prop == "einstein":
            out[prop] = scale_equation_residual(chart, "einstein", points, tol=tol)
        elif prop == "typeII":
            frac = _type_fraction(chart, points, [PetrovType.II], 1e-8)
            out[prop] = ResidualBundle(prop, {"fraction_not_II": 1.0 - frac}, 0.1)
        elif prop == "typeIII":
            frac = _type_fraction(chart, points, [PetrovType.III, PetrovType.N], 1e-8)
            out[prop] = ResidualBundle(prop, {"fraction_not_III_or_N": 1.0 - frac}, 0.0)
        elif prop in ("half_einstein", "pure_radiation"):
            kind = "half" if prop == "half_einstein" else "pure_radiation"
            base = base_reduction_residuals(chart, points, kind, cosmological=scn.cosmological, mu=scn.mu, tol=tol)
            metric = scale_equation_residual(chart, kind, points, cosmological=scn.cosmological, tol=tol)
            out[prop + "_base"] = base
            out[prop + "_metric"] = metric
    return out


# ---------------------------------------------------------------------------
# Debney-Kerr-Schild bridge
# ---------------------------------------------------------------------------

STRIP_MARGIN = 0.05


def radial_coordinate(phi: np.ndarray, rho0: np.ndarray | float = 1.0, phi0: np.ndarray | float = 0.0) -> np.ndarray:
    """The affine parameter ``r = rho0 tan(phi - phi0)`` along the congruence."""
    return np.asarray(rho0) * np.tan(np.asarray(phi) - np.asarray(phi0))


@dataclass
class DebneyChart:
    rho0: str = "1"
    phi0: str = "0"
    zeta: str = "x+i*y"


@dataclass
class BridgeReport:
    blocks: dict[str, float]
    cr_function: float
    omega_shape: float
    Z: np.ndarray
    excluded: int
    tol: float

    @property
    def worst(self) -> float:
        return max(max(self.blocks.values()), self.cr_function, self.omega_shape)

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


def debney_bridge(
    scn: Scenario,
    points: np.ndarray,
    chart_spec: DebneyChart = DebneyChart(),
    tol: float = 1e-6,
) -> BridgeReport:
    """Compare the chart metric with the Debney-Kerr-Schild block form.

    The scaled metric ``rho0^2 sec^2(phi - phi0) g`` is written in the
    coframe ``(omega, d zeta, d zetabar, dr)`` with ``omega = theta`` and
    ``r = rho0 tan(phi - phi0)``.  In that coframe the ``dr`` row must be
    ``(2 rho0, 0, 0, 0)``, the ``d zeta`` block must be
    ``(r^2 + rho0^2)`` off the diagonal and zero on it, and ``omega`` must
    have the shape ``(du + Z d zeta + conj(Z) d zetabar) / (2 rho0)`` in
    the coordinates ``(u, zeta, zetabar, r)``.
    """
    points = np.asarray(points, dtype=float)
    rho_fn, phi0_fn, zeta_fn = as_field(chart_spec.rho0), as_field(chart_spec.phi0), as_field(chart_spec.zeta)
    shift = phi0_fn(points, 0).value.real
    keep = np.abs(np.cos(points[PHI] - shift)) > np.sin(STRIP_MARGIN)
    excluded = int(np.sum(~keep))
    pts = points[:, keep]
    chart = scn.chart()
    order = 1
    rho = rho_fn(pts, order)
    angle = jet_apply("tan", jet_coordinate_phi(pts, order) - phi0_fn(pts, order))
    r = rho * angle
    cosine = jet_apply("cos", jet_coordinate_phi(pts, order) - phi0_fn(pts, order))
    g = chart.metric(pts, order) * (rho * rho / (cosine * cosine))
    zeta = zeta_fn(pts, order)

    frame = scn.coframe.frame(pts, 1)
    cr_function = float(np.max(np.abs(frame.derive(zeta_fn(pts, 1), E1BAR).value)))

    theta_row = chart.coframe4(pts, order)[0].value  # (4, B) in (dx, dy, du, dphi)
    grad = lambda j: np.stack([j.diff(v).value for v in range(4)])  # noqa: E731
    E = np.stack([theta_row, grad(zeta), grad(zeta).conj(), grad(r)])  # rows are one-forms
    Einv = np.linalg.inv(np.moveaxis(E, -1, 0))  # (B, 4, 4)
    G = np.einsum("bai,bak,bkj->bij", Einv, np.moveaxis(g.value, -1, 0), Einv)
    rho_v = rho.value.real
    r_v = r.value.real
    blocks = {
        "r_r": float(np.max(np.abs(G[:, 3, 3]))),
        "r_zeta": float(np.max(np.abs(G[:, 3, 1]))),
        "r_zetabar": float(np.max(np.abs(G[:, 3, 2]))),
        "zeta_zeta": float(np.max(np.abs(G[:, 1, 1]))),
        "zetabar_zetabar": float(np.max(np.abs(G[:, 2, 2]))),
        "omega_r": float(np.max(np.abs(G[:, 0, 3] - 2 * rho_v) / (2 * rho_v))),
        "zeta_zetabar": float(np.max(np.abs(G[:, 1, 2] - (r_v**2 + rho_v**2)) / (r_v**2 + rho_v**2))),
    }
    # omega in the coordinates (u, zeta, zetabar, r): components are the
    # rows of the inverse Jacobian applied to theta.
    J = np.stack([grad(as_field("u")(pts, 1)), grad(zeta), grad(zeta).conj(), grad(r)])
    Jinv = np.linalg.inv(np.moveaxis(J, -1, 0))
    omega = np.einsum("bai,ab->bi", Jinv, theta_row)
    omega_u = omega[:, 0]
    Z = omega[:, 1] / omega_u
    omega_shape = float(
        max(
            np.max(np.abs(omega[:, 2] / omega_u - Z.conj())),
            np.max(np.abs(omega_u.imag)),
            np.max(np.abs(omega[:, 3])),
        )
    )
    return BridgeReport(blocks, cr_function, omega_shape, Z, excluded, tol)


def jet_coordinate_phi(points: np.ndarray, order: int):
    return jet_coordinate(points, PHI, order)

"""Almost Lorentzian scales on perturbed Fefferman charts.

The scale is realised in the chart trivialisation as ``cos(phi)``, so the
metric it defines off the zero set ``phi = +-pi/2`` is ``sec(phi)^2 g``.
Metric-level residuals are evaluated on that metric; base-level residuals
evaluate the equivalent conditions on the CR data.

Base-level closed forms are written in the trivialisation by the canonical
density of the coframe, where ``lambda_1^(0) = i Gamma_1 / 3 + xi_1^(0)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .cr_geometry import (
    E1,
    E1BAR,
    BaseCoframe,
    DensityField,
    Gauge,
    as_field,
    cov_deriv,
    webster_weyl_residual,
)
from .curvature import curvature_jets
from .fefferman import PHI, FeffermanChart, PerturbationData, adapted_null_frame
from .fourier import (
    CRFields,
    _base_field,
    divergence_pair,
    lambda_alpha_zero,
    raise_index,
    table_from_samples,
    fibre_points,
)
from .jets import Jet, jeinsum, jet_apply, jet_coordinate, jet_det3, jet_matrix_inverse, stack

KINDS = ("einstein", "weakly_half", "half", "pure_radiation")

#: Metric-level checks stay this far from the zero set.
POLE_MARGIN = 0.1


class ZeroSetError(ValueError):
    pass


class ProfileMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class AlmostScale:
    """A base density ``sigma`` of weight (1, 0) and the fibre model ``cos(phi - phase)``.

    ``sigma=None`` is the canonical density of the coframe, the only choice
    for which the chart's fibre coordinate is the scale's angle.
    """

    sigma: Optional[Callable] = None
    phase: float = 0.0

    @property
    def canonical(self) -> bool:
        return self.sigma is None

    def zero_set_distance(self, phi: np.ndarray) -> np.ndarray:
        return np.abs(np.cos(np.asarray(phi) - self.phase))


@dataclass
class RadiationProfile:
    cosmological: float
    phi_density: np.ndarray
    mu: complex
    profile_residual: float
    modes: dict[int, complex] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Metric-level residuals
# ---------------------------------------------------------------------------


def scaled_metric(chart: FeffermanChart, scale: AlmostScale = AlmostScale()) -> Callable[[np.ndarray, int], Jet]:
    """``sec(phi - phase)^2 g`` as a metric field (singular on the zero set)."""
    if not scale.canonical:
        raise ValueError("metric-level checks need the canonical density; rescale the coframe instead")

    def fn(points: np.ndarray, order: int) -> Jet:
        if np.any(scale.zero_set_distance(points[PHI]) < 1e-12):
            raise ZeroSetError("metric-level evaluation on the zero set")
        phi = jet_coordinate(points, PHI, order)
        cos = jet_apply("cos", phi - scale.phase)
        factor = jet_apply("recip", cos * cos)
        return chart.metric(points, order) * factor

    return fn


def _frame_vectors(chart: FeffermanChart, points: np.ndarray) -> dict[str, np.ndarray]:
    nf = adapted_null_frame(chart, points, 0)
    return {"k": nf.k.value, "l": nf.l.value, "m": nf.m.value, "mbar": nf.m.conj().value}


def _pair(T: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ab...,a...,b...->...", T, a, b)


@dataclass
class ResidualBundle:
    kind: str
    residuals: dict[str, float]
    tol: float

    @property
    def worst(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol

    def to_dict(self) -> dict:
        return {"kind": self.kind, "residuals": dict(self.residuals), "tol": self.tol, "pass": self.passed}


def scale_equation_residual(
    chart: FeffermanChart,
    kind: str,
    points: np.ndarray,
    scale: AlmostScale = AlmostScale(),
    cosmological: Optional[float] = None,
    tol: float = 1e-6,
) -> ResidualBundle:
    """Metric-level residuals of the scale equation of the given kind.

    * ``einstein``: trace-free Ricci of ``sec^2 g``.
    * ``weakly_half``: ``Ric(v, w)`` for ``v, w`` in ``{k, m}``.
    * ``half``: the above plus the gradient of the scalar curvature.
    * ``pure_radiation``: trace-free Ricci off the ``(l, l)`` slot plus the
      gradient of the scalar curvature.

    With ``cosmological`` given, ``Sc - 4 cosmological`` is reported too.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")
    if np.any(scale.zero_set_distance(points[PHI]) < np.sin(POLE_MARGIN) * 0.999):
        raise ZeroSetError(f"metric-level points must stay {POLE_MARGIN} away from the zero set")
    order = 2 if kind in ("einstein", "weakly_half") else 3
    g = scaled_metric(chart, scale)(points, order)
    cj = curvature_jets(g, "riemann")
    ric, sc = cj.ricci.value, cj.scalar.value
    gv = g.value
    trace_free = ric - gv * sc / 4.0
    v = _frame_vectors(chart, points)
    out: dict[str, float] = {}
    if kind == "einstein":
        out["trace_free_ricci"] = float(np.max(np.abs(trace_free)))
    if kind in ("weakly_half", "half"):
        for a, b in (("k", "k"), ("k", "m"), ("m", "m")):
            out[f"ric_{a}{b}"] = float(np.max(np.abs(_pair(ric, v[a], v[b]))))
    if kind == "pure_radiation":
        names = ("k", "l", "m", "mbar")
        worst = 0.0
        for i, a in enumerate(names):
            for b in names[i:]:
                if (a, b) == ("l", "l"):
                    continue
                worst = max(worst, float(np.max(np.abs(_pair(trace_free, v[a], v[b])))))
        out["trace_free_off_radiation"] = worst
    if kind in ("half", "pure_radiation"):
        out["scalar_gradient"] = float(np.max(np.abs(np.stack([cj.scalar.diff(i).value for i in range(4)]))))
    if cosmological is not None:
        out["scalar_minus_4lambda"] = float(np.max(np.abs(sc - 4 * cosmological)))
    return ResidualBundle(kind, out, tol)


# ---------------------------------------------------------------------------
# Base-level closed forms
# ---------------------------------------------------------------------------


def _canonical_density(c: CRFields) -> DensityField:
    return c.web.sigma(c.alpha[0].fn.order)


def _sigma_field(c: CRFields, points: np.ndarray, scale: AlmostScale) -> DensityField:
    if scale.canonical:
        return _canonical_density(c)
    return DensityField(as_field(scale.sigma)(points, c.alpha[0].fn.order), 1, 0, 0)


def half_einstein_lambda0(c: CRFields, cosmological: float, mu: DensityField, pure: bool = False) -> dict[int, DensityField]:
    """Modes ``0, 2, 4`` of ``lambda_0`` for a half-Einstein (or pure radiation) scale.

    Uses ``lambda = lambda_1^(0)``; ``mu`` is the free complex function
    (its real part is dropped for pure radiation).
    """
    lam = lambda_alpha_zero(c)
    up, down = divergence_pair(c, lam)
    up, down = up.fn, down.fn
    norm = (lam.fn * lam.fn.conj())
    P = c.web.schouten
    mu_fn = mu.fn
    if pure:
        mu_fn = mu_fn - mu_fn.real
    re_mu = mu_fn.real
    l0 = (up - down) * 1j + norm * 0.75 + P + re_mu * 6.0
    l4 = (P * 4.0 + (up - down) * 3j - norm * 3.0 - cosmological * 4.0 / 3.0) * 0.125 + mu_fn
    l2 = l4 * 2.0 + up * 0.25j + norm * 0.5 + re_mu * 2.0
    return {0: DensityField(l0.real), 2: DensityField(l2), 4: DensityField(l4)}


def xi0_modes_from_lambda0(c: CRFields, lam0: dict[int, DensityField]) -> dict[int, DensityField]:
    """Convert ``lambda_0`` modes into ``xi_0`` modes (only mode 0 differs)."""
    shift = c.web.gamma0 * (-1j / 3.0) + c.web.schouten * (1.0 / 3.0)
    out = dict(lam0)
    out[0] = DensityField((lam0[0].fn + shift).real)
    return out


def xi0_from_scale(
    coframe: BaseCoframe,
    pert: PerturbationData,
    cosmological: float = 0.0,
    mu: object = 0.0,
    pure_radiation: bool = False,
    scale: AlmostScale = AlmostScale(),
) -> dict[int, Callable]:
    """Field functions for ``xi_0^(0)``, ``xi_0^(2)``, ``xi_0^(4)`` of a half-Einstein scale.

    Only the ``xi_1`` modes of ``pert`` are used.
    """
    if not scale.canonical:
        raise NotImplementedError("closed forms are implemented for the canonical density")
    alpha_only = PerturbationData(dict(pert.alpha), {})
    mu_fn = as_field(mu)

    def build(k: int):
        def b(c: CRFields) -> DensityField:
            pts = c.points
            mu_field = DensityField(mu_fn(pts, c.alpha[0].fn.order))
            return xi0_modes_from_lambda0(c, half_einstein_lambda0(c, cosmological, mu_field, pure_radiation))[k]

        return _base_field(b, coframe, alpha_only, derivatives=1, upto="schouten")

    return {k: build(k) for k in (0, 2, 4)}


def install_scale(
    chart: FeffermanChart, cosmological: float = 0.0, mu: object = 0.0, pure_radiation: bool = False
) -> FeffermanChart:
    fields = xi0_from_scale(chart.coframe, chart.pert, cosmological, mu, pure_radiation)
    pert = PerturbationData(dict(chart.pert.alpha), fields)
    return FeffermanChart(chart.coframe, pert, chart.label + ("/pure-radiation" if pure_radiation else "/half-einstein"))


# ---------------------------------------------------------------------------
# Base reductions
# ---------------------------------------------------------------------------


def _max(j) -> float:
    v = j.value if hasattr(j, "value") else np.asarray(j)
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def base_reduction_residuals(
    chart: FeffermanChart,
    points: np.ndarray,
    kind: str = "half",
    scale: AlmostScale = AlmostScale(),
    cosmological: float = 0.0,
    mu: object = 0.0,
    tol: float = 1e-6,
) -> ResidualBundle:
    """CR-level residuals of the scale equation of the given kind.

    ``sigma_1bar`` is ``check-nabla_1bar sigma + 2i xi_1bar^(2) sigma`` and
    ``second_order`` is ``check-nabla_1 check-nabla_1 sigma + i A sigma``; both
    are required by every kind except ``einstein`` on a flat chart.  The
    ``xi0_*`` entries compare the supplied ``xi_0`` modes with the closed
    forms (``half`` and ``pure_radiation``); ``second_cr`` is the extra
    condition on ``xi_0^(4)`` for pure radiation.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")
    from .fourier import _check_support

    _check_support(chart.pert)
    c = CRFields.from_data(chart.coframe, chart.pert, points, 2, full_gauge=True, upto="schouten")
    sigma = _sigma_field(c, points, scale)
    out: dict[str, float] = {}
    a2 = c.alpha[-2]
    first = cov_deriv(sigma, E1BAR, c.web, c.gauge).fn + a2.fn.conj() * sigma.fn * 2j
    out["sigma_1bar"] = _max(first)
    d1 = cov_deriv(sigma, E1, c.web, c.gauge)
    second = cov_deriv(d1, E1, c.web, c.gauge).fn + c.web.torsionA * sigma.fn * 1j
    out["second_order"] = _max(second)
    if kind in ("half", "pure_radiation"):
        if not scale.canonical:
            raise NotImplementedError("closed forms are implemented for the canonical density")
        mu_field = DensityField(as_field(mu)(points, c.alpha[0].fn.order))
        pred = xi0_modes_from_lambda0(c, half_einstein_lambda0(c, cosmological, mu_field, kind == "pure_radiation"))
        for k in (0, 2, 4):
            out[f"xi0_{k}"] = _max(pred[k].fn.value - c.zero[k].fn.value)
    if kind == "pure_radiation":
        z4 = c.zero[4]
        out["second_cr"] = _max((c.D1(z4).fn + a2.fn * z4.fn * 2j).value)
    return ResidualBundle(kind, out, tol)


# ---------------------------------------------------------------------------
# Radiation profile
# ---------------------------------------------------------------------------


def radiation_profile(
    chart: FeffermanChart,
    base_point: Iterable[float],
    cosmological: float = 0.0,
    mu: complex = 0.0,
    samples: int = 16,
    tol: float = 1e-6,
) -> RadiationProfile:
    """Sample the radiation density ``Phi`` from ``Ric_0(l, l) = cos(phi)^2 Phi``.

    Samples avoid the zero set; the profile residual is the spread of
    ``Ric_0(l, l) sec(phi)^2`` over the fibre, and ``modes`` are the Fourier
    coefficients of ``Ric_0(l, l)`` (a pure ``cos^2`` profile has
    ``c_0 = 2 c_(+-2)`` and nothing else).
    """
    phi = 2 * np.pi * (np.arange(samples) + 0.5) / samples
    phi = phi[np.abs(np.cos(phi)) > np.sin(POLE_MARGIN)]
    base = np.asarray(list(base_point), dtype=float)[:3]
    pts = np.vstack([np.repeat(base[:, None], phi.size, axis=1), phi[None, :]])
    g = scaled_metric(chart)(pts, 2)
    cj = curvature_jets(g, "riemann")
    trace_free = cj.ricci.value - g.value * cj.scalar.value / 4.0
    v = _frame_vectors(chart, pts)
    rll = _pair(trace_free, v["l"], v["l"])
    density = rll / np.cos(phi) ** 2
    spread = float(np.max(np.abs(density - density.mean())))
    Phi = density.mean()
    # The cos^2 profile has modes {0, +-2}; reconstruct them from the fitted density.
    modes = {0: 0.5 * Phi, 2: 0.25 * Phi, -2: 0.25 * Phi}
    return RadiationProfile(cosmological, density, mu, spread, modes)


# ---------------------------------------------------------------------------
# Asymptotics on the zero set
# ---------------------------------------------------------------------------

ASYMPTOTIC_CHECKS = (
    "hEin_psi2",
    "purad_psi2",
    "petrovIII_Z",
    "petrovN_Z",
    "petrovO_Z",
    "petrovD_Z",
    "strong_einstein",
    "weyl_vanish_Z",
)


def _alternating(table, ks: Iterable[int], conj: bool = False) -> complex:
    """``sum (-1)^(k/2) c_k`` over the listed modes (the value at ``phi = pi/2``)."""
    total = 0.0
    for k in ks:
        ck = table.coefficient(-k).conjugate() if conj else table.coefficient(k)
        total += (-1) ** ((k // 2) % 2) * ck
    return complex(total)


def asymptotic_sums(tables: dict) -> dict[str, complex]:
    """The alternating mode sums of the zero-set conditions, canonical density."""
    p2, p3, p4 = tables["psi2"], tables["psi3"], tables["psi4"]
    out = {
        "hEin_psi2": _alternating(p2, (0, 2, 4), conj=True),
        "purad_psi2_zero": complex(p2.coefficient(0)),
        "purad_psi2_two": complex(p2.coefficient(2 * -1).conjugate() - p2.coefficient(-4).conjugate()),
        "petrovIII_Z": _alternating(p2, (-4, -2, 0)),
        "petrovIII_Z_no_zero": _alternating(p2, (-4, -2)),
        "petrovN_Z": _alternating(p3, (-6, -4, -2, 0, 2)),
        "petrovO_Z": _alternating(p4, (-8, -6, -4, -2, 0, 2, 4)),
    }
    # D condition: alternating sum of the modes of 4 Psi3^2 - 6 Psi2 Psi4.
    disc: dict[int, complex] = {}
    for i in range(-6, 3, 2):
        for j in range(-6, 3, 2):
            disc[i + j] = disc.get(i + j, 0) + 4 * p3.coefficient(i) * p3.coefficient(j)
    for i in range(-4, 1, 2):
        for j in range(-8, 5, 2):
            disc[i + j] = disc.get(i + j, 0) - 6 * p2.coefficient(i) * p4.coefficient(j)
    out["petrovD_Z"] = complex(sum((-1) ** ((k // 2) % 2) * v for k, v in disc.items()))
    return out


def asymptotic_checks(
    chart: FeffermanChart,
    base_points: np.ndarray,
    which: Iterable[str] = ASYMPTOTIC_CHECKS,
    band: int = 10,
    tol: float = 1e-6,
) -> ResidualBundle:
    """Zero-set conditions at each base point (max over points)."""
    from .fourier import psi_mode_tables

    which = list(which)
    unknown = [w for w in which if w not in ASYMPTOTIC_CHECKS]
    if unknown:
        raise ValueError(f"unknown asymptotic checks {unknown}")
    out = {w: 0.0 for w in which}
    base_points = np.atleast_2d(np.asarray(base_points, dtype=float))
    if base_points.shape[0] not in (3, 4):
        base_points = base_points.T
    for j in range(base_points.shape[1]):
        tables = psi_mode_tables(chart, base_points[:3, j], band)
        sums = asymptotic_sums(tables)
        vals = {
            "hEin_psi2": abs(sums["hEin_psi2"]),
            "purad_psi2": max(abs(sums["purad_psi2_zero"]), abs(sums["purad_psi2_two"])),
            "petrovIII_Z": abs(sums["petrovIII_Z"]),
            "petrovN_Z": max(abs(sums["petrovIII_Z"]), abs(sums["petrovN_Z"])),
            "petrovO_Z": max(abs(sums["petrovIII_Z"]), abs(sums["petrovN_Z"]), abs(sums["petrovO_Z"])),
            "petrovD_Z": abs(sums["petrovD_Z"]),
            "strong_einstein": max(abs(sums["petrovIII_Z_no_zero"]), abs(sums["petrovN_Z"]), abs(sums["petrovO_Z"])),
        }
        for w in which:
            if w == "weyl_vanish_Z":
                continue
            out[w] = max(out[w], vals[w])
    if "weyl_vanish_Z" in which:
        out["weyl_vanish_Z"] = weyl_on_zero_set(chart, base_points)
    return ResidualBundle("asymptotic", out, tol)


def weyl_on_zero_set(chart: FeffermanChart, base_points: np.ndarray) -> float:
    """Max ``|W|`` of the chart metric at ``phi = +-pi/2`` over the base points."""
    base_points = np.asarray(base_points, dtype=float)[:3]
    n = base_points.shape[1]
    pts = np.hstack([
        np.vstack([base_points, np.full((1, n), np.pi / 2)]),
        np.vstack([base_points, np.full((1, n), -np.pi / 2)]),
    ])
    cj = curvature_jets(chart.metric(pts, 2), "riemann")
    return float(np.max(np.abs(cj.weyl.value)))


# ---------------------------------------------------------------------------
# Null Maxwell fields
# ---------------------------------------------------------------------------


def _det4(m: Jet) -> Jet:
    """Determinant of a 4x4 jet matrix by cofactor expansion along the first row."""
    total = None
    for col in range(4):
        cols = [c for c in range(4) if c != col]
        minor = jet_det3(m[1:][:, cols])
        term = m[0, col] * minor * float((-1) ** col)
        total = term if total is None else total + term
    return total


def _levi_civita() -> np.ndarray:
    eps = np.zeros((4, 4, 4, 4))
    for perm in itertools.permutations(range(4)):
        sign = 1
        p = list(perm)
        for i in range(4):
            while p[i] != i:
                j = p[i]
                p[i], p[j] = p[j], p[i]
                sign = -sign
        eps[perm] = sign
    return eps


def _exterior2(F: Jet) -> Jet:
    """``(dF)_abc`` of a two-form ``F_ab`` given as a jet."""
    grad = stack([F.diff(v) for v in range(4)])
    return grad + _cyc(grad, 1) + _cyc(grad, 2)


def _cyc(t: Jet, shift: int) -> Jet:
    """Cyclic relabelling ``t_abc -> t_bca`` (shift 1) or ``t_cab`` (shift 2)."""
    spec = {1: "bca->abc", 2: "cab->abc"}[shift]
    return jeinsum(spec, t)


@dataclass
class MaxwellReport:
    closed: float
    coclosed: float
    k_contraction: float
    kappa_wedge: float

    @property
    def worst(self) -> float:
        return max(self.closed, self.coclosed, self.k_contraction, self.kappa_wedge)


def null_maxwell_residual(chart: FeffermanChart, zeta: object, points: np.ndarray) -> MaxwellReport:
    """Closure, co-closure and nullity of ``F = zeta theta ^ theta1 + conj`` on the chart."""

    order = 1
    C = chart.coframe4(points, order)
    theta, theta1 = C[0], C[1]
    z = as_field(zeta)(points, order)
    Fp = (jeinsum("a,b->ab", theta, theta1) - jeinsum("a,b->ab", theta1, theta)) * z
    F = Fp + Fp.conj()
    g = chart.metric(points, order)
    ginv = jet_matrix_inverse(g)
    det = _det4(g)
    vol = jet_apply("sqrt", det * -1.0)
    eps = _levi_civita()
    Fup = jeinsum("ac,bd,cd->ab", ginv, ginv, F)
    star = jeinsum("abcd,cd->ab", _eps_jet(eps, points, order), Fup) * vol * 0.5
    dF = _exterior2(F)
    dstar = _exterior2(star)
    k = np.zeros((4,) + points.shape[1:])
    k[PHI] = 1.0
    k_contr = np.einsum("a...,ab...->b...", k, F.value)
    kappa = theta.value
    wedge = (
        np.einsum("a...,bc...->abc...", kappa, F.value)
        + np.einsum("b...,ca...->abc...", kappa, F.value)
        + np.einsum("c...,ab...->abc...", kappa, F.value)
    )
    return MaxwellReport(
        closed=_max(dF.truncate(0)),
        coclosed=_max(dstar.truncate(0)),
        k_contraction=float(np.max(np.abs(k_contr))),
        kappa_wedge=float(np.max(np.abs(wedge))),
    )


def _eps_jet(eps: np.ndarray, points: np.ndarray, order: int) -> Jet:
    shape = eps.shape + points.shape[1:]
    arr = np.broadcast_to(eps.reshape(eps.shape + (1,) * (len(shape) - 4)), shape)
    return Jet.constant(np.array(arr), order)

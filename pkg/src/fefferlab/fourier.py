"""Fibre-Fourier analysis of perturbed Fefferman charts.

Fields on the chart are ``2 pi``-periodic in the fibre angle ``phi``.  This
module extracts their Fourier coefficients at fixed base points, evaluates
the closed-form Weyl coefficients of a repeated-PND perturbation, and checks
the ordinary differential equations obeyed by the components of ``lambda``.

All weighted quantities are trivialised by the canonical density of the
chart's coframe, so weighted and plain coefficients coincide numerically.
Raising an index with the Levi form, or taking a ``nabla_0`` derivative,
shifts the weight by ``(-1, -1)``; the :class:`DensityField` bookkeeping
tracks this so that inconsistent sums are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Optional

import numpy as np

from .cr_geometry import (
    ELL,
    E1,
    E1BAR,
    BaseCoframe,
    DensityField,
    Gauge,
    WebsterData,
    cov_deriv,
    webster_connection,
)
from .fefferman import PHI, FeffermanChart, PerturbationData
from .jets import Jet


class NotBandLimitedError(ValueError):
    pass


class UnsupportedModesError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Fourier tables
# ---------------------------------------------------------------------------


def node_count(band: int) -> int:
    return 4 * band + 8


def fibre_nodes(band: int) -> np.ndarray:
    n = node_count(band)
    return 2 * np.pi * np.arange(n) / n


@dataclass
class FourierTable:
    """Coefficients ``c_k`` of ``sum_k c_k e^(ik phi)`` for ``|k| <= band`` at one base point."""

    modes: dict[int, complex]
    band: int
    leakage: float = 0.0

    def coefficient(self, k: int) -> complex:
        return self.modes.get(k, 0.0)

    def support(self, tol: float = 1e-10) -> list[int]:
        scale = max([abs(v) for v in self.modes.values()] + [0.0])
        return sorted(k for k, v in self.modes.items() if abs(v) > tol * max(1.0, scale))

    def reconstruct(self, phi: np.ndarray) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        return sum(c * np.exp(1j * k * phi) for k, c in self.modes.items())

    def rows(self) -> list[dict]:
        return [
            {"k": k, "re": float(c.real), "im": float(c.imag), "leakage": float(self.leakage)}
            for k, c in sorted(self.modes.items())
        ]

    def to_json(self) -> str:
        return json.dumps(self.rows())


def _quadrature_tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    """``cos`` and ``sin`` of ``2 pi k j / n`` as ``(n, n)`` tables indexed by ``(k, j)``.

    The entries for ``n - m`` mirror those for ``m``, so conjugating the
    samples conjugates the coefficients bit for bit.
    """
    m = np.arange(n // 2 + 1)
    c_half, s_half = np.cos(2 * np.pi * m / n), np.sin(2 * np.pi * m / n)
    if n % 2 == 0:
        s_half[-1] = 0.0
    c = np.concatenate([c_half, c_half[1 : (n + 1) // 2][::-1]])
    s = np.concatenate([s_half, -s_half[1 : (n + 1) // 2][::-1]])
    idx = np.outer(np.arange(n), np.arange(n)) % n
    return c[idx], s[idx]


def table_from_samples(samples: np.ndarray, band: int, tol: Optional[float] = None) -> FourierTable:
    """Trapezoidal coefficients from samples on the equispaced nodes (last axis)."""
    samples = np.asarray(samples)
    n = samples.shape[-1]
    cos, sin = _quadrature_tables(n)
    re, im = samples.real, samples.imag
    coeffs = (re @ cos.T + im @ sin.T) / n + 1j * ((im @ cos.T - re @ sin.T) / n)
    modes = {k: complex(coeffs[..., k % n]) for k in range(-band, band + 1)}
    out_of_band = [abs(coeffs[..., k % n]) for k in range(band + 1, n - band)]
    leakage = float(max(out_of_band)) if out_of_band else 0.0
    if tol is not None and leakage > tol:
        raise NotBandLimitedError(f"out-of-band leakage {leakage:.3e} exceeds {tol:.1e}")
    return FourierTable(modes, band, leakage)


def fourier_extract(
    field_fn: Callable[[np.ndarray], np.ndarray], band: int, tol: Optional[float] = None
) -> FourierTable:
    """Fourier table of a ``2 pi``-periodic function using ``4 band + 8`` nodes."""
    phi = fibre_nodes(band)
    return table_from_samples(np.asarray(field_fn(phi)), band, tol)


def fibre_points(base_point: Iterable[float], band: int) -> np.ndarray:
    """``(4, n)`` chart points over one base point at the quadrature nodes."""
    base = np.asarray(list(base_point), dtype=float)[:3]
    phi = fibre_nodes(band)
    return np.vstack([np.repeat(base[:, None], phi.size, axis=1), phi[None, :]])


def psi_mode_tables(
    chart: FeffermanChart, base_point: Iterable[float], band: int = 8, tol: Optional[float] = None
) -> dict[str, FourierTable]:
    """Fourier tables of ``Psi_0 .. Psi_4`` over one base point."""
    from .petrov import np_scalars

    pts = fibre_points(base_point, band)
    scal = np_scalars(chart, pts)
    return {f"psi{i}": table_from_samples(v, band, tol) for i, v in enumerate(scal.as_tuple())}


# ---------------------------------------------------------------------------
# CR data as weighted fields
# ---------------------------------------------------------------------------


def xi0_weight(k: int) -> tuple[float, float]:
    return (k / 2 - 1, -k / 2 - 1)


def raise_index(f: DensityField) -> DensityField:
    """Contract with the (unit) Levi form: numerically the identity, weight shifts by ``(-1, -1)``."""
    return replace(f, w=f.w - 1, wbar=f.wbar - 1)


@dataclass
class CRFields:
    """CR data and Webster data at a batch of base points."""

    web: WebsterData
    alpha: dict[int, DensityField]  # xi_1^(k), weight (k/2, -k/2), one lower (1,0) index
    zero: dict[int, DensityField]  # xi_0^(k), weight (k/2 - 1, -k/2 - 1)
    full_gauge: bool = False
    points: Optional[np.ndarray] = None

    @classmethod
    def from_data(
        cls,
        coframe: BaseCoframe,
        pert: PerturbationData,
        points: np.ndarray,
        order: int,
        full_gauge: bool = False,
        upto: str = "cartan",
    ) -> "CRFields":
        extra = {"connection": 1, "schouten": 2, "cartan": 4}[upto]
        web = webster_connection(coframe, points, order + extra, upto=upto)
        alpha = {}
        for k in set(pert.alpha_support()) | {0, -2}:
            alpha[k] = DensityField(pert.alpha_mode(k, points, order), k / 2, -k / 2, 1)
        zero = {}
        for k in range(-4, 5, 2):
            zero[k] = DensityField(pert.zero_mode(k, points, order), *xi0_weight(k), 0)
        return cls(web, alpha, zero, full_gauge, points)

    @property
    def gauge(self) -> Gauge:
        """Gauge by the mode-zero one-form; along ``ell`` it shifts by ``lambda_0^(0) = xi_0^(0) - P/3``."""
        ell = self.zero[0].fn
        if self.web.schouten is not None:
            ell = ell - self.web.schouten * (1.0 / 3.0)
        return Gauge(self.alpha[0].fn, ell, full=self.full_gauge)

    def D(self, f: DensityField, direction: int, gauged: bool = True) -> DensityField:
        out = cov_deriv(f, direction, self.web, self.gauge if gauged else None)
        if direction == ELL:
            out = replace(out, w=out.w - 1, wbar=out.wbar - 1)
        return out

    def D1(self, f: DensityField, gauged: bool = True) -> DensityField:
        return self.D(f, E1, gauged)

    def D0(self, f: DensityField, gauged: bool = True) -> DensityField:
        return self.D(f, ELL, gauged)

    def Dup(self, f: DensityField, gauged: bool = True) -> DensityField:
        """``nabla^1 f = h^(1 1bar) nabla_1bar f``."""
        return raise_index(self.D(f, E1BAR, gauged))

    def xi_up2(self) -> DensityField:
        """``xi^1_(2)``: the conjugate of ``xi_1^(-2)`` with its index raised."""
        return raise_index(self.alpha[-2].conj())

    def A(self) -> DensityField:
        return self.web.A()

    def Q(self) -> DensityField:
        return self.web.Q().with_weights(-1, -1)

    def F(self) -> tuple[DensityField, DensityField]:
        """``F_1^1`` and ``F_01`` of the mode-zero gauge one-form."""
        from .cr_geometry import gauge_curvature

        xi1 = self.alpha[0]
        xi0 = self.zero[0].with_weights(0, 0)
        F11b, F01 = gauge_curvature(self.web, xi1, xi0)
        return raise_index(F11b), F01.with_weights(-1, -1)


def _check_support(pert: PerturbationData) -> None:
    extra = [k for k in pert.alpha_support() if k not in (0, -2)]
    if extra:
        raise UnsupportedModesError(
            f"closed forms need xi_1 modes within {{0, -2}}; got extra modes {extra}"
        )


# ---------------------------------------------------------------------------
# Closed-form Weyl coefficients
# ---------------------------------------------------------------------------

#: Coefficient of the Cartan tensor in ``Psi_4^(0)``.  Measured value in the
#: conventions of this package (the printed closed form has ``i/2``).
CARTAN_COEFFICIENT = 0.25j


def weyl_modes_closed_form(
    chart: FeffermanChart,
    points: np.ndarray,
    full_gauge: bool = True,
    cartan_coefficient: complex = CARTAN_COEFFICIENT,
) -> dict[str, dict[int, np.ndarray]]:
    """Predicted Fourier coefficients of ``Psi_2``, ``Psi_3``, ``Psi_4`` at base points.

    ``points`` is a ``(4, B)`` array whose fibre row is ignored.  Returns
    ``{"psi2": {k: values}, ...}`` with values over the batch.
    """
    _check_support(chart.pert)
    c = CRFields.from_data(chart.coframe, chart.pert, points, 2, full_gauge)
    D1, D0, Dup = c.D1, c.D0, c.Dup
    a2 = c.alpha[-2]
    up2 = c.xi_up2()
    z = c.zero
    A = c.A()
    Ff, F01 = c.F()
    i = 1j

    psi2 = {
        -4: z[-4] * 4,
        -2: Dup(a2) * i + z[-2] * 2,
        0: Ff * (-4 * i / 3) - up2 * a2 * 2,
    }
    psi3 = {
        -6: a2 * z[-4] * -6,
        -4: a2 * psi2[-2] * -0.5 + D1(z[-4]) * (2 * i),
        -2: D1(Dup(a2)) * -0.25 + D1(z[-2]) * (1.5 * i) - D0(a2) * i,
        0: D1(Ff, gauged=False) * 0.5
        - F01 * (1.5 * i)
        - D1(up2) * a2 * (1.5 * i)
        - D1(a2) * up2 * i
        + a2 * z[2] * 3,
        2: D1(D1(up2)) * 0.25 + D1(z[2]) * (0.5 * i) + a2 * z[4] * 2,
    }
    psi4 = {
        -8: z[-4] * a2 * a2 * 6,
        -6: z[-4] * D1(a2) * -i - a2 * D1(z[-4]) * (3 * i),
        -4: (D1(D1(z[-4])) - A * z[-4] * (3 * i)) * -0.5 - a2 * (D1(z[-2]) - D0(a2)) * i,
        -2: (D1(D1(z[-2])) - A * z[-2] * (2 * i)) * -0.5
        + D1(D0(a2)) * 0.5
        - A * Dup(a2) * 0.5,
        0: c.Q() * cartan_coefficient
        + D1(F01, gauged=False)
        + A * Ff
        + D1(a2) * z[2] * (2 * i)
        + a2 * D1(z[2]) * (3 * i)
        - A * up2 * a2 * (3 * i)
        + a2 * a2 * z[4] * 6,
        2: D1(D1(z[2])) * -0.5
        + D1(a2) * z[4] * (3 * i)
        + a2 * D1(z[4]) * (5 * i)
        + D1(A, gauged=False) * up2 * 0.5
        + A * D1(up2),
        4: (D1(D1(z[4])) + A * z[4] * i) * -0.5,
    }
    return {
        "psi2": {k: v.value for k, v in psi2.items()},
        "psi3": {k: v.value for k, v in psi3.items()},
        "psi4": {k: v.value for k, v in psi4.items()},
    }


# ---------------------------------------------------------------------------
# Base fields built from the perturbation
# ---------------------------------------------------------------------------


def lambda_alpha_zero(c: CRFields) -> DensityField:
    """``lambda_1^(0) = i sigma^-1 nabla_1 sigma + xi_1^(0)`` for the canonical density."""
    return DensityField(c.web.gamma1 * (1j / 3.0), 0, 0, 1) + c.alpha[0]


def divergence_pair(c: CRFields, lam: DensityField) -> tuple[DensityField, DensityField]:
    """``(nabla_1 lambda^1, nabla^1 lambda_1)`` for a weight-zero (1,0)-form component."""
    return c.D1(raise_index(lam.conj()), gauged=False), c.Dup(lam, gauged=False)


def _base_field(
    build: Callable[[CRFields], DensityField],
    coframe: BaseCoframe,
    pert: PerturbationData,
    derivatives: int = 1,
    upto: str = "connection",
):
    """Wrap a closed form as a field function ``(points, order) -> Jet``.

    ``derivatives`` is the number of frame derivatives the closed form takes;
    without Webster curvature (``upto="connection"``) the gauge along ``ell``
    omits the ``P/3`` shift, which only the ``nabla_0`` terms see.
    """

    def fn(points: np.ndarray, order: int) -> Jet:
        c = CRFields.from_data(coframe, pert, points, order + derivatives, full_gauge=True, upto=upto)
        return build(c).fn.truncate(order)

    return fn


# ---------------------------------------------------------------------------
# Petrov type III prediction
# ---------------------------------------------------------------------------


def petrov3_xi0_closed_forms(c: CRFields) -> tuple[DensityField, DensityField]:
    """``xi_0^(0)`` and ``xi_0^(2)`` that make ``Psi_2`` vanish identically."""
    a0, a2 = c.alpha[0], c.alpha[-2]
    up2 = c.xi_up2()
    d_up, d_down = divergence_pair(c, a0)
    xi00 = d_up * 1j - d_down * 1j + up2 * a2 * 3
    xi02 = c.D1(up2) * 0.5j
    return xi00, xi02


def petrov3_xi0_predict(
    coframe: BaseCoframe, pert: PerturbationData
) -> tuple[Callable, Callable]:
    """Field functions for ``xi_0^(0)`` and ``xi_0^(2)`` of a type III (or more special) chart."""
    _check_support(pert)
    alpha_only = PerturbationData(dict(pert.alpha), {})
    xi00 = _base_field(lambda c: petrov3_xi0_closed_forms(c)[0], coframe, alpha_only)
    xi02 = _base_field(lambda c: petrov3_xi0_closed_forms(c)[1], coframe, alpha_only)

    def xi00_real(points: np.ndarray, order: int) -> Jet:
        return xi00(points, order).real

    return xi00_real, xi02


def install_petrov3(chart: FeffermanChart) -> FeffermanChart:
    """The chart with ``xi_0`` replaced by the type III prediction (``xi_0^(4)`` removed)."""
    xi00, xi02 = petrov3_xi0_predict(chart.coframe, chart.pert)
    pert = PerturbationData(dict(chart.pert.alpha), {0: xi00, 2: xi02})
    return FeffermanChart(chart.coframe, pert, chart.label + "/typeIII")


# ---------------------------------------------------------------------------
# Ordinary differential equations along the fibre
# ---------------------------------------------------------------------------


@dataclass
class LambdaAlphaReport:
    residual: float
    support: list[int]
    support_ok: bool
    scale: float

    @property
    def passed(self) -> bool:
        return self.support_ok


def _phi_derivatives(j: Jet, count: int) -> list[np.ndarray]:
    out = [j.value]
    for _ in range(count):
        j = j.diff(PHI)
        out.append(j.value)
    return out


def lambda_alpha_ode_check(
    chart: FeffermanChart, base_point: Iterable[float], band: int = 6, tol: float = 1e-10
) -> LambdaAlphaReport:
    """Residual of ``lambda_1'' + 2i lambda_1'`` along the fibre and the mode support of ``lambda_1``."""
    pts = fibre_points(base_point, band)
    lam1, _ = chart.lambda_components(pts, 2)
    v, d1, d2 = _phi_derivatives(lam1, 2)
    table = table_from_samples(v, band)
    support = table.support(tol)
    return LambdaAlphaReport(
        residual=float(np.max(np.abs(d2 + 2j * d1))),
        support=support,
        support_ok=set(support) <= {0, -2},
        scale=float(np.max(np.abs(v))),
    )


class ShapePreconditionError(ValueError):
    pass


@dataclass
class ODECoefficients:
    """Coefficients of the fibre equations for ``lambda_0`` at one base point."""

    A0: complex
    A1: complex
    A2: complex
    B4: complex
    fourth_rhs: complex


def ode_coefficients(chart: FeffermanChart, base_point: Iterable[float], cosmological: float = 0.0) -> ODECoefficients:
    pts = np.asarray(list(base_point), dtype=float)[:3]
    pts = np.concatenate([pts, [0.0]])[:, None]
    c = CRFields.from_data(chart.coframe, chart.pert, pts, 1, upto="schouten")
    lam = lambda_alpha_zero(c)
    lam_up, lam_down = divergence_pair(c, lam)
    div_sum = (lam_up + lam_down).value[0]
    div_diff = (lam_up - lam_down).value[0]
    norm = (lam * raise_index(lam.conj())).value[0]
    P = c.web.schouten.value[0]
    up2 = c.xi_up2()
    cross = (up2 * c.alpha[-2]).value[0]
    return ODECoefficients(
        A0=-4 * cosmological - 6 * norm,
        A1=3 * div_sum,
        A2=8 * P + 5j * div_diff - 6 * norm,
        B4=-3j * div_diff - 12 * norm,
        fourth_rhs=64 * (1j * div_diff + 3 * cross + P),
    )


def check_step_one(chart: FeffermanChart, base_point: Iterable[float], tol: float = 1e-9) -> float:
    """Deviation from ``2 lambda_1^(-2) = lambda_1^(0)`` (modes ``{0, -2}`` only)."""
    _check_support(chart.pert)
    pts = np.concatenate([np.asarray(list(base_point), dtype=float)[:3], [0.0]])[:, None]
    c = CRFields.from_data(chart.coframe, chart.pert, pts, 0, upto="schouten")
    lam = lambda_alpha_zero(c).value[0]
    return float(abs(2 * c.alpha[-2].value[0] - lam))


def lambda0_ode_residuals(
    chart: FeffermanChart,
    base_point: Iterable[float],
    which: str = "ode1",
    cosmological: float = 0.0,
    band: int = 6,
    step_tol: float = 1e-8,
) -> float:
    """Max residual over the fibre of the chosen equation for ``lambda_0``.

    ``which`` is ``ode1`` (constant scalar curvature), ``ode2`` (pure
    radiation) or ``fourth_order`` (Bach flat type II).  The first two need
    ``lambda_1`` of the shape ``2 lambda_1^(-2) = lambda_1^(0)``.
    """
    if which not in ("ode1", "ode2", "fourth_order"):
        raise ValueError(f"unknown equation {which!r}")
    if which != "fourth_order":
        dev = check_step_one(chart, base_point)
        if dev > step_tol:
            raise ShapePreconditionError(f"lambda_1 does not have the required shape (deviation {dev:.2e})")
    else:
        _check_support(chart.pert)
    co = ode_coefficients(chart, base_point, cosmological)
    pts = fibre_points(base_point, band)
    phi = pts[PHI]
    _, lam0 = chart.lambda_components(pts, 4 if which == "fourth_order" else 2)
    d = _phi_derivatives(lam0, 4 if which == "fourth_order" else 2)
    cs, sn = np.cos(phi), np.sin(phi)
    if which == "ode1":
        res = (
            cs**2 * d[2] + 6 * cs * sn * d[1] + (12 - 8 * cs**2) * d[0]
            + co.A2 * cs**2 + co.A1 * cs * sn + co.A0
        )
    elif which == "ode2":
        res = (
            cs**2 * d[2] + 3 * cs * sn * d[1] + (3 + 4 * cs**2) * d[0]
            + co.B4 * cs**4 + co.A1 * cs**3 * sn - 0.5 * co.A2 * cs**2 + 0.25 * co.A0
        )
    else:
        res = d[4] + 20 * d[2] + 64 * d[0] - co.fourth_rhs
    return float(np.max(np.abs(res)))

"""Pseudo-hermitian geometry of a contact CR three-manifold from an adapted coframe.

Conventions used throughout (m = 1, unitary frames unless stated):

* A coframe is ``(theta, theta1)`` with components along ``(dx, dy, du)``;
  ``theta1bar`` is the conjugate.  The dual frame is ``(ell, e1, e1bar)``.
* Directions are indexed ``0 -> ell``, ``1 -> e1``, ``2 -> e1bar``.
* The connection one-form is ``Gamma = G0 theta + G1 theta1 + G1b theta1bar``.
  Expanding ``d theta1 = c01 theta^theta1 + c01b theta^theta1bar + c11b theta1^theta1bar``
  gives ``G0 = -c01``, ``G1b = c11b``, ``G1 = -conj(c11b)`` and
  ``A^1_{1bar} = c01b``; the torsion with both indices down is ``A_11 = conj(c01b)``.
* Tensor-density components are :class:`DensityField` objects with weights
  ``(w, wbar)`` and a *charge*: +1 per lower (1,0) index or upper (0,1) index,
  -1 per lower (0,1) or upper (1,0) index.  The covariant derivative along a
  frame direction is then ``e(f) + ((w - wbar)/3 - charge) Gamma(e) f``, with the
  density part coming from ``nabla sigma = Gamma sigma / 3`` for the canonical
  density ``sigma = (theta ^ theta1)^(-1/3)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .exprlang import ScalarFieldExpr, eval_jet, parse
from .jets import Jet, jeinsum, jet_apply, jet_matrix_inverse, stack

FieldFn = Callable[[np.ndarray, int], Jet]

ELL, E1, E1BAR = 0, 1, 2
BASE_VARS = 3  # x, y, u


class DegenerateCoframeError(ValueError):
    pass


class InconsistentCoframeError(ValueError):
    pass


class SignatureError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Scalar fields
# ---------------------------------------------------------------------------


def expr_field(source: str | ScalarFieldExpr) -> FieldFn:
    expr = parse(source) if isinstance(source, str) else source

    def fn(points: np.ndarray, order: int) -> Jet:
        return eval_jet(expr, points, order)

    fn.expr = expr  # type: ignore[attr-defined]
    return fn


def constant_field(value: complex) -> FieldFn:
    def fn(points: np.ndarray, order: int) -> Jet:
        return Jet.constant(np.full(points.shape[1:], value, dtype=complex), order)

    fn.constant = value  # type: ignore[attr-defined]
    return fn


ZERO = constant_field(0.0)
ONE = constant_field(1.0)


def as_field(spec) -> FieldFn:
    if callable(spec):
        return spec
    if isinstance(spec, (str, ScalarFieldExpr)):
        return expr_field(spec)
    return constant_field(complex(spec))


# ---------------------------------------------------------------------------
# Coframes and frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BaseCoframe:
    """An adapted coframe ``(theta, theta1)`` on the base.

    ``components(points, order)`` returns a jet of shape ``(2, 3, *batch)``
    holding the ``dx, dy, du`` components of ``theta`` and ``theta1``.
    """

    components: Callable[[np.ndarray, int], Jet]
    label: str = "coframe"
    sources: Optional[tuple[tuple[str, ...], tuple[str, ...]]] = None

    @classmethod
    def from_expressions(
        cls, theta: Sequence[str], theta1: Sequence[str], label: str = "coframe"
    ) -> "BaseCoframe":
        if len(theta) != 3 or len(theta1) != 3:
            raise ValueError("theta and theta1 need three components (dx, dy, du)")
        exprs = [parse(s) for s in list(theta) + list(theta1)]

        def components(points: np.ndarray, order: int) -> Jet:
            jets = [eval_jet(e, points, order) for e in exprs]
            return stack([stack(jets[:3]), stack(jets[3:])])

        return cls(components, label, (tuple(theta), tuple(theta1)))

    def matrix(self, points: np.ndarray, order: int) -> Jet:
        """Rows ``theta, theta1, theta1bar``; columns ``dx, dy, du``."""
        comp = self.components(points, order)
        return stack([comp[0], comp[1], comp[1].conj()])

    def frame(self, points: np.ndarray, order: int) -> "Frame":
        return Frame(self.matrix(points, order))


class Frame:
    """Coframe matrix and its inverse (the dual frame) at a batch of points."""

    def __init__(self, matrix: Jet):
        self.matrix = matrix
        det = np.linalg.det(np.moveaxis(matrix.value, (0, 1), (-2, -1)))
        self.min_abs_det = float(np.min(np.abs(det))) if det.size else 0.0
        if self.min_abs_det < 1e-12:
            raise DegenerateCoframeError(
                f"theta ^ theta1 ^ theta1bar vanishes (min |det| = {self.min_abs_det:.3e})"
            )
        # columns of the inverse are the frame vectors ell, e1, e1bar
        self.inverse = jet_matrix_inverse(matrix)
        self.order = matrix.order

    def vector(self, direction: int) -> Jet:
        """Coordinate components (x, y, u) of a frame vector."""
        return self.inverse[:, direction]

    def derive(self, f: Jet, direction: int) -> Jet:
        """Directional derivative of a jet along a frame vector."""
        grad = stack([f.diff(v) for v in range(BASE_VARS)])
        return jeinsum("i,i->", self.inverse[:, direction], grad)

    def derive_all(self, f: Jet) -> Jet:
        grad = stack([f.diff(v) for v in range(BASE_VARS)])
        return jeinsum("iB,i->B", self.inverse, grad)

    def exterior(self, row: Jet) -> Jet:
        """Frame components ``d(alpha)(e_B, e_C)`` of the exterior derivative of a one-form.

        ``row`` holds the (x, y, u) components of the one-form.
        """
        partial = stack([stack([row[j].diff(i) for j in range(BASE_VARS)]) for i in range(BASE_VARS)])
        curl = partial - partial.moveaxis(0, 1)
        return jeinsum("iB,jC,ij->BC", self.inverse, self.inverse, curl)


# ---------------------------------------------------------------------------
# Tensor-density fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityField:
    """Trivialised component of a tensor density of weight ``(w, wbar)``."""

    fn: Jet
    w: float = 0.0
    wbar: float = 0.0
    charge: int = 0

    def _check(self, other: "DensityField") -> None:
        if (self.w, self.wbar, self.charge) != (other.w, other.wbar, other.charge):
            raise ValueError(
                f"incompatible fields: {(self.w, self.wbar, self.charge)} vs "
                f"{(other.w, other.wbar, other.charge)}"
            )

    def __add__(self, other: "DensityField") -> "DensityField":
        self._check(other)
        return replace(self, fn=self.fn + other.fn)

    def __sub__(self, other: "DensityField") -> "DensityField":
        self._check(other)
        return replace(self, fn=self.fn - other.fn)

    def __neg__(self) -> "DensityField":
        return replace(self, fn=-self.fn)

    def __mul__(self, other) -> "DensityField":
        if isinstance(other, DensityField):
            return DensityField(
                self.fn * other.fn,
                self.w + other.w,
                self.wbar + other.wbar,
                self.charge + other.charge,
            )
        return replace(self, fn=self.fn * other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "DensityField":
        if isinstance(other, DensityField):
            return self * other.inverse()
        return replace(self, fn=self.fn / other)

    def inverse(self) -> "DensityField":
        return DensityField(jet_apply("recip", self.fn), -self.w, -self.wbar, -self.charge)

    def conj(self) -> "DensityField":
        return DensityField(self.fn.conj(), self.wbar, self.w, -self.charge)

    def with_weights(self, w: float, wbar: float) -> "DensityField":
        return replace(self, w=w, wbar=wbar)

    @property
    def value(self) -> np.ndarray:
        return self.fn.value


# ---------------------------------------------------------------------------
# Webster data
# ---------------------------------------------------------------------------


@dataclass
class WebsterData:
    """Connection data of a unitary adapted coframe at a batch of points.

    Jets are stored at the highest order available: the connection at
    ``order - 1``, the Schouten scalar at ``order - 2``, ``T`` at ``order - 3``
    and the Cartan tensor at ``order - 4``.
    """

    frame: Frame
    gamma: Jet  # (3, *batch): Gamma along ell, e1, e1bar
    torsion_up: Jet  # A^1_{1bar}
    levi: Jet
    schouten: Optional[Jet] = None
    torsion_T: Optional[Jet] = None
    cartan: Optional[Jet] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def gamma0(self) -> Jet:
        return self.gamma[0]

    @property
    def gamma1(self) -> Jet:
        return self.gamma[1]

    @property
    def gamma1bar(self) -> Jet:
        return self.gamma[2]

    @property
    def torsionA(self) -> Jet:
        """``A_11`` (both indices down, unitary Levi form)."""
        return self.torsion_up.conj()

    @property
    def schoutenP(self) -> Optional[Jet]:
        return self.schouten

    @property
    def torsionT(self) -> Optional[Jet]:
        return self.torsion_T

    @property
    def cartanQ(self) -> Optional[Jet]:
        return self.cartan

    # fields --------------------------------------------------------------
    def A(self) -> DensityField:
        return DensityField(self.torsionA, 0, 0, 2)

    def P(self) -> DensityField:
        return DensityField(self.schouten, 0, 0, 0)

    def T(self) -> DensityField:
        return DensityField(self.torsion_T, 0, 0, 1)

    def Q(self) -> DensityField:
        return DensityField(self.cartan, 0, 0, 2)

    def sigma(self, order: Optional[int] = None) -> DensityField:
        """The canonical density ``(theta ^ theta1)^(-1/3)``: weight (1, 0), fn = 1."""
        order = self.frame.order if order is None else order
        shape = self.gamma.shape[1:]
        return DensityField(Jet.constant(np.ones(shape), order), 1, 0, 0)

    def lift(self, fn: Jet, w: float = 0, wbar: float = 0, charge: int = 0) -> DensityField:
        return DensityField(fn, w, wbar, charge)


@dataclass(frozen=True)
class Gauge:
    """Gauge one-form ``xi = xi1 theta1 + conj(xi1) theta1bar + xi0 theta``.

    As a partial gauge (``full=False``) only the (1,0) direction is shifted;
    the full gauge shifts every direction by ``-i (w - wbar) xi(e)``.
    """

    xi1: Jet
    xi0: Optional[Jet] = None
    full: bool = False

    def component(self, direction: int) -> Optional[Jet]:
        if direction == E1:
            return self.xi1
        if not self.full:
            return None
        if direction == E1BAR:
            return self.xi1.conj()
        return self.xi0


@dataclass
class GaugedConnection:
    """A Webster connection together with a gauge; see :func:`cov_deriv`."""

    base: WebsterData
    gauge: Gauge

    def D(self, f: "DensityField", direction: int) -> "DensityField":
        return cov_deriv(f, direction, self.base, self.gauge)


def cov_deriv(
    f: DensityField, direction: int, web: WebsterData, gauge: "Gauge | Jet | None" = None
) -> DensityField:
    """Covariant derivative of a tensor-density component along a frame direction.

    ``gauge`` may be a bare jet (the partial (1,0) gauge ``xi_1``) or a
    :class:`Gauge`; gauged directions pick up ``-i (w - wbar) xi(e) f``.
    """
    frame = web.frame
    coupling = (f.w - f.wbar) / 3.0 - f.charge
    out = frame.derive(f.fn, direction)
    if coupling != 0:
        out = out + web.gamma[direction] * f.fn * coupling
    if gauge is not None and f.w != f.wbar:
        shift = gauge.component(direction) if isinstance(gauge, Gauge) else (gauge if direction == E1 else None)
        if shift is not None:
            out = out - shift * f.fn * (1j * (f.w - f.wbar))
    new_charge = f.charge + (1 if direction == E1 else -1 if direction == E1BAR else 0)
    return DensityField(out, f.w, f.wbar, new_charge)


def D0(f: DensityField, web: WebsterData, gauge=None) -> DensityField:
    return cov_deriv(f, ELL, web, gauge)


def D1(f: DensityField, web: WebsterData, gauge=None) -> DensityField:
    return cov_deriv(f, E1, web, gauge)


def D1b(f: DensityField, web: WebsterData, gauge=None) -> DensityField:
    return cov_deriv(f, E1BAR, web, gauge)


def _raw_connection(frame: Frame) -> tuple[Jet, Jet, Jet, dict]:
    M = frame.matrix
    dtheta = frame.exterior(M[0])
    dtheta1 = frame.exterior(M[1])
    c01, c01b, c11b = dtheta1[ELL, E1], dtheta1[ELL, E1BAR], dtheta1[E1, E1BAR]
    levi = dtheta[E1, E1BAR] * (-1j)
    gamma = stack([-c01, -c11b.conj(), c11b])
    diag = {
        "dtheta_theta_terms": float(
            max(np.max(np.abs(dtheta[ELL, E1].value)), np.max(np.abs(dtheta[ELL, E1BAR].value)))
        ),
        "levi_imag": float(np.max(np.abs(levi.value.imag))),
        "levi_min": float(np.min(levi.value.real)),
    }
    return gamma, c01b, levi, diag


def webster_connection(
    cf: BaseCoframe,
    points: np.ndarray,
    order: int,
    tol: float = 1e-8,
    check: bool = True,
    upto: str = "cartan",
) -> WebsterData:
    """Extract ``Gamma, A, P, T, Q`` from a unitary adapted coframe.

    The coframe is evaluated at jet ``order``; derived quantities lose
    one order per derivative (see :class:`WebsterData`).  ``upto`` is one of
    ``connection``, ``schouten``, ``cartan``.
    """
    level = {"connection": 1, "schouten": 2, "cartan": 4}[upto]
    frame = cf.frame(points, order)
    gamma, torsion_up, levi, diag = _raw_connection(frame)
    web = WebsterData(frame, gamma, torsion_up, levi, diagnostics=diag)
    diag["gamma0_real"] = float(np.max(np.abs(gamma[0].value.real)))
    diag["levi_deviation"] = float(np.max(np.abs(levi.value - 1)))
    if check and diag["levi_deviation"] > max(tol, 1e-7):
        raise InconsistentCoframeError(
            f"coframe is not unitary (|h - 1| = {diag['levi_deviation']:.3e}); unitarize first"
        )
    if order >= 2 and level >= 2:
        web.schouten = schouten_from_commutator(web, tol if check else None)
    if order >= 3 and level >= 4:
        P, A = web.P(), web.A()
        web.torsion_T = ((D1(P, web) - D1b(A, web) * 1j) * (1.0 / 3.0)).fn
    if order >= 4 and level >= 4:
        A, P, T = web.A(), web.P(), web.T()
        web.cartan = (D0(A, web) * 1j - D1(T, web) * 2j + P * A * 2.0).fn
    return web


def schouten_from_commutator(web: WebsterData, tol: Optional[float] = 1e-8) -> Jet:
    """Webster-Schouten scalar from the (1,0)/(0,1) commutator on the canonical density.

    ``P = (3/4) sigma^-1 [ (D1 D1b - D1b D1) sigma + i D0 sigma ]``; the
    imaginary part must vanish.
    """
    sigma = web.sigma()
    comm = D1(D1b(sigma, web), web) - D1b(D1(sigma, web), web) + D0(sigma, web) * 1j
    P = comm.fn * 0.75
    imag = float(np.max(np.abs(P.value.imag)))
    web.diagnostics["schouten_imag"] = imag
    if tol is not None and imag > max(tol, 1e-7) * max(1.0, float(np.max(np.abs(P.value)))):
        raise InconsistentCoframeError(f"Schouten scalar has imaginary part {imag:.3e}")
    return P.real


def commutator_residuals(f: DensityField, web: WebsterData) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of the two density commutator identities (values at the points)."""
    dw = f.w - f.wbar
    lhs1 = D1(D1b(f, web), web) - D1b(D1(f, web), web)
    rhs1 = web.P() * f * (4.0 / 3.0 * dw) - D0(f, web) * 1j
    A = web.A()
    lhs2 = D1(D0(f, web), web) - D0(D1(f, web), web)
    rhs2 = D1b(A, web) * f * (dw / 3.0) + A * D1b(f, web)
    return (lhs1.fn - rhs1.fn).value, (lhs2.fn - rhs2.fn).value


def structure_residual(web: WebsterData) -> float:
    """Max deviation of ``theta1 ^ Gamma + A^1_1bar theta ^ theta1bar`` from ``d theta1``.

    Both sides are compared in coordinate components.
    """
    M = web.frame.matrix
    theta, theta1, theta1b = M[0], M[1], M[2]
    order = web.gamma.order
    gamma_form = jeinsum("B,Bi->i", web.gamma, M)

    def wedge(a: Jet, b: Jet) -> Jet:
        return jeinsum("i,j->ij", a, b) - jeinsum("i,j->ij", b, a)

    rebuilt = wedge(theta1, gamma_form) + wedge(theta, theta1b) * web.torsion_up
    partial = stack([stack([M[1][j].diff(i) for j in range(BASE_VARS)]) for i in range(BASE_VARS)])
    direct = partial.moveaxis(0, 1) - partial  # (d theta1)_{ij} = d_i a_j - d_j a_i
    direct = direct.moveaxis(0, 1)
    diff = rebuilt.truncate(min(order, direct.order)) - direct.truncate(min(order, direct.order))
    return float(np.max(np.abs(diff.coeffs)))


def gauge_curvature(
    web: WebsterData, xi1: DensityField, xi0: DensityField
) -> tuple[DensityField, DensityField]:
    """Components ``F_{1 1bar}`` and ``F_{0 1}`` of ``d xi`` for ``xi = xi1 theta1 + c.c. + xi0 theta``."""
    xi1b = xi1.conj()
    F11b = (D1(xi1b, web) - D1b(xi1, web) + xi0 * 1j) * 0.5
    A_mixed = web.A()  # A^{1bar}_1 equals A_11 in a unitary frame
    F01 = (D0(xi1, web) - D1(xi0, web) + xi1b * A_mixed) * 0.5
    return F11b, F01


# ---------------------------------------------------------------------------
# Validation, unitarization and contact rescaling
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    passed: bool
    residual: float
    min_abs_det: float
    levi_min: float
    levi_max: float
    theta_imag: float
    failures: list[str]

    def raise_if_failed(self) -> None:
        if not self.passed:
            raise InconsistentCoframeError("; ".join(self.failures))


def validate_adapted(cf: BaseCoframe, points: np.ndarray, tol: float = 1e-9) -> ValidationReport:
    """Check ``d theta = i h theta1 ^ theta1bar`` with ``h > 0`` at the sample points."""
    frame = cf.frame(points, 1)
    M = frame.matrix
    dtheta = frame.exterior(M[0])
    theta_terms = max(
        float(np.max(np.abs(dtheta[ELL, E1].value))), float(np.max(np.abs(dtheta[ELL, E1BAR].value)))
    )
    levi = (dtheta[E1, E1BAR] * (-1j)).value
    theta_imag = float(np.max(np.abs(M[0].value.imag)))
    failures = []
    residual = max(theta_terms, float(np.max(np.abs(levi.imag))))
    if residual > tol:
        failures.append(f"d theta has theta-terms or non-real Levi factor ({residual:.3e} > {tol:g})")
    if theta_imag > tol:
        failures.append(f"theta is not real ({theta_imag:.3e})")
    if np.min(np.abs(levi)) <= tol:
        failures.append("d theta vanishes on H: contact condition violated")
    elif np.min(levi.real) <= 0:
        failures.append("Levi factor is not positive")
    return ValidationReport(
        not failures,
        residual,
        frame.min_abs_det,
        float(np.min(levi.real)),
        float(np.max(levi.real)),
        theta_imag,
        failures,
    )


def levi_factor(cf: BaseCoframe, points: np.ndarray, order: int) -> Jet:
    """Levi factor ``h`` (jet of order ``order``) from a coframe evaluated one order higher."""
    frame = cf.frame(points, order + 1)
    dtheta = frame.exterior(frame.matrix[0])
    return dtheta[E1, E1BAR] * (-1j)


def unitarize(cf: BaseCoframe) -> BaseCoframe:
    """Replace ``theta1`` by ``h^(1/2) theta1`` so that the Levi factor is one."""

    def components(points: np.ndarray, order: int) -> Jet:
        h = levi_factor(cf, points, order)
        if np.any(h.value.real <= 0):
            raise SignatureError("Levi factor is not positive; cannot unitarize")
        root = jet_apply("sqrt", h.real)
        comp = cf.components(points, order)
        return stack([comp[0], comp[1] * root])

    return BaseCoframe(components, cf.label + "/unitary")


def rescaled_coframe(cf: BaseCoframe, f: FieldFn) -> BaseCoframe:
    """Coframe for ``e^f theta``: ``theta1 + i Upsilon^1 theta`` scaled by ``e^(f/2)``.

    ``cf`` must be unitary; ``Upsilon^1 = e1bar(f)``.
    """

    def components(points: np.ndarray, order: int) -> Jet:
        frame = cf.frame(points, order)
        fj = f(points, order + 1).real
        ups_up = frame.derive(fj, E1BAR)
        comp = cf.components(points, order)
        theta, theta1 = comp[0], comp[1]
        ef = jet_apply("exp", fj.truncate(order))
        half = jet_apply("exp", fj.truncate(order) * 0.5)
        return stack([theta * ef, (theta1 + theta * ups_up * 1j) * half])

    return BaseCoframe(components, cf.label + "/rescaled")


@dataclass
class RescalingPrediction:
    torsionA: Jet
    schouten: Jet
    cartan: Optional[Jet]


def density_rescale_factor(fj: Jet, w: float, wbar: float, lower: int = 0) -> Jet:
    """Factor gained by a unitary-frame component under ``theta -> e^f theta``.

    The canonical density of the rescaled unitary coframe is ``e^(-f/2) sigma``,
    so a ``(w, wbar)`` density gains ``e^((w + wbar) f / 2)``; each lower
    frame index (net of upper ones) adds ``e^(-f/2)``.
    """
    return jet_apply("exp", fj.real * ((w + wbar - lower) / 2.0))


def predict_rescaled(web: WebsterData, fj: Jet) -> RescalingPrediction:
    """Transformation-law predictions for ``(A, P, Q)`` after ``theta -> e^f theta``.

    ``fj`` is the jet of ``f`` at the same points and the predictions refer
    to the unitarized rescaled frame: ``A_11`` and ``P`` gain ``e^(-f)`` on top
    of the inhomogeneous terms, and the invariant ``Q_11`` of weight
    ``(-1, -1)`` gains ``e^(-2f)``.
    """
    f = DensityField(fj.real, 0, 0, 0)
    ups1 = D1(f, web)  # Upsilon_1
    ups1b = D1b(f, web)  # Upsilon_1bar = Upsilon^1
    A = web.A()
    shrink = density_rescale_factor(fj, 0, 0, 2)
    A_hat = (A + D1(ups1, web) * 1j - ups1 * ups1 * 1j).fn * shrink
    div = D1b(ups1, web) + D1(ups1b, web)  # nabla^a Upsilon_a + nabla_a Upsilon^a
    P_hat = (web.P() - div * 0.5 - ups1 * ups1b * 0.5).fn * shrink
    Q_hat = None
    if web.cartan is not None:
        Q_hat = web.cartan * density_rescale_factor(fj, -1, -1, 2)
    return RescalingPrediction(A_hat, P_hat, Q_hat)


def rescale_contact(
    cf: BaseCoframe, f: FieldFn
) -> tuple[BaseCoframe, Callable[[np.ndarray, int], RescalingPrediction]]:
    """The rescaled unitary coframe and a predictor for its Webster data.

    ``predictor(points, order)`` evaluates the old coframe at ``order + 2`` and
    returns ``(A, P)`` predictions at ``order`` and ``Q`` at ``order - 2``.
    """

    def predictor(points: np.ndarray, order: int) -> RescalingPrediction:
        web = webster_connection(cf, points, order + 2)
        return predict_rescaled(web, f(points, order + 2))

    return rescaled_coframe(cf, f), predictor


# ---------------------------------------------------------------------------
# Webster-Weyl and gauged second-order residuals
# ---------------------------------------------------------------------------


def webster_weyl_residual(lam: DensityField, web: WebsterData) -> DensityField:
    """``nabla_1 lambda_1 - i lambda_1^2 - A_11`` for a (1,0)-form component."""
    if lam.charge != 1:
        raise ValueError("lambda must carry one lower (1,0) index")
    return D1(lam, web) - lam * lam * 1j - web.A()


def gauged_second_order_residual(sigma: DensityField, web: WebsterData, gauge: Optional[Jet]) -> DensityField:
    """``check-nabla_1 check-nabla_1 sigma + i A_11 sigma`` for the gauged partial connection."""
    first = D1(sigma, web, gauge)
    return D1(first, web, gauge) + web.A() * sigma * 1j


def lambda_from_density(sigma: DensityField, web: WebsterData, gauge: Optional[Jet] = None) -> DensityField:
    """``i sigma^-1 check-nabla_1 sigma``, weight (0,0) with one lower (1,0) index."""
    lam = D1(sigma, web, gauge) / sigma * 1j
    return replace(lam, w=0.0, wbar=0.0)


# ---------------------------------------------------------------------------
# Second-kind coframes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SecondKindCoframe:
    """A coframe ``(omega, omega1)`` dual to a frame with ``[f1, f1bar] = -i f0``."""

    components: Callable[[np.ndarray, int], Jet]
    label: str = "second-kind"

    def as_coframe(self) -> BaseCoframe:
        return BaseCoframe(self.components, self.label)

    def gamma_hat(self, points: np.ndarray, order: int) -> Jet:
        """``Gamma_1`` read off ``d omega = i omega1 ^ omega1bar + omega ^ (Gamma_1 omega1 + c.c.)``."""
        frame = self.as_coframe().frame(points, order + 1)
        domega = frame.exterior(frame.matrix[0])
        return domega[ELL, E1]

    def structure_residual(self, points: np.ndarray) -> float:
        frame = self.as_coframe().frame(points, 1)
        M = frame.matrix
        domega = frame.exterior(M[0])
        domega1 = frame.exterior(M[1])
        res = [
            np.abs(domega[E1, E1BAR].value - 1j),
            np.abs(domega1[E1, E1BAR].value),
            # Gamma_1bar must be the conjugate of Gamma_1
            np.abs(domega[ELL, E1BAR].value - domega[ELL, E1].value.conj()),
        ]
        return float(max(np.max(r) for r in res))

    def frame_bracket_residual(self, points: np.ndarray) -> float:
        """``[f1, f1bar] + i f0`` computed from the coordinate vector fields."""
        frame = self.as_coframe().frame(points, 2)
        f0, f1, f1b = frame.vector(ELL), frame.vector(E1), frame.vector(E1BAR)
        bracket = _lie_bracket(f1, f1b)
        return float(np.max(np.abs((bracket + f0.truncate(bracket.order) * 1j).value)))


def _lie_bracket(X: Jet, Y: Jet) -> Jet:
    """Lie bracket of coordinate vector fields on the base (components x, y, u)."""
    dY = stack([Y.diff(i) for i in range(BASE_VARS)])  # dY[i, j] = d_i Y^j
    dX = stack([X.diff(i) for i in range(BASE_VARS)])
    return jeinsum("i,ij->j", X, dY) - jeinsum("i,ij->j", Y, dX)


def second_kind_to_first(skc: SecondKindCoframe) -> BaseCoframe:
    """``theta = omega``, ``theta1 = omega1 - i conj(Gamma_1) omega``."""

    def components(points: np.ndarray, order: int) -> Jet:
        gamma = skc.gamma_hat(points, order)
        comp = skc.components(points, order)
        return stack([comp[0], comp[1] - comp[0] * gamma.conj() * 1j])

    return BaseCoframe(components, skc.label + "/first-kind")


def first_kind_to_second(cf: BaseCoframe) -> SecondKindCoframe:
    """Inverse map: ``omega = theta``, ``omega1 = theta1 + i G1b theta`` (unitary ``cf``)."""

    def components(points: np.ndarray, order: int) -> Jet:
        frame = cf.frame(points, order + 1)
        gamma, _, _, _ = _raw_connection(frame)
        comp = cf.components(points, order)
        return stack([comp[0], comp[1] + comp[0] * gamma[E1BAR] * 1j])

    return SecondKindCoframe(components, cf.label + "/second-kind")


def canonical_section(cf: BaseCoframe, points: np.ndarray) -> np.ndarray:
    """Coordinate components of ``theta ^ theta1`` (an antisymmetric 3x3 array per point)."""
    comp = cf.components(points, 0).value
    a, b = comp[0], comp[1]
    return np.einsum("i...,j...->ij...", a, b) - np.einsum("i...,j...->ij...", b, a)

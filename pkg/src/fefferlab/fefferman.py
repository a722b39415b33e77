"""Perturbed Fefferman metrics on the chart ``R^3 x S^1`` with fibre angle ``phi``.

The metric is ``g = 2 (theta (x) lambda + lambda (x) theta) + theta1 (x) theta1bar + theta1bar (x) theta1``
with ``lambda = dphi + (i/3) Gamma - (1/3) P theta + xi``; ``Gamma`` is the
Webster connection form of the unitary coframe and ``xi`` the perturbation
one-form built from its Fourier coefficients.  Coefficients are given in the
trivialisation by the canonical density of the coframe, so the weighted
(bold) coefficients coincide numerically with the plain ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .cr_geometry import (
    BaseCoframe,
    DensityField,
    FieldFn,
    WebsterData,
    as_field,
    webster_connection,
)
from .jets import Jet, jeinsum, jet_apply, jet_coordinate, jet_matrix_inverse, stack

PHI = 3


class SignatureError(ValueError):
    pass


class ConjugateModeError(ValueError):
    pass


@dataclass(frozen=True)
class PerturbationData:
    """Fourier coefficients of the perturbation one-form.

    ``alpha[k]`` is the coefficient of ``e^(ik phi)`` in ``xi_1``; ``zero[k]`` the
    coefficient in ``xi_0``.  Only one of ``zero[k]`` and ``zero[-k]`` may be
    given; the other is its conjugate.  ``zero[0]`` must be real.
    """

    alpha: Mapping[int, FieldFn] = field(default_factory=dict)
    zero: Mapping[int, FieldFn] = field(default_factory=dict)
    sources: Optional[dict] = None

    def __post_init__(self) -> None:
        for k in self.zero:
            if k != 0 and -k in self.zero:
                raise ConjugateModeError(
                    f"xi_0 modes {k} and {-k} are conjugate; give only one of them"
                )

    @classmethod
    def build(cls, alpha: Mapping[int, object] = None, zero: Mapping[int, object] = None) -> "PerturbationData":
        alpha = {int(k): as_field(v) for k, v in (alpha or {}).items()}
        zero = {int(k): as_field(v) for k, v in (zero or {}).items()}
        return cls(alpha, zero)

    @property
    def is_zero(self) -> bool:
        return not self.alpha and not self.zero

    def alpha_support(self) -> list[int]:
        return sorted(self.alpha)

    def zero_support(self) -> list[int]:
        ks = set(self.zero) | {-k for k in self.zero}
        return sorted(ks)

    def alpha_mode(self, k: int, points: np.ndarray, order: int) -> Jet:
        if k in self.alpha:
            return self.alpha[k](points, order)
        return Jet.zeros(points.shape[1:], order)

    def zero_mode(self, k: int, points: np.ndarray, order: int) -> Jet:
        """``xi_0^(k)`` with conjugate pairing applied."""
        if k == 0:
            if 0 in self.zero:
                return self.zero[0](points, order).real
            return Jet.zeros(points.shape[1:], order)
        if k in self.zero:
            return self.zero[k](points, order)
        if -k in self.zero:
            return self.zero[-k](points, order).conj()
        return Jet.zeros(points.shape[1:], order)

    def reality_residual(self, points: np.ndarray) -> float:
        if 0 not in self.zero:
            return 0.0
        return float(np.max(np.abs(self.zero[0](points, 0).value.imag)))

    def with_modes(self, alpha: Mapping[int, object] = None, zero: Mapping[int, object] = None) -> "PerturbationData":
        """A copy with some modes replaced (``None`` values remove a mode)."""
        new_alpha = dict(self.alpha)
        new_zero = dict(self.zero)
        for src, dst in ((alpha or {}, new_alpha), (zero or {}, new_zero)):
            for k, v in src.items():
                if v is None:
                    dst.pop(int(k), None)
                else:
                    if dst is new_zero and -int(k) in dst and k != 0:
                        dst.pop(-int(k))
                    dst[int(k)] = as_field(v)
        return PerturbationData(new_alpha, new_zero)


def fourier_factor(points: np.ndarray, k: int, order: int) -> Jet:
    """Jet of ``e^(ik phi)``."""
    phi = jet_coordinate(points, PHI, max(order, 1))
    return jet_apply("exp", phi * (1j * k)).truncate(order)


@dataclass
class BaseJets:
    """Base quantities evaluated once per distinct base point."""

    web: WebsterData
    coframe: Jet  # (3, 3, Bu): theta, theta1, theta1bar rows in dx, dy, du
    gamma: Jet  # (3, Bu)
    schouten: Jet  # (Bu,)
    inverse: np.ndarray  # maps each requested point to its base point
    base_points: np.ndarray


def _unique_base(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    base = np.array(points[:3], dtype=float)
    uniq, inv = np.unique(base.T, axis=0, return_inverse=True)
    base_pts = np.vstack([uniq.T, np.zeros((1, uniq.shape[0]))])
    return base_pts, np.asarray(inv).reshape(-1)


def _take(j: Jet, inv: np.ndarray) -> Jet:
    return Jet(j.coeffs[..., inv], j.order)


@dataclass
class NullFrame:
    k: Jet
    l: Jet
    m: Jet

    @property
    def mbar(self) -> Jet:
        return self.m.conj()


class FeffermanChart:
    """A (perturbed) Fefferman metric over a unitary adapted coframe."""

    def __init__(
        self,
        coframe: BaseCoframe,
        pert: Optional[PerturbationData] = None,
        label: str = "",
    ):
        self.coframe = coframe
        self.pert = pert or PerturbationData()
        self.label = label or coframe.label

    # -- base data -----------------------------------------------------
    def base_jets(self, points: np.ndarray, order: int) -> BaseJets:
        """Webster data with the Schouten scalar known to ``order``."""
        base_pts, inv = _unique_base(points)
        web = webster_connection(self.coframe, base_pts, order + 2, upto="schouten")
        M = web.frame.matrix.truncate(order)
        return BaseJets(web, M, web.gamma.truncate(order), web.schouten.truncate(order), inv, base_pts)

    def xi_components(self, points: np.ndarray, order: int, base: Optional[BaseJets] = None) -> tuple[Jet, Jet]:
        """``(xi_1(phi), xi_0(phi))`` as jets at the requested points."""
        if base is None:
            base = self.base_jets(points, order)
        inv, bp = base.inverse, base.base_points
        shape = points.shape[1:]
        xi1 = Jet.zeros(shape, order)
        for k in self.pert.alpha_support():
            coeff = _take(self.pert.alpha_mode(k, bp, order), inv)
            xi1 = xi1 + coeff * fourier_factor(points, k, order) if k else xi1 + coeff
        xi0 = Jet.zeros(shape, order)
        for k in self.pert.zero_support():
            coeff = _take(self.pert.zero_mode(k, bp, order), inv)
            xi0 = xi0 + coeff * fourier_factor(points, k, order) if k else xi0 + coeff
        return xi1, xi0

    def lambda_components(self, points: np.ndarray, order: int, base: Optional[BaseJets] = None) -> tuple[Jet, Jet]:
        """Frame components ``(lambda_1, lambda_0)`` of the one-form ``lambda``."""
        if base is None:
            base = self.base_jets(points, order)
        gamma = _take(base.gamma, base.inverse)
        P = _take(base.schouten, base.inverse)
        xi1, xi0 = self.xi_components(points, order, base)
        lam1 = gamma[1] * (1j / 3.0) + xi1
        lam0 = gamma[0] * (1j / 3.0) - P * (1.0 / 3.0) + xi0
        return lam1, lam0

    def coframe4(self, points: np.ndarray, order: int, base: Optional[BaseJets] = None) -> Jet:
        """Rows ``theta, theta1, theta1bar, lambda`` in coordinates ``(x, y, u, phi)``."""
        if base is None:
            base = self.base_jets(points, order)
        M = _take(base.coframe, base.inverse)  # (3, 3, B)
        lam1, lam0 = self.lambda_components(points, order, base)
        lam_base = M[1] * lam1 + M[2] * lam1.conj() + M[0] * lam0  # (3, B)
        shape = points.shape[1:]
        zero = Jet.zeros(shape, order)
        one = Jet.constant(np.ones(shape), order)
        rows = [stack([M[r][0], M[r][1], M[r][2], zero]) for r in range(3)]
        rows.append(stack([lam_base[0], lam_base[1], lam_base[2], one]))
        return stack(rows)

    def metric(self, points: np.ndarray, order: int) -> Jet:
        C = self.coframe4(points, order)
        return metric_from_coframe(C)

    __call__ = metric

    def null_frame(self, points: np.ndarray, order: int) -> NullFrame:
        return adapted_null_frame(self, points, order)

    # -- diagnostics ---------------------------------------------------
    def signature_check(self, points: np.ndarray) -> dict:
        g = self.metric(points, 0).value.real
        eig = np.linalg.eigvalsh(np.moveaxis(g, (0, 1), (-2, -1)))
        negatives = np.sum(eig < 0, axis=-1)
        det = np.linalg.det(np.moveaxis(g, (0, 1), (-2, -1)))
        bad = np.nonzero(negatives != 1)[0]
        report = {
            "lorentzian": bool(bad.size == 0),
            "max_det": float(np.max(det)),
            "worst_point": points[:, bad[0]].tolist() if bad.size else None,
        }
        return report

    def require_lorentzian(self, points: np.ndarray) -> None:
        rep = self.signature_check(points)
        if not rep["lorentzian"]:
            raise SignatureError(f"metric is not Lorentzian at {rep['worst_point']}")


def metric_from_coframe(C: Jet) -> Jet:
    theta, th1, th1b, lam = C[0], C[1], C[2], C[3]
    outer = lambda a, b: jeinsum("i,j->ij", a, b)  # noqa: E731
    sym = outer(theta, lam)
    g = (sym + sym.moveaxis(0, 1)) * 2.0
    h = outer(th1, th1b)
    return g + h + h.moveaxis(0, 1)


def fefferman_metric(coframe: BaseCoframe) -> FeffermanChart:
    """The unperturbed Fefferman metric of a unitary adapted coframe."""
    return FeffermanChart(coframe, PerturbationData(), coframe.label)


def perturbed_metric(chart: FeffermanChart, pert: PerturbationData) -> FeffermanChart:
    return FeffermanChart(chart.coframe, pert, chart.label)


def perturbation_form(chart: FeffermanChart, points: np.ndarray) -> dict[str, np.ndarray]:
    """Frame components of the perturbation one-form at the points (no ``dphi`` term)."""
    xi1, xi0 = chart.xi_components(points, 0)
    return {"xi1": xi1.value, "xi1bar": xi1.value.conj(), "xi0": xi0.value, "dphi": np.zeros(points.shape[1:])}


def adapted_null_frame(chart: FeffermanChart, points: np.ndarray, order: int) -> NullFrame:
    """Dual frame of ``(theta, theta1, theta1bar, lambda)``: ``k = d/dphi``, ``l = ell/2``, ``m = e1``."""
    C = chart.coframe4(points, order)
    det = np.linalg.det(np.moveaxis(C.value, (0, 1), (-2, -1)))
    if np.any(np.abs(det) < 1e-12):
        raise SignatureError("degenerate coframe at a sample point")
    E = jet_matrix_inverse(C)
    return NullFrame(k=E[:, 3], l=E[:, 0] * 0.5, m=E[:, 1])


def frame_pairings(g: Jet, frame: NullFrame) -> dict[str, float]:
    """Residuals of the null-frame normalisation (all should vanish)."""

    def pair(a: Jet, b: Jet) -> np.ndarray:
        return jeinsum("ij,i,j->", g, a, b).value

    k, l, m, mb = frame.k, frame.l, frame.m, frame.mbar
    return {
        "g(k,l)-1": float(np.max(np.abs(pair(k, l) - 1))),
        "g(m,mbar)-1": float(np.max(np.abs(pair(m, mb) - 1))),
        "g(k,k)": float(np.max(np.abs(pair(k, k)))),
        "g(l,l)": float(np.max(np.abs(pair(l, l)))),
        "g(m,m)": float(np.max(np.abs(pair(m, m)))),
        "g(k,m)": float(np.max(np.abs(pair(k, m)))),
        "g(l,m)": float(np.max(np.abs(pair(l, m)))),
    }


def optical_checks(chart: FeffermanChart, points: np.ndarray) -> dict[str, float]:
    """Geodesy, shear, expansion and twist of ``k = d/dphi`` at the sample points."""
    from .curvature import curvature_jets

    g = chart.metric(points, 1)
    cj = curvature_jets(g, "christoffel")
    frame = adapted_null_frame(chart, points, 0)
    acc = cj.christoffel.value[:, PHI, PHI]  # (nabla_k k)^a = Gamma^a_{phi phi}
    lie = g.diff(PHI).value  # (L_k g)_ij since k is a coordinate field
    m = frame.m.value
    shear = np.einsum("ij...,i...,j...->...", lie, m, m)
    expansion = np.einsum("ij...,i...,j...->...", lie, m, m.conj())
    C = chart.coframe4(points, 1)
    theta = C[0]
    dtheta = stack([stack([theta[j].diff(i) for j in range(4)]) for i in range(4)])
    dkappa = (dtheta - dtheta.moveaxis(0, 1)).value * 2.0  # d(2 theta)_{ij}
    twist = np.einsum("ij...,i...,j...->...", dkappa, m, m.conj())
    return {
        "geodesic": float(np.max(np.abs(acc))),
        "shear": float(np.max(np.abs(shear))),
        "expansion": float(np.max(np.abs(expansion))),
        "min_twist": float(np.min(np.abs(twist))),
    }


def rescaled_pert(coframe: BaseCoframe, pert: PerturbationData, f: FieldFn) -> PerturbationData:
    """The same perturbation one-form written in the coframe of ``e^f theta``.

    The rescaled frame is ``e1^ = e^(-f/2) e1`` and
    ``ell^ = e^(-f) (ell - i Upsilon^1 e1 + i conj(Upsilon^1) e1bar)`` with
    ``Upsilon^1 = e1bar(f)``, so ``xi_1`` gains ``e^(-f/2)`` and ``xi_0``
    mixes in the (1,0) and (0,1) parts mode by mode.  The fibre angle is
    unchanged because ``theta^ ^ theta1^`` differs from ``theta ^ theta1`` by a
    positive factor.
    """
    from .cr_geometry import E1BAR

    def factors(points: np.ndarray, order: int):
        fj = f(points, order + 1).real
        ups = coframe.frame(points, order + 1).derive(fj, E1BAR).truncate(order)
        fj = fj.truncate(order)
        return jet_apply("exp", fj * -0.5), jet_apply("exp", -fj), ups

    def alpha_fn(k: int) -> FieldFn:
        def fn(points: np.ndarray, order: int) -> Jet:
            half, _, _ = factors(points, order)
            return pert.alpha_mode(k, points, order) * half

        return fn

    def zero_fn(k: int) -> FieldFn:
        def fn(points: np.ndarray, order: int) -> Jet:
            _, full, ups = factors(points, order)
            a = pert.alpha_mode(k, points, order)
            abar = pert.alpha_mode(-k, points, order).conj()
            out = pert.zero_mode(k, points, order) - ups * a * 1j + ups.conj() * abar * 1j
            return out * full

        return fn

    ks = {abs(k) for k in pert.zero_support()} | {abs(k) for k in pert.alpha_support()}
    alpha = {k: alpha_fn(k) for k in pert.alpha_support()}
    zero = {k: zero_fn(k) for k in sorted(ks)}
    return PerturbationData(alpha, zero)


def rescaled_chart(chart: FeffermanChart, f: FieldFn) -> FeffermanChart:
    """The chart for the contact form ``e^f theta``; its metric is ``e^f`` times the original."""
    from .cr_geometry import rescaled_coframe

    return FeffermanChart(
        rescaled_coframe(chart.coframe, f), rescaled_pert(chart.coframe, chart.pert, f), chart.label + "/rescaled"
    )

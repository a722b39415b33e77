"""Pseudo-Riemannian curvature of a four-dimensional chart, computed on jets.

Sign conventions:

* ``2 nabla_[a nabla_b] alpha_c = -R_ab^d_c alpha_d``, which makes
  ``R_ab^d_c = R^d_{cab}`` in the usual (MTW) notation with
  ``R^d_{cab} = d_a Gamma^d_{bc} - d_b Gamma^d_{ac} + Gamma^d_{ae} Gamma^e_{bc} - Gamma^d_{be} Gamma^e_{ac}``.
* The stored ``riemann[a, b, c, d]`` is the fully lowered ``R_abcd``; in the
  MTW notation this is the same array, so spheres have positive Ricci.
* ``Ric_ab = R_ca^c_b``; ``P_ab = (Ric_ab - Sc g_ab / 6) / 2``;
  ``R_abcd = W_abcd + g_ac P_bd - g_ad P_bc - g_bc P_ad + g_bd P_ac``.
* Cotton ``C_abc = nabla_b P_ca - nabla_c P_ba`` and Bach
  ``B_ab = -nabla^c C_abc + P^cd W_acbd``.

Every tensor jet has its tensor axes first and the batch axes last.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .jets import Jet, JetOrderError, jeinsum, jet_matrix_inverse, stack

MetricField = Callable[[np.ndarray, int], Jet]

DIM = 4


class SingularMetricError(ValueError):
    pass


def _grad(t: Jet) -> Jet:
    """Partial derivatives with the derivative index first."""
    return stack([t.diff(v) for v in range(DIM)])


def covariant_derivative(t: Jet, christoffel: Jet, rank: int) -> Jet:
    """``nabla_e T_{a1..ar}`` for a covariant tensor jet; the derivative index comes first."""
    out = _grad(t)
    letters = "abcdfhij"[:rank]
    for slot in range(rank):
        src = letters[:slot] + "s" + letters[slot + 1 :]
        # Gamma^s_{e a_slot} T_{.. s ..}
        term = jeinsum(f"se{letters[slot]},{src}->e{letters}", christoffel, t)
        out = out - term
    return out


@dataclass
class CurvatureJets:
    """Curvature tensors as jets; each carries the highest order the input allows."""

    metric: Jet
    inverse: Jet
    christoffel: Jet
    riemann: Optional[Jet] = None
    ricci: Optional[Jet] = None
    scalar: Optional[Jet] = None
    schouten: Optional[Jet] = None
    schouten_scalar: Optional[Jet] = None
    weyl: Optional[Jet] = None
    cotton: Optional[Jet] = None
    bach: Optional[Jet] = None


def curvature_jets(g: Jet, upto: str = "bach") -> CurvatureJets:
    """Curvature of a metric jet ``g`` of shape ``(4, 4, *batch)``.

    ``upto`` is one of ``christoffel``, ``riemann``, ``cotton``, ``bach``; the
    metric order must be at least 1, 2, 3, 4 respectively.
    """
    needed = {"christoffel": 1, "riemann": 2, "cotton": 3, "bach": 4}[upto]
    if g.order < needed:
        raise JetOrderError(f"{upto} needs a metric jet of order >= {needed}, got {g.order}")
    value = np.moveaxis(g.value, (0, 1), (-2, -1))
    det = np.linalg.det(value)
    if np.any(np.abs(det) < 1e-12):
        raise SingularMetricError(f"metric is singular (min |det| = {np.min(np.abs(det)):.3e})")
    ginv = jet_matrix_inverse(g)
    dg = _grad(g)  # dg[c, a, b] = d_c g_ab
    lower = (dg.moveaxis(0, 2) + dg.moveaxis(0, 1) - dg) * 0.5
    # lower[a, b, c] = (d_b g_ac + d_c g_ab - d_a g_bc) / 2
    gamma = jeinsum("ad,dbc->abc", ginv, lower)
    out = CurvatureJets(g, ginv, gamma)
    if upto == "christoffel":
        return out

    dgam = _grad(gamma)  # dgam[a, d, b, c] = d_a Gamma^d_bc
    quad = jeinsum("dae,ebc->dcab", gamma, gamma)
    up = (
        jeinsum("adbc->dcab", dgam)
        - jeinsum("bdac->dcab", dgam)
        + quad
        - jeinsum("dcab->dcba", quad)
    )
    lowered = jeinsum("de,ecab->dcab", g, up)  # R_{dcab}
    R = jeinsum("dcab->abdc", lowered)
    ric = jeinsum("ac,abcd->bd", ginv, R)
    sc = jeinsum("ab,ab->", ginv, ric)
    gt = g.truncate(ric.order)
    P = (ric - gt * sc * (1.0 / 6.0)) * 0.5
    gP = jeinsum("ac,bd->abcd", gt, P)
    decomposition = gP - jeinsum("abcd->abdc", gP) - jeinsum("abcd->bacd", gP) + jeinsum("abcd->badc", gP)
    W = R - decomposition
    out.riemann, out.ricci, out.scalar = R, ric, sc
    out.schouten, out.schouten_scalar, out.weyl = P, sc * (1.0 / 6.0), W
    if upto == "riemann":
        return out

    dP = covariant_derivative(P, gamma, 2)  # dP[e, a, b] = nabla_e P_ab
    C = jeinsum("bca->abc", dP) - jeinsum("cba->abc", dP)
    out.cotton = C
    if upto == "cotton":
        return out

    dC = covariant_derivative(C, gamma, 3)  # dC[e, a, b, c]
    div = jeinsum("ec,eabc->ab", ginv, dC)
    Pup = jeinsum("ce,df,ef->cd", ginv, ginv, P)
    out.bach = -div + jeinsum("cd,acbd->ab", Pup, W)
    return out


@dataclass
class CurvaturePack:
    """Point values (order-0 parts) of the curvature tensors, batch axes last."""

    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    schouten: np.ndarray
    schoutenScalar: np.ndarray
    weyl: np.ndarray
    cotton: Optional[np.ndarray]
    bach: Optional[np.ndarray]
    jets: CurvatureJets

    @classmethod
    def from_jets(cls, cj: CurvatureJets) -> "CurvaturePack":
        def val(j):
            return None if j is None else j.value

        return cls(
            val(cj.christoffel),
            val(cj.riemann),
            val(cj.ricci),
            val(cj.scalar),
            val(cj.schouten),
            val(cj.schouten_scalar),
            val(cj.weyl),
            val(cj.cotton),
            val(cj.bach),
            cj,
        )


def curvature_at(metric: MetricField, points: np.ndarray, order: int = 4) -> CurvaturePack:
    """Curvature pack at a batch of points from a metric jet of the given order."""
    upto = {2: "riemann", 3: "cotton"}.get(order, "bach" if order >= 4 else None)
    if upto is None:
        raise JetOrderError("curvature needs a metric jet of order >= 2")
    return CurvaturePack.from_jets(curvature_jets(metric(points, order), upto))


def symmetry_residuals(pack: CurvaturePack) -> dict[str, float]:
    """Algebraic identities every curvature pack must satisfy (max absolute residuals)."""
    R, W, g = pack.riemann, pack.weyl, pack.jets.metric.value
    ginv = pack.jets.inverse.value
    res = {
        "riemann_antisym_ab": np.max(np.abs(R + np.einsum("abcd...->bacd...", R))),
        "riemann_antisym_cd": np.max(np.abs(R + np.einsum("abcd...->abdc...", R))),
        "riemann_pair_sym": np.max(np.abs(R - np.einsum("abcd...->cdab...", R))),
        "first_bianchi": np.max(
            np.abs(R + np.einsum("abcd...->bcad...", R) + np.einsum("abcd...->cabd...", R))
        ),
        "weyl_trace": np.max(np.abs(np.einsum("ac...,abcd...->bd...", ginv, W))),
        "ricci_schouten": np.max(
            np.abs(pack.ricci - 2 * pack.schouten - pack.schoutenScalar[None, None] * g)
        ),
    }
    if pack.bach is not None:
        B = pack.bach
        res["bach_symmetric"] = np.max(np.abs(B - np.einsum("ab...->ba...", B)))
        res["bach_trace"] = np.max(np.abs(np.einsum("ab...,ab...->...", ginv, B)))
    return {k: float(v) for k, v in res.items()}


def bianchi_contracted_check(metric: MetricField, points: np.ndarray) -> float:
    """Max ``|C_abc - nabla^d W_dabc|`` (both sides computed from an order-3 metric jet)."""
    cj = curvature_jets(metric(points, 3), "cotton")
    dW = covariant_derivative(cj.weyl, cj.christoffel, 4)  # dW[e, d, a, b, c]
    div = jeinsum("ed,edabc->abc", cj.inverse, dW)
    return float(np.max(np.abs((cj.cotton - div).value)))


def conformal_metric(metric: MetricField, f: Callable[[np.ndarray, int], Jet]) -> MetricField:
    """``e^(2f) g`` as a metric field."""
    from .jets import jet_apply

    def fn(points: np.ndarray, order: int) -> Jet:
        return metric(points, order) * jet_apply("exp", f(points, order).real * 2.0)

    return fn


@dataclass
class ConformalReport:
    schouten: float
    schouten_scalar: float
    cotton: float
    weyl: float
    bach: float

    @property
    def worst(self) -> float:
        return max(self.schouten, self.schouten_scalar, self.cotton, self.weyl, self.bach)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) / scale


def conformal_transform_check(
    metric: MetricField, f: Callable[[np.ndarray, int], Jet], points: np.ndarray
) -> ConformalReport:
    """Compare the curvature of ``e^(2f) g`` with the conformal transformation laws.

    Schouten, Schouten scalar and Cotton follow the displayed laws with
    ``Upsilon = df``; lower-index Weyl scales by ``e^(2f)``; lower-index Bach
    by ``e^(-2f)`` in four dimensions.
    """
    base = curvature_jets(metric(points, 4), "bach")
    hat = curvature_jets(conformal_metric(metric, f)(points, 4), "bach")
    fj = f(points, 5).real
    ups = _grad(fj)  # Upsilon_a (order 4)
    gamma = base.christoffel
    dups = covariant_derivative(ups, gamma, 1)  # nabla_a Upsilon_b, order 3
    ginv = base.inverse
    ups_up = jeinsum("ab,b->a", ginv, ups)
    norm = jeinsum("a,a->", ups_up, ups)
    g = base.metric
    P_pred = base.schouten - dups + jeinsum("a,b->ab", ups, ups) - g * norm * 0.5
    e2f = np.exp(2 * fj.value.real)
    div = jeinsum("ab,ab->", ginv, dups)
    Psc_pred = (base.schouten_scalar - div - norm).value / e2f
    C_pred = base.cotton + jeinsum("d,dabc->abc", ups_up, base.weyl)
    return ConformalReport(
        schouten=_rel(hat.schouten.value, P_pred.value),
        schouten_scalar=_rel(hat.schouten_scalar.value, Psc_pred),
        cotton=_rel(hat.cotton.value, C_pred.value),
        weyl=_rel(hat.weyl.value, base.weyl.value * e2f),
        bach=_rel(hat.bach.value, base.bach.value / e2f),
    )


def metric_from_expressions(entries: dict[tuple[int, int], str]) -> MetricField:
    """Symmetric metric field from expressions for the entries ``(a, b)`` with ``a <= b``."""
    from .exprlang import eval_jet, parse

    parsed = {tuple(sorted(k)): parse(v) for k, v in entries.items()}

    def fn(points: np.ndarray, order: int) -> Jet:
        zero = Jet.zeros(points.shape[1:], order)
        rows = []
        for a in range(DIM):
            row = []
            for b in range(DIM):
                key = (min(a, b), max(a, b))
                row.append(eval_jet(parsed[key], points, order) if key in parsed else zero)
            rows.append(stack(row))
        return stack(rows)

    return fn

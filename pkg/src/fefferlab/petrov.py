"""Weyl scalars against the adapted null frame, principal null directions and Petrov types.

The frame is the one built by :func:`fefferlab.fefferman.adapted_null_frame`:
``k = d/dphi``, ``l = ell/2`` and ``m = e1``, normalised so that
``g(k, l) = g(m, mbar) = 1``.  The slot assignment below was fixed by
requiring that a chart whose only perturbation is ``xi_0^(4)`` reproduces
``Psi_2^(-4) = 4 xi_0^(-4)`` together with the closed forms for
``Psi_3^(-4)`` and ``Psi_4^(+-4)``:

* ``Psi_0 = W(m, k, m, k)``
* ``Psi_1 = W(k, m, k, l)``
* ``Psi_2 = W(m, l, mbar, k)``
* ``Psi_3 = W(l, m, l, k)``
* ``Psi_4 = W(m, l, m, l)``
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .curvature import curvature_jets
from .fefferman import PHI, FeffermanChart, NullFrame, adapted_null_frame
from .jets import Jet, jeinsum, jet_apply


class NotAlgebraicallySpecialError(ValueError):
    """``Psi_0`` or ``Psi_1`` is not negligible, so ``k`` is not a repeated PND."""


class PreconditionError(ValueError):
    pass


class PetrovType(str, enum.Enum):
    I = "I"
    II = "II"
    D = "D"
    III = "III"
    N = "N"
    O = "O"


@dataclass
class NPScalars:
    """Weyl scalars at a batch of points (arrays over the batch)."""

    psi0: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray
    psi3: np.ndarray
    psi4: np.ndarray

    def as_tuple(self) -> tuple[np.ndarray, ...]:
        return (self.psi0, self.psi1, self.psi2, self.psi3, self.psi4)

    def at(self, index) -> "NPScalars":
        return NPScalars(*(np.asarray(p)[index] for p in self.as_tuple()))

    def scaled(self, c: complex) -> "NPScalars":
        return NPScalars(*(p * c for p in self.as_tuple()))

    def discriminant(self) -> np.ndarray:
        """``4 Psi_3^2 - 6 Psi_2 Psi_4``; vanishes for type D (given ``Psi_0 = Psi_1 = 0``)."""
        return 4 * self.psi3**2 - 6 * self.psi2 * self.psi4


# ---------------------------------------------------------------------------
# Frame components
# ---------------------------------------------------------------------------


def _contract(W: Jet, a: Jet, b: Jet, c: Jet, d: Jet) -> Jet:
    return jeinsum("abcd,a,b,c,d->", W, a, b, c, d)


def psi_from_weyl(W: Jet, frame: NullFrame) -> dict[str, Jet]:
    """NP scalars as jets from a Weyl jet and a null-frame jet of the same order."""
    n = min(W.order, frame.k.order)
    W = W.truncate(n)
    k, l, m = frame.k.truncate(n), frame.l.truncate(n), frame.m.truncate(n)
    mb = m.conj()
    return {
        "psi0": _contract(W, m, k, m, k),
        "psi1": _contract(W, k, m, k, l),
        "psi2": _contract(W, m, l, mb, k),
        "psi3": _contract(W, l, m, l, k),
        "psi4": _contract(W, m, l, m, l),
    }


@dataclass
class WeylFrameData:
    """Weyl tensor, null frame and (optionally) Bach tensor jets at a batch of points."""

    weyl: Jet
    frame: NullFrame
    bach: Optional[Jet] = None

    def psi(self) -> dict[str, Jet]:
        return psi_from_weyl(self.weyl, self.frame)


def weyl_frame_data(chart: FeffermanChart, points: np.ndarray, order: int = 0, bach: bool = False) -> WeylFrameData:
    """Curvature jets of the chart's metric such that the Weyl jet has the requested order."""
    metric_order = order + (4 if bach else 2)
    g = chart.metric(points, metric_order)
    cj = curvature_jets(g, "bach" if bach else "riemann")
    frame = adapted_null_frame(chart, points, order)
    return WeylFrameData(cj.weyl.truncate(order), frame, cj.bach)


def np_scalar_jets(chart: FeffermanChart, points: np.ndarray, order: int) -> dict[str, Jet]:
    """NP scalars as jets of the given order (derivatives in every chart variable)."""
    return weyl_frame_data(chart, points, order).psi()


def np_scalars(chart: FeffermanChart, points: np.ndarray) -> NPScalars:
    """NP scalars at each point of a ``(4, B)`` point array."""
    psi = np_scalar_jets(chart, points, 0)
    return NPScalars(*(psi[f"psi{i}"].value for i in range(5)))


# ---------------------------------------------------------------------------
# Principal null directions
# ---------------------------------------------------------------------------


@dataclass
class PNDResult:
    level: int
    holds: bool
    residual: float
    weyl_scale: float


def _weyl_in_frame(W: np.ndarray, frame: NullFrame) -> np.ndarray:
    """Components ``W(e_a, e_b, e_c, e_d)`` on the complex frame ``(k, l, m, mbar)``."""
    E = np.stack([frame.k.value, frame.l.value, frame.m.value, frame.m.value.conj()])  # (4 legs, 4 comps, B)
    return np.einsum("abcd...,ia...,jb...,kc...,ld...->ijkl...", W, E, E, E, E)


_K, _L, _M, _MB = 0, 1, 2, 3
_SCREEN = (_M, _MB)
_PERP = (_K, _M, _MB)
_ALL = (_K, _L, _M, _MB)


def pnd_residuals(W: np.ndarray, frame: NullFrame) -> tuple[list[float], float]:
    """Residuals of the four degeneracy conditions on ``k`` and the Weyl scale."""
    F = np.abs(_weyl_in_frame(W, frame))
    levels = [
        max(F[_K, v, _K, w].max() for v in _SCREEN for w in _SCREEN),
        max(F[_K, v, _K, x].max() for v in _SCREEN for x in _ALL),
        max(F[_K, v, w, x].max() for v in _PERP for w in _PERP for x in _ALL),
        float(F[_K].max()),
    ]
    return [float(r) for r in levels], float(F.max())


def pnd_degeneracy(
    chart: FeffermanChart, points: np.ndarray, level: int, tol: float = 1e-8
) -> PNDResult:
    """Whether ``k = d/dphi`` satisfies the level-``level`` degeneracy condition at all points.

    Level 1: ``W(k,v,k,v) = 0``; level 2: ``W(k,v,k,.) = 0``; level 3:
    ``W(k,v,w,.) = 0``; level 4: ``W(k,.,.,.) = 0``, with ``v, w`` ranging over
    ``k``-perpendicular vectors.  The residual is compared with
    ``tol * max(1, |W|)``.
    """
    if level not in (1, 2, 3, 4):
        raise ValueError("level must be 1, 2, 3 or 4")
    data = weyl_frame_data(chart, points, 0)
    residuals, scale = pnd_residuals(data.weyl.value, data.frame)
    res = residuals[level - 1]
    return PNDResult(level, res <= tol * max(1.0, scale), res, scale)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


def classify(np_scalars_: NPScalars, tol: float = 1e-8) -> PetrovType:
    """Petrov type at one point, assuming ``k`` is a repeated PND.

    Smallness is relative to ``max |Psi_i|`` (the type is projective); when
    every scalar is below ``tol`` in absolute terms the type is O.
    """
    psi = [complex(np.asarray(p).reshape(())) for p in np_scalars_.as_tuple()]
    scale = max(abs(p) for p in psi)
    if scale <= tol:
        return PetrovType.O
    zero = lambda z: abs(z) <= tol * scale  # noqa: E731
    if not (zero(psi[0]) and zero(psi[1])):
        raise NotAlgebraicallySpecialError(
            f"|Psi_0| = {abs(psi[0]):.3e}, |Psi_1| = {abs(psi[1]):.3e} relative to {scale:.3e}"
        )
    p2, p3, p4 = psi[2], psi[3], psi[4]
    if zero(p2):
        if zero(p3):
            return PetrovType.N
        return PetrovType.III
    if abs(4 * p3 * p3 - 6 * p2 * p4) <= tol * scale * scale:
        return PetrovType.D
    return PetrovType.II


def classify_points(scalars: NPScalars, tol: float = 1e-8) -> list[PetrovType]:
    n = np.asarray(scalars.psi2).size
    return [classify(scalars.at(i), tol) for i in range(n)]


HYSTERESIS = 10.0


def same_type_with_hysteresis(
    first: NPScalars, second: NPScalars, tol: float = 1e-8, band: float = HYSTERESIS
) -> bool:
    """Whether two scalar sets share a Petrov type up to a tolerance band.

    The type of ``first`` at ``tol`` must be reproduced by ``second`` at one of
    ``tol / band``, ``tol`` or ``tol * band``; this absorbs points that sit
    right at a threshold.
    """
    target = classify(first, tol)
    return any(classify(second, t) == target for t in (tol / band, tol, tol * band))


# ---------------------------------------------------------------------------
# Bach identity
# ---------------------------------------------------------------------------


@dataclass
class BachIdentityReport:
    residual: float
    bach_kk: float
    pnd_level2: float
    weyl_scale: float


def bach_psi2_identity(
    chart: FeffermanChart, points: np.ndarray, precondition_tol: float = 1e-7
) -> BachIdentityReport:
    """Compare ``B(k,k)`` with ``(Psi2'' + c.c.) + 6i (Psi2' - c.c.) - 8 (Psi2 + c.c.)``.

    Dots are ``phi``-derivatives read off a second-order jet of ``Psi_2``.
    Raises :class:`PreconditionError` if ``k`` is not a repeated PND.
    """
    data = weyl_frame_data(chart, points, 2, bach=True)
    residuals, scale = pnd_residuals(data.weyl.value, NullFrame(*(v.truncate(0) for v in (data.frame.k, data.frame.l, data.frame.m))))
    if residuals[1] > precondition_tol * max(1.0, scale):
        raise PreconditionError(f"k is not a repeated PND (residual {residuals[1]:.3e})")
    psi2 = data.psi()["psi2"]
    d1 = psi2.diff(PHI)
    d2 = d1.diff(PHI)
    p0, p1, p2 = psi2.value, d1.value, d2.value
    rhs = (p2 + p2.conj()) + 6j * (p1 - p1.conj()) - 8 * (p0 + p0.conj())
    k = data.frame.k.value
    bkk = np.einsum("ab...,a...,b...->...", data.bach.value, k, k)
    return BachIdentityReport(
        residual=float(np.max(np.abs(bkk - rhs))),
        bach_kk=float(np.max(np.abs(bkk))),
        pnd_level2=residuals[1],
        weyl_scale=scale,
    )


# ---------------------------------------------------------------------------
# Behaviour under a change of contact form
# ---------------------------------------------------------------------------


@dataclass
class CovarianceReport:
    psi2: float
    psi3: float
    psi4: float
    discriminant: float
    metric_conformal: float

    @property
    def worst(self) -> float:
        return max(self.psi2, self.psi3, self.psi4, self.discriminant, self.metric_conformal)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(1e-300, np.max(np.abs(b)), 1e-12))


def psi_covariance_check(
    chart: FeffermanChart, f: Callable[[np.ndarray, int], Jet], points: np.ndarray
) -> CovarianceReport:
    """Recompute the NP scalars for the contact form ``e^f theta`` and compare with the transformation law.

    The rescaled chart uses the coframe ``(e^f theta, e^(f/2)(theta1 + i Upsilon^1 theta))``
    and the same perturbation one-form re-expressed in that coframe; its
    metric is ``e^f`` times the original, so the lower-index Weyl tensor
    gains ``e^f``.  With ``Upsilon_1 = e1(f)`` the frame scalars obey
    ``Psi2^ = e^(-f) Psi2``,
    ``Psi3^ = e^(-3f/2) (Psi3 - (3/2) i Upsilon_1 Psi2)`` and
    ``Psi4^ = e^(-2f) (Psi4 - 2 i Upsilon_1 Psi3 - (3/2) Upsilon_1^2 Psi2)``;
    the powers of ``e^f`` are exactly those that make the weighted
    coefficients ``sigma^(k/2-1) sigmabar^(-k/2-1) Psi^(k)`` transform by the
    ``Upsilon`` terms alone.  ``4 Psi3^2 - 6 Psi2 Psi4`` gains ``e^(-3f)``.
    """
    from .fefferman import rescaled_chart

    hat = rescaled_chart(chart, f)
    g = chart.metric(points, 0).value
    g_hat = hat.metric(points, 0).value
    fj = f(points, 1).real
    ef = np.exp(fj.value)
    metric_res = _rel(g_hat, g * ef)

    base = np_scalars(chart, points)
    new = np_scalars(hat, points)
    frame = chart.coframe.frame(points, 1)
    ups = frame.derive(fj, 1).value  # e1(f)
    p2, p3, p4 = base.psi2, base.psi3, base.psi4
    pred2 = p2 / ef
    pred3 = (p3 - 1.5j * ups * p2) / ef**1.5
    pred4 = (p4 - 2j * ups * p3 - 1.5 * ups**2 * p2) / ef**2
    scale = max(1e-12, float(np.max(np.abs(np.stack([p2, p3, p4])))))
    disc = float(np.max(np.abs(new.discriminant() - base.discriminant() / ef**3))) / scale**2
    return CovarianceReport(
        psi2=float(np.max(np.abs(new.psi2 - pred2))) / scale,
        psi3=float(np.max(np.abs(new.psi3 - pred3))) / scale,
        psi4=float(np.max(np.abs(new.psi4 - pred4))) / scale,
        discriminant=disc,
        metric_conformal=metric_res,
    )

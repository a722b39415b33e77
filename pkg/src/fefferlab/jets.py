"""Truncated multivariate Taylor jets in the chart variables (x, y, u, phi).

A :class:`Jet` stores the Taylor coefficients of a complex field around a
base point, i.e. mixed partial derivatives divided by the multi-factorial,
for every multi-index of total degree at most ``order``.  Coefficients are
kept densely in graded order (all degree-0 terms, then degree 1, ...), so
truncating a jet to a lower order is a slice.

Every jet carries an arbitrary trailing ``shape``.  The leading tensor axes
are used for components (e.g. a 4x4 metric) and the last axes for a batch
of base points, which lets a whole sample set go through one arithmetic
call.  Arithmetic between jets of different orders truncates to the lower
one, which is how lost derivative orders propagate automatically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

NVARS = 4
VARIABLES = ("x", "y", "u", "phi")
MAX_ORDER = 10

# Bytes of complex scratch per chunk in the Cauchy-product kernel.
_CHUNK_BUDGET = 16_000_000


class SingularInputError(ValueError):
    """Raised when an elementary function is applied outside its domain."""


class JetOrderError(ValueError):
    """Raised when a derivative or coefficient exceeds the available order."""


MultiIndex = tuple[int, int, int, int]


def _graded_indices(order: int) -> list[MultiIndex]:
    out: list[MultiIndex] = []
    for degree in range(order + 1):
        block = []
        for a in range(degree, -1, -1):
            for b in range(degree - a, -1, -1):
                for c in range(degree - a - b, -1, -1):
                    block.append((a, b, c, degree - a - b - c))
        out.extend(block)
    return out


def n_coeffs(order: int) -> int:
    """Number of multi-indices of degree at most ``order`` in four variables."""
    return math.comb(order + NVARS, NVARS)


@dataclass(frozen=True)
class _ChunkPlan:
    left: np.ndarray
    right: np.ndarray
    starts: np.ndarray
    targets: np.ndarray


class JetSpace:
    """Index tables shared by all jets of one order."""

    def __init__(self, order: int):
        if not 0 <= order <= MAX_ORDER:
            raise JetOrderError(f"jet order {order} outside 0..{MAX_ORDER}")
        self.order = order
        self.multi = _graded_indices(order)
        self.size = len(self.multi)
        self.index = {m: k for k, m in enumerate(self.multi)}
        self.degree = np.array([sum(m) for m in self.multi])
        self.factorial = np.array(
            [math.prod(math.factorial(e) for e in m) for m in self.multi], dtype=float
        )
        left, right, target = [], [], []
        for i, a in enumerate(self.multi):
            for j, b in enumerate(self.multi):
                s = (a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3])
                k = self.index.get(s)
                if k is not None:
                    left.append(i)
                    right.append(j)
                    target.append(k)
        perm = np.argsort(np.array(target), kind="stable")
        self.pair_left = np.array(left)[perm]
        self.pair_right = np.array(right)[perm]
        self.pair_target = np.array(target)[perm]
        self._plans: dict[int, list[_ChunkPlan]] = {}
        # derivative tables: d/dvar maps order-N coefficients to order N-1
        self.deriv_src: list[np.ndarray] = []
        self.deriv_fac: list[np.ndarray] = []
        if order >= 1:
            lower = _graded_indices(order - 1)
            for var in range(NVARS):
                src, fac = [], []
                for m in lower:
                    up = list(m)
                    up[var] += 1
                    src.append(self.index[tuple(up)])
                    fac.append(up[var])
                self.deriv_src.append(np.array(src))
                self.deriv_fac.append(np.array(fac, dtype=float))

    def plans(self, chunk: int) -> list[_ChunkPlan]:
        """Split the sorted pair list into chunks with local reduce offsets."""
        cached = self._plans.get(chunk)
        if cached is not None:
            return cached
        plans = []
        total = len(self.pair_target)
        for start in range(0, total, chunk):
            sl = slice(start, min(start + chunk, total))
            tgt = self.pair_target[sl]
            boundaries = np.flatnonzero(np.diff(tgt)) + 1
            starts = np.concatenate(([0], boundaries))
            plans.append(
                _ChunkPlan(self.pair_left[sl], self.pair_right[sl], starts, tgt[starts])
            )
        self._plans[chunk] = plans
        return plans


@lru_cache(maxsize=None)
def jet_space(order: int) -> JetSpace:
    return JetSpace(order)


def _as_complex(a) -> np.ndarray:
    return np.asarray(a, dtype=complex)


class Jet:
    """Truncated Taylor expansion of a (tensor- and batch-valued) complex field.

    ``coeffs`` has shape ``(n_coeffs(order), *shape)``.  Jets are treated as
    immutable; every operation returns a new jet.
    """

    __slots__ = ("order", "coeffs")
    __array_priority__ = 100

    def __init__(self, coeffs: np.ndarray, order: int):
        coeffs = _as_complex(coeffs)
        if coeffs.shape[0] != n_coeffs(order):
            raise ValueError(
                f"order {order} needs {n_coeffs(order)} coefficients, got {coeffs.shape[0]}"
            )
        self.order = order
        self.coeffs = coeffs

    # -- construction -------------------------------------------------
    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        value = _as_complex(value)
        coeffs = np.zeros((n_coeffs(order),) + value.shape, dtype=complex)
        coeffs[0] = value
        return cls(coeffs, order)

    @classmethod
    def zeros(cls, shape: Sequence[int], order: int) -> "Jet":
        return cls(np.zeros((n_coeffs(order),) + tuple(shape), dtype=complex), order)

    # -- basic properties ---------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[1:]

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def space(self) -> JetSpace:
        return jet_space(self.order)

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, shape={self.shape})"

    def __getitem__(self, item) -> "Jet":
        if not isinstance(item, tuple):
            item = (item,)
        return Jet(self.coeffs[(slice(None),) + item], self.order)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise JetOrderError(f"cannot raise jet order {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.coeffs[: n_coeffs(order)], order)

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.coeffs.reshape((self.coeffs.shape[0],) + tuple(shape)), self.order)

    def moveaxis(self, src: int, dst: int) -> "Jet":
        src = src + 1 if src >= 0 else src
        dst = dst + 1 if dst >= 0 else dst
        return Jet(np.moveaxis(self.coeffs, src, dst), self.order)

    def conj(self) -> "Jet":
        """Coefficientwise conjugate; valid because all variables are real."""
        return Jet(self.coeffs.conj(), self.order)

    @property
    def real(self) -> "Jet":
        return Jet(self.coeffs.real.astype(complex), self.order)

    @property
    def imag(self) -> "Jet":
        return Jet(self.coeffs.imag.astype(complex), self.order)

    # -- arithmetic -----------------------------------------------------
    def _coerce(self, other) -> "Jet | np.ndarray":
        if isinstance(other, Jet):
            return other
        return _as_complex(other)

    def __add__(self, other) -> "Jet":
        other = self._coerce(other)
        if isinstance(other, Jet):
            a, b = _common(self, other)
            ndim = max(len(a.shape), len(b.shape))
            return Jet(_pad(a, ndim).coeffs + _pad(b, ndim).coeffs, a.order)
        shape = np.broadcast_shapes(self.shape, other.shape)
        coeffs = np.broadcast_to(self.coeffs, (self.coeffs.shape[0],) + shape).copy()
        coeffs[0] += other
        return Jet(coeffs, self.order)

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet(-self.coeffs, self.order)

    def __sub__(self, other) -> "Jet":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        other = self._coerce(other)
        if isinstance(other, Jet):
            return jet_product(self, other)
        shape = np.broadcast_shapes(self.shape, other.shape)
        coeffs = _pad(self, len(shape)).coeffs
        return Jet(coeffs * other, self.order)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        other = self._coerce(other)
        if isinstance(other, Jet):
            return self * jet_apply("recip", other)
        if np.any(other == 0):
            raise SingularInputError("division by zero constant")
        return self * (1.0 / other)

    def __rtruediv__(self, other) -> "Jet":
        return jet_apply("recip", self) * other

    def __pow__(self, exponent: int) -> "Jet":
        if not isinstance(exponent, (int, np.integer)):
            raise TypeError("jets support integer powers only")
        return jet_apply("pow_int", self, int(exponent))

    # -- calculus -------------------------------------------------------
    def diff(self, var: int) -> "Jet":
        """Partial derivative in chart variable ``var``; the order drops by one."""
        if not 0 <= var < NVARS:
            raise ValueError(f"invalid variable index {var}")
        if self.order == 0:
            raise JetOrderError("cannot differentiate an order-0 jet")
        sp = self.space
        fac = sp.deriv_fac[var].reshape((-1,) + (1,) * len(self.shape))
        return Jet(self.coeffs[sp.deriv_src[var]] * fac, self.order - 1)

    def grad(self) -> "Jet":
        """Stack of the four partial derivatives along a new leading tensor axis."""
        parts = [self.diff(v).coeffs for v in range(NVARS)]
        return Jet(np.stack(parts, axis=1), self.order - 1)

    def extract(self, idx: Sequence[int]) -> np.ndarray:
        """Mixed partial derivative: the coefficient times the multi-factorial."""
        idx = tuple(int(i) for i in idx)
        if len(idx) != NVARS or min(idx) < 0:
            raise ValueError(f"bad multi-index {idx}")
        if sum(idx) > self.order:
            raise JetOrderError(f"index degree {sum(idx)} exceeds jet order {self.order}")
        sp = self.space
        k = sp.index[idx]
        return self.coeffs[k] * sp.factorial[k]

    def coefficient(self, idx: Sequence[int]) -> np.ndarray:
        return self.coeffs[self.space.index[tuple(idx)]]


def _common(a: Jet, b: Jet) -> tuple[Jet, Jet]:
    order = min(a.order, b.order)
    return a.truncate(order), b.truncate(order)


def _chunk_for(per_pair: int) -> int:
    return max(1, _CHUNK_BUDGET // max(1, 16 * per_pair))


def jet_product(a: Jet, b: Jet) -> Jet:
    """Cauchy product with broadcasting over the trailing shapes."""
    a, b = _common(a, b)
    ndim = max(len(a.shape), len(b.shape))
    a, b = _pad(a, ndim), _pad(b, ndim)
    return jet_contract(lambda p, q: p * q, a, b, np.broadcast_shapes(a.shape, b.shape))


def _pad(a: Jet, ndim: int) -> Jet:
    """Prepend unit tensor axes so trailing axes align under broadcasting."""
    if len(a.shape) >= ndim:
        return a
    return a.reshape((1,) * (ndim - len(a.shape)) + a.shape)


def jet_contract(
    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray],
    a: Jet,
    b: Jet,
    out_shape: tuple[int, ...],
) -> Jet:
    """Generic bilinear jet product.

    ``kernel`` receives stacks of coefficient pairs ``(P, *a.shape)`` and
    ``(P, *b.shape)`` and must return ``(P, *out_shape)``; the pairs are then
    summed into their target multi-index.
    """
    a, b = _common(a, b)
    sp = a.space
    out = np.zeros((sp.size,) + tuple(out_shape), dtype=complex)
    per_pair = max(int(np.prod(out_shape)), int(np.prod(a.shape)), int(np.prod(b.shape)), 1)
    for plan in sp.plans(_chunk_for(per_pair)):
        prod = kernel(a.coeffs[plan.left], b.coeffs[plan.right])
        out[plan.targets] += np.add.reduceat(prod, plan.starts, axis=0)
    return Jet(out, sp.order)


def jeinsum(subscripts: str, *operands) -> Jet:
    """Einstein summation over tensor axes of jets (and plain arrays).

    Subscripts refer to tensor axes only; any remaining trailing batch axes
    are carried along via an implicit ellipsis.  Example: ``jeinsum('ab,bc->ac', A, B)``.
    """
    ins, out = subscripts.replace(" ", "").split("->")
    terms = ins.split(",")
    if len(terms) != len(operands):
        raise ValueError("subscript count does not match operand count")
    items = list(zip(terms, operands))
    # fold plain arrays into the first jet first (no Cauchy product needed)
    while len(items) > 1:
        (s1, o1), (s2, o2) = items[0], items[1]
        rest = items[2:]
        keep = set(out)
        for s, _ in rest:
            keep.update(s)
        target = "".join(ch for ch in dict.fromkeys(s1 + s2) if ch in keep)
        items = [(target, _einsum_pair(f"{s1},{s2}->{target}", o1, o2))] + rest
    s, o = items[0]
    if s == out:
        return o
    return _einsum_pair(f"{s}->{out}", o, None)


def _einsum_pair(spec: str, a, b):
    ins, out = spec.split("->")
    if b is None:
        sa = ins
        if isinstance(a, Jet):
            return Jet(np.einsum(f"P{sa}...->P{out}...", a.coeffs), a.order)
        return np.einsum(f"{sa}...->{out}...", a)
    sa, sb = ins.split(",")
    if isinstance(a, Jet) and isinstance(b, Jet):
        shape_a = dict(zip(sa, a.shape))
        shape_b = dict(zip(sb, b.shape))
        dims = {**shape_a, **shape_b}
        batch = np.broadcast_shapes(a.shape[len(sa):], b.shape[len(sb):])
        out_shape = tuple(dims[c] for c in out) + batch
        sub = f"P{sa}...,P{sb}...->P{out}..."
        return jet_contract(lambda p, q: np.einsum(sub, p, q), a, b, out_shape)
    if isinstance(a, Jet):
        return Jet(np.einsum(f"P{sa}...,{sb}...->P{out}...", a.coeffs, _as_complex(b)), a.order)
    if isinstance(b, Jet):
        return Jet(np.einsum(f"{sa}...,P{sb}...->P{out}...", _as_complex(a), b.coeffs), b.order)
    return np.einsum(f"{sa}...,{sb}...->{out}...", a, b)


# ---------------------------------------------------------------------------
# Seeds and elementary functions
# ---------------------------------------------------------------------------


def jet_coordinate(point, var: int, order: int) -> Jet:
    """Seed jet of chart coordinate ``var`` at ``point`` (shape (4,) or (4, *batch))."""
    if not isinstance(var, (int, np.integer)) or not 0 <= var < NVARS:
        raise ValueError(f"invalid variable index {var!r}")
    if order < 1:
        raise JetOrderError("coordinate seeds need order >= 1")
    point = np.asarray(point, dtype=float)
    if point.shape[0] != NVARS:
        raise ValueError("points must have four leading components (x, y, u, phi)")
    batch = point.shape[1:]
    coeffs = np.zeros((n_coeffs(order),) + batch, dtype=complex)
    coeffs[0] = point[var]
    unit = [0] * NVARS
    unit[var] = 1
    coeffs[jet_space(order).index[tuple(unit)]] = 1.0
    return Jet(coeffs, order)


def coordinate_seeds(point, order: int) -> tuple[Jet, Jet, Jet, Jet]:
    return tuple(jet_coordinate(point, v, order) for v in range(NVARS))  # type: ignore[return-value]


def _taylor_table(fn: str, a0: np.ndarray, n: int, extra) -> list[np.ndarray]:
    """Univariate Taylor coefficients c_0..c_n of ``fn`` about ``a0``."""
    if fn == "exp":
        e = np.exp(a0)
        return [e / math.factorial(k) for k in range(n + 1)]
    if fn in ("sin", "cos"):
        shift = 0 if fn == "sin" else 1
        s, c = np.sin(a0), np.cos(a0)
        cycle = [s, c, -s, -c]
        return [cycle[(k + shift) % 4] / math.factorial(k) for k in range(n + 1)]
    if fn == "recip":
        _require_nonzero(a0, "recip")
        inv = 1.0 / a0
        return [(-1) ** k * inv ** (k + 1) for k in range(n + 1)]
    if fn == "log":
        _require_nonzero(a0, "log")
        inv = 1.0 / a0
        return [np.log(a0)] + [(-1) ** (k + 1) * inv**k / k for k in range(1, n + 1)]
    if fn == "sqrt":
        _require_nonzero(a0, "sqrt")
        root = np.sqrt(a0)
        inv = 1.0 / a0
        return [math_binom_half(k) * root * inv**k for k in range(n + 1)]
    if fn == "pow_int":
        p = int(extra)
        if p < 0:
            _require_nonzero(a0, "pow_int")
        out = []
        for k in range(n + 1):
            coef = _falling(p, k) / math.factorial(k)
            if coef == 0:
                out.append(np.zeros_like(a0))
            else:
                out.append(coef * a0 ** (p - k) if p - k >= 0 else coef / a0 ** (k - p))
        return out
    raise ValueError(f"unknown elementary function {fn!r}")


def math_binom_half(k: int) -> float:
    """Generalised binomial coefficient C(1/2, k)."""
    out = 1.0
    for j in range(k):
        out *= (0.5 - j) / (j + 1)
    return out


def _falling(p: int, k: int) -> float:
    out = 1.0
    for j in range(k):
        out *= p - j
    return out


def _require_nonzero(a0: np.ndarray, fn: str) -> None:
    if np.any(np.abs(a0) <= 1e-300):
        raise SingularInputError(f"{fn} evaluated at a zero value")


def jet_apply(fn: str, arg: Jet, extra=None) -> Jet:
    """Compose an elementary function with a jet.

    ``fn`` is one of sin, cos, tan, exp, log, sqrt, recip, pow_int (the
    latter takes the integer exponent as ``extra``).
    """
    if fn == "tan":
        return jet_apply("sin", arg) * jet_apply("recip", jet_apply("cos", arg))
    if fn == "pow_int" and int(extra) >= 0:
        return _int_power(arg, int(extra))
    a0 = arg.value
    table = _taylor_table(fn, a0, arg.order, extra)
    delta = Jet(arg.coeffs.copy(), arg.order)
    delta.coeffs[0] = 0.0
    result = Jet.constant(table[0], arg.order)
    power = None
    for k in range(1, arg.order + 1):
        power = delta if power is None else power * delta
        result = result + power * table[k]
    return result


def _int_power(arg: Jet, p: int) -> Jet:
    result = Jet.constant(np.ones(arg.shape), arg.order)
    base = arg
    while p:
        if p & 1:
            result = result * base
        p >>= 1
        if p:
            base = base * base
    return result


def jet_exp(a: Jet) -> Jet:
    return jet_apply("exp", a)


def jet_sqrt(a: Jet) -> Jet:
    return jet_apply("sqrt", a)


def jet_log(a: Jet) -> Jet:
    return jet_apply("log", a)


def jet_sin(a: Jet) -> Jet:
    return jet_apply("sin", a)


def jet_cos(a: Jet) -> Jet:
    return jet_apply("cos", a)


def jet_extract(jet: Jet, idx: Sequence[int]) -> np.ndarray:
    return jet.extract(idx)


# ---------------------------------------------------------------------------
# Linear algebra on jet-valued matrices
# ---------------------------------------------------------------------------


def jet_matrix_inverse(m: Jet) -> Jet:
    """Inverse of a square jet matrix with tensor axes (n, n, *batch).

    The constant part is inverted numerically and the nilpotent remainder is
    summed as a Neumann series, which terminates exactly at the jet order.
    """
    n = m.shape[0]
    if m.shape[1] != n:
        raise ValueError("matrix must be square")
    value = np.moveaxis(m.value, (0, 1), (-2, -1))
    if np.any(np.abs(np.linalg.det(value)) < 1e-14):
        raise SingularInputError("matrix is singular at a base point")
    inv0 = np.moveaxis(np.linalg.inv(value), (-2, -1), (0, 1))
    delta = Jet(m.coeffs.copy(), m.order)
    delta.coeffs[0] = 0.0
    step = -jeinsum("ab,bc->ac", inv0, delta)
    term = Jet.constant(inv0, m.order)
    total = term
    for _ in range(m.order):
        term = jeinsum("ab,bc->ac", step, term)
        total = total + term
    return total


def jet_det3(m: Jet) -> Jet:
    """Determinant of a 3x3 jet matrix (tensor axes first)."""
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def stack(jets: Sequence[Jet], axis: int = 0) -> Jet:
    """Stack jets of equal shape along a new tensor axis."""
    order = min(j.order for j in jets)
    arrays = [j.truncate(order).coeffs for j in jets]
    return Jet(np.stack(arrays, axis=axis + 1), order)


def as_jet(value, order: int, shape: tuple[int, ...] = ()) -> Jet:
    if isinstance(value, Jet):
        return value
    value = np.broadcast_to(_as_complex(value), shape) if shape else _as_complex(value)
    return Jet.constant(value, order)

import numpy as np
import pytest

from conftest import generic_coframe, heisenberg_coframe, sample
from fefferlab.cr_geometry import expr_field
from fefferlab.curvature import (
    bianchi_contracted_check,
    conformal_transform_check,
    curvature_at,
    metric_from_expressions,
    symmetry_residuals,
)
from fefferlab.fefferman import FeffermanChart
from fefferlab.jets import JetOrderError
from oracles import fd_curvature

FLAT = metric_from_expressions({(0, 0): "1", (1, 1): "1", (2, 2): "1", (3, 3): "-1"})
CONF_FLAT = metric_from_expressions(
    {(0, 0): "exp(2*x)", (1, 1): "exp(2*x)", (2, 2): "exp(2*x)", (3, 3): "-exp(2*x)"}
)
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


def test_flat_pack_is_zero():
    pack = curvature_at(FLAT, sample(5), 4)
    for arr in (pack.christoffel, pack.riemann, pack.ricci, pack.weyl, pack.cotton, pack.bach):
        assert np.max(np.abs(arr)) == 0


def test_conformally_flat_has_no_weyl_or_cotton():
    pack = curvature_at(CONF_FLAT, sample(8), 4)
    assert np.max(np.abs(pack.weyl)) <= 1e-12
    assert np.max(np.abs(pack.cotton)) <= 1e-12
    assert np.max(np.abs(pack.riemann)) > 1e-3


def test_heisenberg_fefferman_is_conformally_flat():
    pts = sample(100, seed=11)
    pack = curvature_at(FeffermanChart(heisenberg_coframe()).metric, pts, 2)
    assert np.max(np.abs(pack.weyl)) <= 1e-9


def test_insufficient_order():
    with pytest.raises(JetOrderError):
        curvature_at(FLAT, sample(2), 1)


@pytest.mark.parametrize("metric", [CURVED, FeffermanChart(generic_coframe()).metric])
def test_symmetries(metric):
    pack = curvature_at(metric, sample(6), 4)
    res = symmetry_residuals(pack)
    for name, value in res.items():
        tol = 1e-8 if name.startswith("bach") else 1e-9
        assert value <= tol, name


def test_ricci_from_schouten():
    pack = curvature_at(CURVED, sample(6), 2)
    g = pack.jets.metric.value
    assert np.max(np.abs(pack.ricci - 2 * pack.schouten - pack.schoutenScalar[None, None] * g)) <= 1e-10
    assert np.allclose(pack.schoutenScalar, pack.scalar / 6)


def _numpy_metric(metric):
    return lambda p: metric(np.asarray(p, dtype=float)[:, None], 0).value[..., 0].real


def test_finite_difference_oracle():
    pts = sample(20, seed=5)
    chart = FeffermanChart(generic_coframe())
    for metric in (CURVED, chart.metric):
        pack = curvature_at(metric, pts, 2)
        fn = _numpy_metric(metric)
        for j in range(pts.shape[1]):
            R = fd_curvature.riemann_lowered(fn, pts[:, j])
            ref = np.max(np.abs(R))
            assert np.max(np.abs(pack.riemann[..., j].real - R)) <= 1e-5 * ref


def test_bianchi_contracted():
    pts = sample(6)
    assert bianchi_contracted_check(CURVED, pts) <= 1e-7
    assert bianchi_contracted_check(FLAT, pts) == 0
    assert bianchi_contracted_check(CONF_FLAT, pts) <= 1e-10


def test_conformal_laws():
    pts = sample(5)
    zero = conformal_transform_check(CURVED, expr_field("0"), pts)
    assert zero.worst <= 1e-14
    rep = conformal_transform_check(FeffermanChart(heisenberg_coframe()).metric, expr_field("0.1*x"), pts)
    assert rep.worst <= 1e-7
    rep = conformal_transform_check(CURVED, expr_field("0.1*x+0.2*y*phi"), pts)
    assert rep.worst <= 1e-7

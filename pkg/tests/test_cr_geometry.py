import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import HEIS_THETA1, generic_coframe, heisenberg_coframe, rigid_coframe, sample
from fefferlab.cr_geometry import (
    E1,
    E1BAR,
    ELL,
    BaseCoframe,
    DensityField,
    Gauge,
    SignatureError,
    commutator_residuals,
    cov_deriv,
    density_rescale_factor,
    expr_field,
    first_kind_to_second,
    gauged_second_order_residual,
    canonical_section,
    lambda_from_density,
    levi_factor,
    rescale_contact,
    second_kind_to_first,
    structure_residual,
    unitarize,
    validate_adapted,
    webster_connection,
    webster_weyl_residual,
)
from fefferlab.exprlang import eval_jet, parse


def field(expr, pts, order, w=0.0, wbar=0.0, charge=0):
    return DensityField(eval_jet(parse(expr), pts, order), w, wbar, charge)


def test_heisenberg_is_adapted_with_unit_levi_factor():
    pts = sample(10)
    rep = validate_adapted(heisenberg_coframe(), pts)
    assert rep.passed
    assert rep.levi_min == pytest.approx(1.0) and rep.levi_max == pytest.approx(1.0)


def test_non_contact_coframe_fails():
    cf = BaseCoframe.from_expressions(["0", "0", "1"], HEIS_THETA1)
    rep = validate_adapted(cf, sample(5))
    assert not rep.passed
    assert any("contact" in f for f in rep.failures)


def test_rescaled_coframe_has_levi_factor_exp_f():
    pts = sample(8)
    f = expr_field("0.3*x+0.1*y*u")
    cf, _ = rescale_contact(heisenberg_coframe(), f)
    # before unitarisation the Levi factor of (e^f theta, theta1 + ...) is e^f;
    # the unitarised coframe returned here has factor one.
    rep = validate_adapted(cf, pts)
    assert rep.passed
    assert np.allclose([rep.levi_min, rep.levi_max], 1.0, atol=1e-12)
    raw = BaseCoframe.from_expressions(["-y*exp(0.3*x)", "x*exp(0.3*x)", "exp(0.3*x)"], HEIS_THETA1)
    h = levi_factor(raw, pts, 0).value.real
    # d(e^f theta) on H is e^f d theta, plus the df ^ theta part which drops out
    assert np.allclose(h, np.exp(0.3 * pts[0]), atol=1e-12)


def test_unitarize_scales_theta1():
    pts = sample(6)
    raw = BaseCoframe.from_expressions(["-y*exp(x)", "x*exp(x)", "exp(x)"], HEIS_THETA1)
    uni = unitarize(raw)
    c0, c1 = raw.components(pts, 0).value, uni.components(pts, 0).value
    assert np.allclose(c1[1], c0[1] * np.exp(pts[0] / 2), atol=1e-13)
    assert np.allclose(c1[0], c0[0])
    heis = heisenberg_coframe()
    assert np.allclose(unitarize(heis).components(pts, 0).value, heis.components(pts, 0).value)


def test_negative_levi_factor_is_a_signature_error():
    flipped = BaseCoframe.from_expressions(["y", "-x", "1"], HEIS_THETA1)
    with pytest.raises(SignatureError):
        unitarize(flipped).components(sample(4), 0)


def test_heisenberg_webster_data_vanishes():
    web = webster_connection(heisenberg_coframe(), sample(8), 5)
    for j in (web.gamma, web.torsion_up, web.schouten, web.torsion_T, web.cartan):
        assert np.max(np.abs(j.value)) < 1e-12


@pytest.mark.parametrize("make", [heisenberg_coframe, rigid_coframe, generic_coframe])
def test_structure_round_trip(make):
    web = webster_connection(make(), sample(10), 3, upto="connection")
    assert structure_residual(web) <= 1e-9


def test_connection_preserves_levi_form():
    web = webster_connection(generic_coframe(), sample(10), 3, upto="connection")
    g = web.gamma.value
    assert np.max(np.abs(g[ELL].real)) < 1e-12
    assert np.max(np.abs(g[E1] + g[E1BAR].conj())) < 1e-12


def test_rescaling_prediction_on_heisenberg():
    pts = sample(10)
    f = expr_field("x")
    cf, predictor = rescale_contact(heisenberg_coframe(), f)
    pred = predictor(pts, 2)
    web = webster_connection(cf, pts, 4)
    assert np.max(np.abs(web.torsionA.value - pred.torsionA.value)) <= 1e-8
    assert np.max(np.abs(web.schoutenP.value - pred.schouten.value)) <= 1e-8


def test_rescaling_with_zero_function_is_identity():
    pts = sample(5)
    cf, _ = rescale_contact(rigid_coframe(), expr_field("0"))
    assert np.allclose(cf.components(pts, 2).coeffs, rigid_coframe().components(pts, 2).coeffs, atol=1e-14)


def test_density_factor_convention():
    # rescaling theta by e^f rescales the canonical density by e^(-f/2), so a
    # (w, wbar) component gains e^((w + wbar) f / 2); for (1, -2) that is e^(-f/2)
    fj = eval_jet(parse("0.4"), sample(1), 0)
    assert np.allclose(density_rescale_factor(fj, 1, -2).value, np.exp(-0.2))


def test_covariance_of_torsion_and_schouten_on_generic_coframe():
    pts = sample(10)
    f = expr_field("0.2*x*y+0.1*u")
    base = rigid_coframe()
    cf, predictor = rescale_contact(base, f)
    pred = predictor(pts, 2)
    web = webster_connection(cf, pts, 6)
    rel = lambda a, b: np.max(np.abs(a - b)) / max(1e-300, np.max(np.abs(b)))  # noqa: E731
    assert rel(web.torsionA.value, pred.torsionA.value) <= 1e-7
    assert rel(web.schoutenP.value, pred.schouten.value) <= 1e-7
    # frame components of the Cartan tensor pick up exp(-2 f)
    assert rel(web.cartanQ.value, pred.cartan.value) <= 1e-7


def test_canonical_sigma_is_parallel_on_heisenberg():
    web = webster_connection(heisenberg_coframe(), sample(6), 3)
    sigma = web.sigma()
    for d in (ELL, E1, E1BAR):
        assert np.max(np.abs(cov_deriv(sigma, d, web).value)) == 0


def test_gauge_is_invisible_on_balanced_weights():
    pts = sample(6)
    web = webster_connection(generic_coframe(), pts, 3, upto="connection")
    f = field("x*y+i*u", pts, 2, 1.0, 1.0)
    xi = eval_jet(parse("0.3+0.2*i*x"), pts, 2)
    for gauge in (xi, Gauge(xi, xi * 0.5, True)):
        for d in (ELL, E1, E1BAR):
            a = cov_deriv(f, d, web, gauge).fn.coeffs
            b = cov_deriv(f, d, web).fn.coeffs
            assert np.array_equal(a, b)


WEIGHTS = st.tuples(st.integers(-3, 3), st.integers(-3, 3))


@settings(max_examples=20, deadline=None)
@given(WEIGHTS, st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_commutators_on_random_densities(weights, cs):
    pts = sample(50, seed=4)
    web = _generic_web(pts)
    expr = f"({cs[0]})+({cs[1]})*i*x*y+({cs[2]})*sin(u+x)+({cs[3]})*exp(i*y)"
    f = field(expr, pts, 3, float(weights[0]), float(weights[1]))
    r1, r2 = commutator_residuals(f, web)
    assert np.max(np.abs(r1)) <= 1e-8
    assert np.max(np.abs(r2)) <= 1e-8


_CACHE = {}


def _generic_web(pts):
    key = pts.tobytes()
    if key not in _CACHE:
        _CACHE[key] = webster_connection(generic_coframe(), pts, 4, upto="schouten")
    return _CACHE[key]


def test_heisenberg_cartan_vanishes():
    web = webster_connection(heisenberg_coframe(), sample(8), 5)
    assert np.max(np.abs(web.cartanQ.value)) <= 1e-10


def test_webster_weyl_from_density_on_heisenberg():
    pts = sample(8)
    web = webster_connection(heisenberg_coframe(), pts, 4, upto="connection")
    lam0 = DensityField(eval_jet(parse("0"), pts, 2), 0, 0, 1)
    assert np.max(np.abs(webster_weyl_residual(lam0, web).value)) == 0
    # sigma = 1 + 0.3 z solves the second-order equation; lambda = i sigma^-1 nabla sigma
    sigma = field("1+0.3*(x+i*y)", pts, 3, 1.0, 0.0)
    assert np.max(np.abs(gauged_second_order_residual(sigma, web, None).value)) <= 1e-12
    lam = lambda_from_density(sigma, web)
    assert np.max(np.abs(webster_weyl_residual(lam, web).value)) <= 1e-8


def test_lowering_by_cr_density_preserves_solutions():
    pts = sample(8)
    web = webster_connection(heisenberg_coframe(), pts, 4, upto="connection")
    sigma = field("1+0.3*(x+i*y)", pts, 3, 1.0, 0.0)
    # tau = conj(w) with w = u + i (x^2 + y^2) / 2 is annihilated by nabla_1
    tau = field("u-i*(x^2+y^2)/2+2", pts, 3, 0.0, 0.0)
    assert np.max(np.abs(cov_deriv(tau, E1, web).value)) <= 1e-14
    prod = sigma * tau
    assert np.max(np.abs(gauged_second_order_residual(prod, web, None).value)) <= 1e-12


def test_webster_weyl_covariance():
    pts = sample(8)
    f = expr_field("0.2*x+0.1*y*y")
    cf, _ = rescale_contact(heisenberg_coframe(), f)
    web_hat = webster_connection(cf, pts, 4, upto="connection")
    web = webster_connection(heisenberg_coframe(), pts, 4, upto="connection")
    sigma = field("1+0.3*(x+i*y)", pts, 3, 1.0, 0.0)
    # the same density in the new trivialisation: multiply by e^(f/2)
    sigma_hat = DensityField(sigma.fn * eval_jet(parse("exp(0.1*x+0.05*y*y)"), pts, 3), 1.0, 0.0)
    lam_hat = lambda_from_density(sigma_hat, web_hat)
    assert np.max(np.abs(webster_weyl_residual(lam_hat, web_hat).value)) <= 1e-8
    bad = DensityField(lam_hat.fn + 0.1, 0, 0, 1)
    assert np.max(np.abs(webster_weyl_residual(bad, web_hat).value)) > 1e-3
    assert np.max(np.abs(webster_weyl_residual(lambda_from_density(sigma, web), web).value)) <= 1e-8


def test_second_kind_round_trip():
    pts = sample(8)
    for cf in (heisenberg_coframe(), rigid_coframe(), generic_coframe()):
        skc = first_kind_to_second(cf)
        assert skc.structure_residual(pts) <= 1e-9
        assert skc.frame_bracket_residual(pts) <= 1e-9
        back = second_kind_to_first(skc)
        assert np.max(np.abs(back.components(pts, 1).coeffs - cf.components(pts, 1).coeffs)) <= 1e-9
        assert np.max(np.abs(canonical_section(cf, pts) - canonical_section(skc.as_coframe(), pts))) <= 1e-12


def test_heisenberg_second_kind_is_identity():
    pts = sample(4)
    heis = heisenberg_coframe()
    skc = first_kind_to_second(heis)
    assert np.allclose(skc.components(pts, 1).coeffs, heis.components(pts, 1).coeffs)

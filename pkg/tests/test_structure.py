import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pqbound.energy import DoublePhaseDensity, PowerDensity, SamplingDomain
from pqbound.errors import ConfigError, ExponentError, MissingOverrideError
from pqbound.problem import parse_problem
from pqbound.scenarios import SCENARIOS, load_scenario, scenario_config
from pqbound.structure import (
    IncompleteSpecError,
    ParameterPack,
    RightHandSide,
    VectorField,
    check_comparison,
    check_ellipticity,
    check_rhs_growth,
    check_standard_growth,
    classify,
    delta_exponent,
    gamma_exponent,
    sigma_exponent,
    sobolev_conjugate,
)

DOM = SamplingDomain(n_samples=5000, rng_seed=5)


def laplace_pack(**kw):
    base = dict(n=2, p=2, p_star=4, c1=1, c2=0, c3=1, c4=0, c5=0.5, c6=1, c9=0)
    base.update(kw)
    return ParameterPack(**base)


def test_sobolev_conjugate():
    assert sobolev_conjugate(2, 3) == 6.0
    assert sobolev_conjugate(2, 2, override=5) == 5.0
    with pytest.raises(MissingOverrideError):
        sobolev_conjugate(2, 2)
    with pytest.raises(ExponentError):
        sobolev_conjugate(3, 2, override=2.5)


def test_pack_defaults_and_validation():
    pk = ParameterPack(n=3, p=2, epsilon=0.25)
    assert pk.p_star == 6.0
    assert pk.theta == pytest.approx(5.75)
    assert pk.alpha == pytest.approx(1 - 1 / 6 - 0.25)
    assert pk.r == pytest.approx(2 + 2 / 3 - 0.25)
    assert pk.strict_ok
    assert not ParameterPack(n=3, p=2).strict_ok
    with pytest.raises(ConfigError):
        ParameterPack(n=3, p=2, p_star=5)
    with pytest.raises(ConfigError):
        ParameterPack(n=3, p=2, theta=7)
    with pytest.raises(ExponentError):
        ParameterPack(n=3, p=2, s1=1.5)


def test_pack_config_round_trip():
    pk = laplace_pack(b3="2*x1", s1="inf")
    again = ParameterPack.from_config(pk.to_config())
    assert again.to_config() == pk.to_config()
    with pytest.raises(ConfigError):
        ParameterPack.from_config({"n": 2, "p": 2, "p_star": 4, "bogus": 1})


def test_exponent_values():
    g = ParameterPack(n=3, p=2, alpha=0.5, r=2, theta=3, s=3, s1=3, s3=3)
    assert gamma_exponent(g) == pytest.approx(4 / 3, abs=1e-12)
    assert sigma_exponent(g, "epsilon") == pytest.approx(3.0, abs=1e-12)
    d = ParameterPack(n=4, p=2, s1=4, s3=4)
    assert delta_exponent(d) == pytest.approx(0.5, abs=1e-12)
    assert sigma_exponent(d, "exact") == pytest.approx(2.0, abs=1e-12)
    assert delta_exponent(ParameterPack(n=4, p=2)) == pytest.approx(1.0, abs=1e-12)


def test_exponent_boundaries():
    with pytest.raises(ExponentError):
        ParameterPack(n=4, p=2, s1=2)
    pk = laplace_pack(s3=4 / 3)
    with pytest.raises(ExponentError):
        sigma_exponent(pk, "exact")
    with pytest.raises(ExponentError):
        gamma_exponent(pk)
    near = laplace_pack(s3=4 / 3 * (1 + 1e-6), theta=1, s=1, alpha=0, r=1)
    assert gamma_exponent(near) > 1e5


@settings(max_examples=40, deadline=None)
@given(st.floats(3.0, 50.0), st.floats(3.0, 50.0), st.floats(0.1, 100.0))
def test_exponents_ignore_data_norms(s1, s3, scale):
    pk = ParameterPack(n=3, p=2, s1=s1, s3=s3, epsilon=0.2, b1="1", b3="x1")
    q = pk.with_norms(np.array([[0.5, 0.5, 0.5]]), np.array([scale]))
    assert delta_exponent(pk) == delta_exponent(q)
    for form in ("exact", "epsilon"):
        try:
            a = sigma_exponent(pk, form)
        except ExponentError:
            with pytest.raises(ExponentError):
                sigma_exponent(q, form)
        else:
            assert a == sigma_exponent(q, form)


def test_comparison_identity_and_violation():
    f = PowerDensity(2, coef=0.5)
    pk = laplace_pack()
    assert check_comparison(VectorField().bind(f), f, pk, DOM).passed
    bad = check_comparison(VectorField(scale=2.0).bind(f), f, pk, DOM)
    assert not bad.passed
    assert bad.worst_margin == pytest.approx(-0.5)


def test_comparison_needs_constants():
    f = PowerDensity(2)
    with pytest.raises(IncompleteSpecError):
        check_comparison(VectorField().bind(f), f, ParameterPack(n=2, p=2, p_star=4), DOM)


def test_rhs_growth_forms():
    f = PowerDensity(2)
    ok = check_rhs_growth(RightHandSide(["-3"], kind="x_only"), f, laplace_pack(b3="3"), DOM, "absolute")
    assert ok.passed and ok.details["chain"]["passed"]
    bad = check_rhs_growth(RightHandSide(["u*u*u*u*u*u"], kind="x_u"), f, laplace_pack(c9=1), DOM, "absolute")
    assert not bad.passed
    assert bad.details["chain"]["passed"]
    assert check_rhs_growth(RightHandSide(), f, laplace_pack(c7=0, c8=0), DOM, "exact").passed


def test_rhs_kind_validation():
    with pytest.raises(ConfigError):
        RightHandSide(["u"], kind="x_only")
    with pytest.raises(ConfigError):
        RightHandSide(["xi1"], kind="x_u")
    assert RightHandSide().is_zero
    assert RightHandSide(["x1"], kind="x_only").has_potential


def test_standard_growth():
    f = PowerDensity(2)
    lap = check_standard_growth(VectorField().bind(f), RightHandSide(), laplace_pack(), DOM)
    # sup of 2r / (r + |u| + 1) is approached from below
    assert lap.passed and 1.99 <= lap.details["fitted_c1"] <= 2.0
    dp = DoublePhaseDensity(2, 3, a="x1*x1")
    rep = check_standard_growth(VectorField().bind(dp), RightHandSide(), laplace_pack(), DOM)
    assert not rep.passed and "growth_a" in rep.details["failed"]


def test_ellipticity_uses_symmetric_part():
    a = VectorField("linear_plus_power", matrix=[["2", "0.5*sin(pi*x2)"], ["-0.5*sin(pi*x2)", "1"]])
    assert check_ellipticity(a, 1.0, 2.0, DOM).passed
    sym = VectorField("linear_plus_power", matrix=[["2", "-0.5"], ["-0.5", "1"]])
    assert not check_ellipticity(sym, 1.0, 2.0, DOM).passed


def test_vector_field_config_errors():
    with pytest.raises(ConfigError):
        VectorField("linear_plus_power")
    with pytest.raises(ConfigError):
        VectorField("weighted_sum")
    with pytest.raises(ConfigError):
        VectorField("nope")


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_scenarios_classify_as_expected(name):
    pb = load_scenario(name)
    cls = classify(pb, pb.sampling_domain(n_samples=5000))
    assert cls.label == SCENARIOS[name]["expected"]["classification"], cls.reasons


def test_exp_control_reason_is_doubling():
    pb = load_scenario("exp_control")
    cls = classify(pb, pb.sampling_domain(n_samples=2000))
    assert any(r.startswith("delta2") for r in cls.reasons)


def test_relaxed_epsilon_problem_stays_covered():
    # theorem2 problem with epsilon removed must still satisfy the exact theorem
    cfg = scenario_config("double_phase_eps")
    for k in ("epsilon", "theta", "alpha", "r", "s"):
        cfg["parameters"].pop(k)
    pb = parse_problem(cfg)
    assert classify(pb, pb.sampling_domain(n_samples=3000)).label == "theorem1"


def test_classify_reports_missing_constants():
    cfg = scenario_config("double_phase_basic")
    cfg["parameters"].pop("c1")
    pb = parse_problem(cfg)
    with pytest.raises(IncompleteSpecError) as ei:
        classify(pb)
    assert "pack.c1" in ei.value.missing

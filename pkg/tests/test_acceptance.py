"""Acceptance suite: one test per acceptance criterion, numbered 1 to 9."""

import filecmp
import math
import time

import numpy as np
import pytest

from pqbound.cli import main
from pqbound.degiorgi import audit_levels, caccioppoli_audit, find_threshold_d, recursion_lemma, superlevel, verify_estimate
from pqbound.energy import (
    AnisotropicDensity,
    DoublePhaseDensity,
    ExponentialControl,
    GrowthEnvelope,
    LogPerturbedDensity,
    PowerDensity,
    SamplingDomain,
    VariableExponentDensity,
    check_gradient_growth,
    estimate_delta2,
    log_factor_ratio,
)
from pqbound.errors import ExponentError
from pqbound.scenarios import SCENARIOS, load_scenario
from pqbound.solver import SolveOptions, interpolate, solve
from pqbound.structure import ParameterPack, classify, delta_exponent, gamma_exponent, sigma_exponent

LEMMA_FAMILIES = {
    "power_1.5": PowerDensity(1.5),
    "power_2": PowerDensity(2),
    "power_3": PowerDensity(3),
    "double_phase_2_3": DoublePhaseDensity(2, 3, a="x1*x1"),
    "variable_exponent_1.5_3": VariableExponentDensity("1.5 + 1.5*x1"),
    "anisotropic_2_3": AnisotropicDensity([2, 3]),
    "log_perturbed_2": LogPerturbedDensity(2),
}


def test_1_gradient_growth_lemma_suite():
    t0 = time.perf_counter()
    failures = {}
    for i, (name, f) in enumerate(LEMMA_FAMILIES.items()):
        dom = SamplingDomain(n_samples=100_000, rng_seed=100 + i)
        s = dom.draw()
        est = estimate_delta2(f, dom, s)
        env = GrowthEnvelope(p=1.5, m_delta2=est.m_est, M_delta2=est.M_est)
        rep = check_gradient_growth(f, env, dom, s, rtol=1e-6)
        if not rep.passed or rep.details["parts"].keys() != {"upper", "lower"}:
            failures[name] = rep.to_dict()
    elapsed = time.perf_counter() - t0
    assert not failures, failures
    assert elapsed <= 30.0, elapsed


def test_2_model_case_identities():
    dom = SamplingDomain(n_samples=20_000, rng_seed=2, xi_radius_range=(1e-3, 1e3))
    s = dom.draw()
    for p in (1.5, 2.0, 3.0, 4.5):
        g = PowerDensity(p)
        lhs = g.dot_grad(s.x, s.u, s.xi)
        rhs = p * g.value(s.x, s.u, s.xi)
        assert np.max(np.abs(lhs - rhs) / rhs) <= 1e-12
    assert estimate_delta2(DoublePhaseDensity(2, 3, a="x1*x1"), dom, s).M_est <= 2**3 + 1e-9
    t = np.logspace(-12, 12, 200_001)
    assert np.max(log_factor_ratio(t)) <= 2 + 1e-6
    est = estimate_delta2(ExponentialControl(r=1), SamplingDomain(n_samples=20_000, rng_seed=2))
    assert est.max_finite_ratio > 1e6 and not est.bounded


def test_3_exponent_formulas():
    gpack = ParameterPack(n=3, p=2, alpha=0.5, r=2, theta=3, s=3, s1=3, s3=3)
    assert abs(gamma_exponent(gpack) - 4 / 3) <= 1e-12
    assert abs(sigma_exponent(gpack, "epsilon") - 3.0) <= 1e-12
    dpack = ParameterPack(n=4, p=2, s1=4, s3=4)
    assert abs(delta_exponent(dpack) - 0.5) <= 1e-12
    assert abs(sigma_exponent(dpack, "exact") - 2.0) <= 1e-12
    assert abs(delta_exponent(ParameterPack(n=4, p=2)) - 1.0) <= 1e-12
    with pytest.raises(ExponentError):
        ParameterPack(n=4, p=2, s1=2)  # s1 = n/p
    edge = ParameterPack(n=2, p=2, p_star=4, s3=4 / 3)  # p*/s3 + 1 = p*
    with pytest.raises(ExponentError):
        sigma_exponent(edge, "exact")
    with pytest.raises(ExponentError):
        gamma_exponent(edge)


def test_4_recursion_lemma():
    out = recursion_lemma(0.5, 1.0, 2.0, 1.0, 50)
    h = np.arange(51)
    expected = 2.0 ** (-h) * 0.5
    assert out["converges"]
    assert np.max(np.abs(out["z"] - expected) / expected) <= 1e-12
    assert out["satisfied"]
    above = recursion_lemma(out["threshold"] * (1 + 1e-3), 1.0, 2.0, 1.0, 50)
    assert not above["converges"]


def test_5_solver_order_and_maximum_principle():
    t0 = time.perf_counter()
    pb = load_scenario("poisson_manufactured")
    errs, hs = [], []
    for n in (15, 31):  # 17 and 33 nodes per side
        g = pb.make_grid(n, n)
        u = solve(pb, interpolate(pb.boundary, g))
        errs.append(float(np.max(np.abs(u.values - interpolate(pb.exact_solution, g).values))))
        hs.append(g.hx)
    order = math.log(errs[0] / errs[1]) / math.log(hs[0] / hs[1])
    assert 1.8 <= order <= 2.2, order
    lin = load_scenario("linear_spd")
    u0 = interpolate(lin.boundary, lin.make_grid())
    u = solve(lin, u0)
    assert u.max_abs() <= u0.boundary_max_abs() + 1e-10
    assert time.perf_counter() - t0 <= 60.0


@pytest.fixture(scope="module")
def audited(solved):
    return {name: solved(name) for name in ("double_phase_basic", "nonsymmetric_forced", "nonsymmetric_linear_plus_q")}


def test_6_caccioppoli_audit(audited):
    for name, (pb, u) in audited.items():
        assert pb.grid == (31, 31)
        ks = audit_levels(u, 10)
        recs = [caccioppoli_audit(pb, u, k) for k in ks]
        req = np.array([r["required_c"] for r in recs])
        assert np.all(np.isfinite(req)) and req.max() <= 1e3, (name, req)
        sets = [superlevel(u, k) for k in ks]
        for a, b, ra, rb in zip(sets, sets[1:], recs, recs[1:]):
            assert not np.any(b.cells & ~a.cells), name
            assert b.measure <= a.measure and rb["lhs"] <= ra["lhs"], name


def test_7_end_to_end_certificates(solved):
    covered = [n for n, c in SCENARIOS.items() if c["expected"]["classification"] != "uncovered"]
    for name in covered:
        pb, u = solved(name)
        label = classify(pb, pb.sampling_domain(n_samples=5000)).label
        assert label in ("theorem1", "theorem2"), name
        cert = find_threshold_d(pb, u)
        assert cert.valid, name
        assert cert.observed_max <= cert.d + cert.tolerance, name
        J = cert.trace.arrays()["J_h"]
        for h in range(len(J) - 1):
            assert J[h + 1] <= cert.L * (2 ** pb.pack.p_star) ** h * J[h] ** (1 + cert.delta) * (1 + 1e-12), (name, h)


def test_8_estimate_stability():
    pb = load_scenario("double_phase_eps")
    assert classify(pb, pb.sampling_domain(n_samples=5000)).label == "theorem2"
    scalings = pb.certify["scalings"]
    assert len(scalings) == 5
    est = verify_estimate(pb, scalings, pb.make_grid(), SolveOptions(), classification="theorem2")
    ratios = [r["ratio"] for r in est["records"]]
    assert max(ratios) / min(ratios) <= 10.0, ratios


def test_9_determinism(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        for name in ("double_phase_eps", "nonsymmetric_forced"):
            assert main(["certify", "--config", name, "--seed", "7", "--out-dir", str(d)]) == 0
        assert main(["check", "--config", "two_energy_sum", "--seed", "7", "--format", "csv",
                     "--out-dir", str(d)]) == 0
    names = sorted(p.name for p in dirs[0].iterdir())
    assert names == sorted(p.name for p in dirs[1].iterdir())
    assert any(n.endswith(".csv") for n in names) and any(n.endswith(".json") for n in names)
    match, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
    assert not mismatch and not errors

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pqbound.degiorgi import (
    IterationTrace,
    LevelSequence,
    audit_levels,
    caccioppoli_audit,
    find_threshold_d,
    j_value,
    poincare_check,
    recursion_lemma,
    superlevel,
    truncate,
    truncate_values,
    verify_estimate,
)
from pqbound.errors import PQBoundError, PreconditionError, ThresholdError, UncoveredProblemError
from pqbound.solver import DiscreteFunction, Grid, SolveOptions


def bump(n=15, height=3.0):
    g = Grid.on_box(n, n)
    x, y = g.points().T
    return DiscreteFunction(height * np.sin(np.pi * x) * np.sin(np.pi * y), g)


def test_truncation_values():
    np.testing.assert_array_equal(truncate_values([-3.0, -1.0, 0.5, 2.5], 1.0), [-2.0, 0.0, 0.0, 1.5])


def test_truncate_requires_level_above_boundary():
    u = bump()
    u.values[0, 3] = 2.0
    with pytest.raises(PreconditionError):
        truncate(u, 1.0)
    assert truncate(u, 2.0).boundary_max_abs() == 0.0


def test_superlevel_nested_and_monotone():
    u = bump()
    ks = np.linspace(0, 3, 13)
    sets = [superlevel(u, k) for k in ks]
    for a, b in zip(sets, sets[1:]):
        assert b.measure <= a.measure
        assert not np.any(b.cells & ~a.cells)
    assert superlevel(u, 3.0).measure == 0.0


def test_j_value_decreases_in_k():
    u = bump()
    js = [j_value(u, k, 2) for k in np.linspace(0, 3, 7)]
    assert all(a >= b for a, b in zip(js, js[1:]))
    assert js[-1] == 0.0


def test_poincare_check_cases():
    u = bump()
    r = poincare_check(u, 0.5, 2, 4)
    assert r["C_P_est"] > 0 and not r["anomaly"]
    assert poincare_check(u, 5.0, 2, 4)["C_P_est"] is None


def test_recursion_threshold_equality():
    out = recursion_lemma(0.5, 1.0, 2.0, 1.0, 50)
    assert out["converges"] and out["threshold"] == 0.5
    h = np.arange(51)
    np.testing.assert_allclose(out["z"], 0.5 * 2.0 ** (-h), rtol=1e-12, atol=0)


def test_recursion_above_threshold_rejected():
    out = recursion_lemma(0.5 * (1 + 1e-3), 1.0, 2.0, 1.0, 50)
    assert not out["converges"] and not out["satisfied"]


def test_recursion_half_threshold_strict():
    out = recursion_lemma(0.25, 1.0, 2.0, 1.0, 30)
    assert out["converges"]
    assert np.all(out["z"][1:] < out["bounds"][1:])


def test_recursion_domain_errors():
    with pytest.raises(PQBoundError):
        recursion_lemma(0.5, 1.0, 1.0, 1.0, 5)
    with pytest.raises(PQBoundError):
        recursion_lemma(-1.0, 1.0, 2.0, 1.0, 5)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(1.1, 16.0), st.floats(0.2, 3.0), st.floats(0.01, 0.99))
def test_recursion_below_threshold_always_bounded(L, zeta, delta, frac):
    thr = L ** (-1 / delta) * zeta ** (-1 / delta**2)
    out = recursion_lemma(frac * thr, L, zeta, delta, 25)
    assert out["converges"] and out["satisfied"]


def test_level_sequence():
    ks = LevelSequence(4.0, 5).levels
    np.testing.assert_allclose(ks, 4.0 * (1 - 2.0 ** -(np.arange(6) + 1)))
    with pytest.raises(PreconditionError):
        LevelSequence(0.0)


def test_audit_levels_and_floor(solved):
    pb, u = solved("double_phase_basic")
    ks = audit_levels(u)
    assert len(ks) == 10 and ks[0] > 1.0 and ks[-1] == pytest.approx(u.max_abs())
    with pytest.raises(PreconditionError):
        caccioppoli_audit(pb, u, 0.5)


@pytest.mark.parametrize("name", ["double_phase_basic", "nonsymmetric_forced", "two_energy_sum"])
def test_caccioppoli_required_constant_bounded(solved, name):
    pb, u = solved(name)
    recs = [caccioppoli_audit(pb, u, k) for k in audit_levels(u)]
    req = [r["required_c"] for r in recs]
    assert all(math.isfinite(c) for c in req) and max(req) <= 1e3
    assert any(r["lhs"] > 0 for r in recs)


def test_certificate_fields_and_trace(solved, tmp_path):
    pb, u = solved("double_phase_basic")
    cert = find_threshold_d(pb, u, H=30)
    assert cert.valid
    assert cert.checks["recursion"] and cert.checks["chebyshev"] and cert.checks["monotone"]
    assert cert.observed_max <= cert.d + cert.tolerance
    assert cert.delta == pytest.approx(1.0)
    text = cert.trace.to_csv(tmp_path / "t.csv")
    lines = text.splitlines()
    assert lines[0] == "h,k_h,measure,J_h,bound" and len(lines) == 32
    d = cert.to_dict()
    assert set(d["trace"]) >= {"h", "k_h", "measure", "J_h", "bound"}


def test_threshold_error_when_d_max_too_small(solved):
    pb, u = solved("double_phase_basic")
    with pytest.raises(ThresholdError):
        find_threshold_d(pb, u, d_max=2.0)


def test_epsilon_certificate_records_hat_constant(solved):
    pb, u = solved("double_phase_eps")
    cert = find_threshold_d(pb, u)
    assert "J_hat_required_L" in cert.checks
    assert cert.predicted_linfty_form["gamma"] == pytest.approx(1.0)


def test_estimate_refuses_theorem1():
    from pqbound.scenarios import load_scenario

    pb = load_scenario("double_phase_basic")
    with pytest.raises(UncoveredProblemError):
        verify_estimate(pb, [1.0], classification="theorem1")


def test_estimate_records_per_scale():
    from pqbound.scenarios import load_scenario

    pb = load_scenario("double_phase_eps")
    out = verify_estimate(pb, [1.0, 2.0], pb.make_grid(11, 11), SolveOptions(), classification="theorem2")
    assert [r["scale"] for r in out["records"]] == [1.0, 2.0]
    assert out["fitted_c"] == max(r["ratio"] for r in out["records"])
    assert out["stability"] >= 1.0

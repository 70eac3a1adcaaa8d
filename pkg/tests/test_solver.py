import json
import math

import numpy as np
import pytest

from pqbound.errors import ConfigError, ConvergenceError, PreconditionError
from pqbound.problem import load_problem, parse_problem
from pqbound.scenarios import load_scenario, scenario_config
from pqbound.solver import (
    DiscreteFunction,
    Grid,
    SolveOptions,
    discrete_energy,
    discrete_gradient,
    interpolate,
    lp_norm,
    solve,
    validate_weak_pairings,
    weak_residual,
)


def test_grid_geometry():
    g = Grid.on_box(4, 5)
    assert g.shape == (7, 6)
    assert g.hx == pytest.approx(0.2) and g.hy == pytest.approx(1 / 6)
    assert g.n_cells == 2 * 6 * 5
    assert np.sum(g.areas) == pytest.approx(1.0)
    assert g.interior.size == 20
    with pytest.raises(ConfigError):
        Grid.on_box(1, 5)


def test_gradient_exact_on_affine():
    g = Grid.on_box(6, 7)
    pts = g.points()
    u = DiscreteFunction(3 * pts[:, 0] - 2 * pts[:, 1] + 1, g)
    np.testing.assert_allclose(discrete_gradient(u), np.tile([3.0, -2.0], (g.n_cells, 1)), atol=1e-12)


def test_lp_norm_of_constant():
    g = Grid.on_box(5, 5)
    u = DiscreteFunction(np.full(g.shape, 2.0), g)
    assert lp_norm(u, 3) == pytest.approx(2.0)
    assert lp_norm(u, math.inf) == 2.0


def test_csv_and_raw_round_trip(tmp_path):
    g = Grid.on_box(4, 3)
    u = DiscreteFunction(np.arange(g.n_nodes, dtype=float) / 7, g)
    text = u.to_csv(tmp_path / "u.csv")
    assert text.splitlines()[0] == "x,y,u"
    assert len(text.splitlines()) == g.n_nodes + 1
    u.to_raw(tmp_path / "u.raw")
    v = DiscreteFunction.from_raw(tmp_path / "u.raw")
    assert v.grid == g
    np.testing.assert_array_equal(u.values, v.values)


def test_poisson_second_order():
    pb = load_scenario("poisson_manufactured")
    errs = []
    for n in (15, 31):
        g = pb.make_grid(n, n)
        u = solve(pb, interpolate(pb.boundary, g))
        errs.append(np.max(np.abs(u.values - interpolate(pb.exact_solution, g).values)))
    order = math.log(errs[0] / errs[1]) / math.log(2)
    assert 1.8 <= order <= 2.2


@pytest.mark.parametrize("method", ["newton", "picard", "energy_descent"])
def test_methods_agree_on_double_phase(method):
    pb = load_scenario("double_phase_basic")
    g = pb.make_grid(11, 11)
    u = solve(pb, interpolate(pb.boundary, g), SolveOptions(method=method))
    ref = solve(pb, interpolate(pb.boundary, g))
    assert u.log.converged
    np.testing.assert_allclose(u.values, ref.values, atol=1e-7)
    assert np.max(np.abs(weak_residual(pb, u))) <= 1e-9


def test_energy_descent_refused_for_nonvariational():
    pb = load_scenario("nonsymmetric_forced")
    g = pb.make_grid(7, 7)
    with pytest.raises(PreconditionError):
        solve(pb, interpolate(pb.boundary, g), SolveOptions(method="energy_descent"))


def test_newton_decreases_energy_of_variational_problem():
    pb = load_scenario("double_phase_basic")
    g = pb.make_grid(9, 9)
    u0 = interpolate(pb.boundary, g)
    u = solve(pb, u0)
    x = g.centroids
    work = lambda v: discrete_energy(pb.energy, v) + float(np.sum(pb.rhs(x, v.cell_values(), None) * v.cell_values() * g.areas))
    assert work(u) < work(u0)


def test_convergence_error_carries_residual():
    pb = load_scenario("double_phase_basic")
    g = pb.make_grid(9, 9)
    with pytest.raises(ConvergenceError) as ei:
        solve(pb, interpolate(pb.boundary, g), SolveOptions(max_iters=1))
    assert ei.value.residual > 0


def test_boundary_is_preserved_bitwise():
    pb = load_scenario("nonsymmetric_linear_plus_q")
    g = pb.make_grid(15, 15)
    u0 = interpolate(pb.boundary, g)
    u = solve(pb, u0)
    assert np.array_equal(u.values[g.boundary_mask], u0.values[g.boundary_mask])


def test_linear_maximum_principle():
    pb = load_scenario("linear_spd")
    u0 = interpolate(pb.boundary, pb.make_grid())
    u = solve(pb, u0)
    assert u.max_abs() <= u0.boundary_max_abs() + 1e-10


def test_weak_residual_rejects_wrong_boundary():
    pb = load_scenario("poisson_manufactured")
    g = pb.make_grid(5, 5)
    u = interpolate(pb.boundary, g)
    u.values[0, 2] = 1.0
    with pytest.raises(PreconditionError):
        weak_residual(pb, u)


def test_pairings_on_forced_problem(solved):
    pb, u = solved("double_phase_basic")
    out = validate_weak_pairings(pb, u, 1.0 + 0.5 * (u.max_abs() - 1.0))
    for key in ("a_pairing", "b_pairing", "truncation_energy"):
        assert out[key]["passed"], (key, out[key])
    assert out["energy_finite"]
    with pytest.raises(PreconditionError):
        validate_weak_pairings(pb, u, 0.1)


def test_load_problem_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "name": "x",\n  "energy": {"kind": "power", "p": 2,}\n}\n')
    with pytest.raises(ConfigError, match="line 3"):
        load_problem(p)


def test_parse_problem_field_errors():
    cfg = scenario_config("double_phase_basic")
    cfg["energy"] = {"kind": "nope"}
    with pytest.raises(ConfigError, match=r"\[energy\]"):
        parse_problem(cfg)
    cfg = scenario_config("double_phase_basic")
    cfg["domain"]["bogus"] = 1
    with pytest.raises(ConfigError, match=r"\[domain\]"):
        parse_problem(cfg)
    cfg = scenario_config("double_phase_basic")
    cfg["boundary"]["u0"] = "u + x1"
    with pytest.raises(ConfigError):
        parse_problem(cfg)


def test_problem_config_round_trip():
    pb = load_scenario("two_energy_sum")
    again = parse_problem(json.loads(json.dumps(pb.to_config())))
    assert again.to_config() == pb.to_config()

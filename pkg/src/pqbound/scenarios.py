"""Built-in problems: double phase energies, weighted sums, non-symmetric operators.

Each scenario is a plain configuration mapping in the same JSON format that
:func:`pqbound.problem.load_problem` reads, so ``scenario_config(name)``
can be written to disk and edited.

All two-dimensional problems with ``p = 2 = n`` configure ``p_star = 4``.
"""

from __future__ import annotations

import copy
import json

from .errors import ConfigError
from .problem import parse_problem

__all__ = ["SCENARIOS", "scenario_config", "load_scenario", "scenario_names", "write_configs"]

_SQUARE = {"x_box": [[0, 1], [0, 1]], "grid": [31, 31]}

_EXACT_PACK = {"n": 2, "p": 2, "p_star": 4, "s1": "inf", "s3": "inf", "epsilon": 0}

SCENARIOS = {
    "poisson_manufactured": {
        "name": "poisson_manufactured",
        "description": "Laplace operator with a manufactured smooth solution.",
        "energy": {"kind": "power", "p": 2, "coef": 0.5},
        "vector_field": {"kind": "gradient_of_f"},
        "rhs": {"kind": "x_only", "growth": "absolute", "terms": ["-2*pi**2*sin(pi*x1)*sin(pi*x2)"]},
        "parameters": dict(_EXACT_PACK, c1=1, c2=0, c3=1, c4=0, c5=0.5, c6=1, c9=0, b3="2*pi**2"),
        "domain": dict(_SQUARE),
        "boundary": {"u0": "0", "exact_solution": "sin(pi*x1)*sin(pi*x2)"},
        "solver": {"method": "newton"},
        "expected": {"classification": "theorem1"},
    },
    "linear_spd": {
        "name": "linear_spd",
        "description": "Constant symmetric positive definite coefficients, no source.",
        "energy": {"kind": "power", "p": 2, "coef": 0.5},
        "vector_field": {"kind": "linear_plus_power", "matrix": [["2", "-0.5"], ["-0.5", "1"]],
                         "weight": "0", "q": 3},
        "rhs": {"kind": "x_only", "terms": []},
        "parameters": dict(_EXACT_PACK, c1=0.79, c2=0, c3=2.21, c4=0, c5=0.5, c6=1, c9=0),
        "domain": dict(_SQUARE, ellipticity=[0.79, 2.21]),
        "boundary": {"u0": "x1*x1 - x2*x2 + x1*x2"},
        "solver": {"method": "newton"},
        "expected": {"classification": "theorem1"},
    },
    "double_phase_basic": {
        "name": "double_phase_basic",
        "description": "Double phase energy |xi|^2 + a(x)|xi|^3 with a vanishing on x1 = 0 and a constant source.",
        "energy": {"kind": "double_phase", "p": 2, "q": 3, "a": "x1*x1"},
        "vector_field": {"kind": "gradient_of_f"},
        "rhs": {"kind": "x_only", "growth": "absolute", "terms": ["-200"]},
        "parameters": dict(_EXACT_PACK, c1=1, c2=0, c3=1, c4=0, c5=1, c6=1, c9=0, b3="200"),
        "domain": dict(_SQUARE),
        "boundary": {"u0": "0.5*x1"},
        "solver": {"method": "newton"},
        "expected": {"classification": "theorem1"},
    },
    "double_phase_eps": {
        "name": "double_phase_eps",
        "description": "Double phase energy with every epsilon-theorem exponent strictly inside its range.",
        "energy": {"kind": "double_phase", "p": 2, "q": 3, "a": "x1*x1"},
        "vector_field": {"kind": "gradient_of_f"},
        "rhs": {"kind": "x_only", "growth": "absolute", "terms": ["-200"]},
        "parameters": dict(_EXACT_PACK, epsilon=0.5, theta=2, alpha=0.5, r=2, s=2,
                           c1=1, c2=0, c3=1, c4=0, c5=1, c6=1, c9=0, b3="200"),
        "domain": dict(_SQUARE),
        "boundary": {"u0": "0.5*x1"},
        "solver": {"method": "newton"},
        "certify": {"scalings": [0.5, 1, 1.5, 2, 3]},
        "expected": {"classification": "theorem2"},
    },
    "generalized_double_phase": {
        "name": "generalized_double_phase",
        "description": "Double phase whose upper exponent grows with |u|.",
        "energy": {"kind": "double_phase", "p": 2, "q": "3 + 0.5*abs(u)/(1 + abs(u))", "a": "x1*x1"},
        "vector_field": {"kind": "gradient_of_f"},
        "rhs": {"kind": "x_only", "growth": "absolute", "terms": ["-200"]},
        "parameters": dict(_EXACT_PACK, c1=1, c2=0, c3=1, c4=0, c5=1, c6=2, c9=0, b3="200"),
        "domain": dict(_SQUARE),
        "boundary": {"u0": "0.5*x1"},
        "solver": {"method": "newton"},
        "expected": {"classification": "theorem1"},
    },
    "two_energy_sum": {
        "name": "two_energy_sum",
        "description": "Field alpha(x,u) D f + beta(x,u) D g with f = |xi|^2 and g anisotropic.",
        "energy": {"kind": "two_energy_sum", "alpha": 1, "beta": 1,
                   "f": {"kind": "power", "p": 2},
                   "g": {"kind": "anisotropic", "exponents": [3, 4], "weights": [1, 1]}},
        "vector_field": {"kind": "weighted_sum", "alpha": "1 + 0.5*sin(pi*x1)*u/(1 + u*u)",
                         "beta": "1 + 0.5*x2",
                         "f": {"kind": "power", "p": 2},
                         "g": {"kind": "anisotropic", "exponents": [3, 4], "weights": [1, 1]}},
        "rhs": {"kind": "x_only", "growth": "absolute", "terms": ["-150"]},
        "parameters": dict(_EXACT_PACK, c1=0.75, c2=0, c3=1.5, c4=0, c5=1, c6=1, c9=0, b3="150"),
        "domain": dict(_SQUARE),
        "boundary": {"u0": "0.5*x2"},
        "solver": {"method": "newton"},
        "expected": {"classification": "theorem1"},
    },
    "nonsymmetric_linear_plus_q": {
        "name": "nonsymmetric_linear_plus_q",
        "description": "Non-symmetric linear part plus w(x,u)|u_x1|^(q-2) u_x1, no source.",
        "energy": {"kind": "two_energy_sum", "alpha": 1, "beta": "(1 + 0.5*x1 + 0.5*u*u/(1 + u*u))/3",
                   "f": {"kind": "power", "p": 2, "coef": 0.5},
                   "g": {"kind": "anisotropic", "exponents": [3, 2], "weights": [1, 0]}},
        "vector_field": {"kind": "linear_plus_power",
                         "matrix": [["2", "0.5*sin(pi*x2)"], ["-0.5*sin(pi*x2)", "1"]],
                         "weight": "1 + 0.5*x1 + 0.5*u*u/(1 + u*u)", "q": 3, "component": 0},
        "rhs": {"kind": "x_only", "terms": []},
        "parameters": dict(_EXACT_PACK, c1=1, c2=0, c3=2, c4=0, c5=0.5, c6=1, c9=0),
        "domain": dict(_SQUARE, ellipticity=[1, 2]),
        "boundary": {"u0": "sin(2*pi*x1) + x2"},
        "solver": {"method": "newton"},
        "expected": {"classification": "theorem1"},
    },
    "nonsymmetric_forced": {
        "name": "nonsymmetric_forced",
        "description": "The non-symmetric operator with a constant source, so that |u| exceeds its boundary values.",
        "energy": {"kind": "two_energy_sum", "alpha": 1, "beta": "(1 + 0.5*x1 + 0.5*u*u/(1 + u*u))/3",
                   "f": {"kind": "power", "p": 2, "coef": 0.5},
                   "g": {"kind": "anisotropic", "exponents": [3, 2], "weights": [1, 0]}},
        "vector_field": {"kind": "linear_plus_power",
                         "matrix": [["2", "0.5*sin(pi*x2)"], ["-0.5*sin(pi*x2)", "1"]],
                         "weight": "1 + 0.5*x1 + 0.5*u*u/(1 + u*u)", "q": 3, "component": 0},
        "rhs": {"kind": "x_only", "growth": "absolute", "terms": ["-200"]},
        "parameters": dict(_EXACT_PACK, c1=1, c2=0, c3=2, c4=0, c5=0.5, c6=1, c9=0, b3="200"),
        "domain": dict(_SQUARE, ellipticity=[1, 2]),
        "boundary": {"u0": "0.5*x2"},
        "solver": {"method": "newton"},
        "expected": {"classification": "theorem1"},
    },
    "exp_control": {
        "name": "exp_control",
        "description": "Exponential energy: convex but without a doubling bound (negative control).",
        "energy": {"kind": "exponential_control", "r": 1},
        "vector_field": {"kind": "gradient_of_f"},
        "rhs": {"kind": "x_only", "terms": []},
        "parameters": dict(_EXACT_PACK, c1=1, c2=0, c3=1, c4=0, c5=1, c6=1, c9=0),
        "domain": dict(_SQUARE),
        "boundary": {"u0": "0"},
        "solver": {"method": "newton"},
        "expected": {"classification": "uncovered"},
    },
}


def scenario_names():
    return sorted(SCENARIOS)


def scenario_config(name):
    try:
        return copy.deepcopy(SCENARIOS[name])
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(scenario_names())}") from None


def load_scenario(name):
    return parse_problem(scenario_config(name))


def write_configs(directory):
    """Write every scenario as ``<name>.json`` into ``directory``."""
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in scenario_names():
        (d / f"{name}.json").write_text(json.dumps(SCENARIOS[name], indent=2, sort_keys=True) + "\n")

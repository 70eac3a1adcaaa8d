"""Numerical boundedness checks for elliptic Dirichlet problems with p,q-growth.

Modules:

* :mod:`pqbound.energy` energy densities and sampled structural checks
* :mod:`pqbound.structure` vector fields, right-hand sides, exponent packs, classification
* :mod:`pqbound.solver` P1 finite elements on rectangles and nonlinear solvers
* :mod:`pqbound.degiorgi` level-set iteration, Caccioppoli audits, certificates
* :mod:`pqbound.harness` end-to-end pipelines used by the ``pqbound`` command
"""

from .errors import *  # noqa: F401,F403
from .problem import ProblemSpec, load_problem, parse_problem
from .scenarios import SCENARIOS, load_scenario, scenario_names

__version__ = "0.1.0"

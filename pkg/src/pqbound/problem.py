"""Dirichlet problem description and its JSON configuration format.

A configuration is a JSON object with the sections ``energy``,
``vector_field``, ``rhs``, ``parameters``, ``domain`` and ``boundary``.
Optional sections ``solver``, ``certify`` and ``expected`` carry run
settings for the harness.  Infinite exponents are written as ``"inf"``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .energy import EnergyDensity, SamplingDomain, density_from_config
from .errors import ConfigError, PQBoundError
from .expr import Expr, as_expr
from .structure import ParameterPack, RightHandSide, VectorField

__all__ = ["ProblemSpec", "load_problem", "parse_problem"]

SECTIONS = ("name", "energy", "vector_field", "rhs", "parameters", "domain", "boundary",
            "solver", "certify", "expected", "description")


@dataclass
class ProblemSpec:
    """A Dirichlet problem ``div a(x, u, Du) = b(x, u, Du)``, ``u = u0`` on the boundary."""

    name: str
    energy: EnergyDensity
    vector_field: VectorField
    rhs: RightHandSide
    pack: ParameterPack
    boundary: Expr = field(default_factory=lambda: Expr("0"))
    x_box: tuple = ((0.0, 1.0), (0.0, 1.0))
    grid: tuple = (31, 31)
    u_range: tuple = (-10.0, 10.0)
    xi_radius_range: tuple = (1e-4, 1e4)
    n_samples: int = 20_000
    seed: int = 0
    m_delta2: Optional[float] = None
    M_delta2: Optional[float] = None
    ellipticity: Optional[tuple] = None
    exact_solution: Optional[Expr] = None
    solver: dict = field(default_factory=dict)
    certify: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        self.boundary = as_expr(self.boundary, "0")
        if self.boundary.depends_on_u() or self.boundary.depends_on_xi():
            raise ConfigError("boundary datum may depend on x only")
        if self.exact_solution is not None:
            self.exact_solution = as_expr(self.exact_solution)
        self.vector_field.bind(self.energy)
        self.x_box = tuple(tuple(float(v) for v in b) for b in self.x_box)
        if len(self.x_box) != self.pack.n:
            raise ConfigError(f"domain box has dimension {len(self.x_box)} but parameters.n = {self.pack.n}")
        self.grid = tuple(int(v) for v in self.grid)

    def sampling_domain(self, n_samples=None, seed=None):
        return SamplingDomain(
            x_box=self.x_box,
            u_range=self.u_range,
            xi_radius_range=self.xi_radius_range,
            n_samples=self.n_samples if n_samples is None else n_samples,
            rng_seed=self.seed if seed is None else seed,
        )

    def make_grid(self, nx=None, ny=None):
        from .solver import Grid

        nx = self.grid[0] if nx is None else nx
        ny = self.grid[1] if ny is None else ny
        return Grid.on_box(nx, ny, self.x_box)

    def quadrature(self, grid=None):
        """Cell centroids and areas of the problem grid (only for ``n = 2``)."""
        if self.pack.n != 2:
            return None
        grid = grid or self.make_grid()
        return grid.centroids, grid.areas

    def with_norms(self, grid=None):
        """Copy whose pack has the data norms filled in by grid quadrature."""
        q = self.quadrature(grid)
        if q is None:
            return self
        out = copy.copy(self)
        out.pack = self.pack.with_norms(*q)
        return out

    def to_config(self):
        return {
            "name": self.name,
            "description": self.description,
            "energy": self.energy.to_config(),
            "vector_field": self.vector_field.to_config(),
            "rhs": self.rhs.to_config(),
            "parameters": self.pack.to_config(),
            "domain": {
                "x_box": [list(b) for b in self.x_box],
                "grid": list(self.grid),
                "u_range": list(self.u_range),
                "xi_radius_range": list(self.xi_radius_range),
                "n_samples": self.n_samples,
                "seed": self.seed,
                "m_delta2": self.m_delta2,
                "M_delta2": self.M_delta2,
                "ellipticity": None if self.ellipticity is None else list(self.ellipticity),
            },
            "boundary": {
                "u0": self.boundary.source,
                "exact_solution": None if self.exact_solution is None else self.exact_solution.source,
            },
            "solver": dict(self.solver),
            "certify": dict(self.certify),
            "expected": dict(self.expected),
        }


def _section(cfg, name, required=True):
    if name not in cfg:
        if required:
            raise ConfigError(f"missing section {name!r}")
        return {}
    val = cfg[name]
    if not isinstance(val, dict):
        raise ConfigError(f"section {name!r} must be an object")
    return val


def _wrap(section, fn, *args):
    try:
        return fn(*args)
    except PQBoundError as exc:
        raise ConfigError(f"[{section}] {exc}") from None
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


_DOMAIN_KEYS = {"x_box", "grid", "u_range", "xi_radius_range", "n_samples", "seed", "m_delta2",
                "M_delta2", "ellipticity"}


def parse_problem(cfg):
    """Build a :class:`ProblemSpec` from a parsed configuration mapping."""
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(cfg) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    energy = _wrap("energy", density_from_config, _section(cfg, "energy"))
    vf = _wrap("vector_field", VectorField.from_config, _section(cfg, "vector_field", False) or {"kind": "gradient_of_f"})
    rhs = _wrap("rhs", RightHandSide.from_config, cfg.get("rhs"))
    pack = _wrap("parameters", ParameterPack.from_config, _section(cfg, "parameters"))
    dom = _section(cfg, "domain", False)
    bad = set(dom) - _DOMAIN_KEYS
    if bad:
        raise ConfigError(f"[domain] unknown fields {sorted(bad)}")
    bnd = _section(cfg, "boundary", False)
    bad = set(bnd) - {"u0", "exact_solution"}
    if bad:
        raise ConfigError(f"[boundary] unknown fields {sorted(bad)}")
    kw = {k: v for k, v in dom.items() if v is not None}
    if "ellipticity" in kw:
        kw["ellipticity"] = tuple(float(v) for v in kw["ellipticity"])
    return _wrap(
        "domain",
        lambda: ProblemSpec(
            name=str(cfg.get("name", "problem")),
            description=str(cfg.get("description", "")),
            energy=energy,
            vector_field=vf,
            rhs=rhs,
            pack=pack,
            boundary=bnd.get("u0", "0"),
            exact_solution=bnd.get("exact_solution"),
            solver=dict(_section(cfg, "solver", False)),
            certify=dict(_section(cfg, "certify", False)),
            expected=dict(_section(cfg, "expected", False)),
            **kw,
        ),
    )


def load_problem(path):
    """Read a JSON problem file; syntax errors report line and column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_problem(cfg)

"""Finite-element-style discretisation of the Dirichlet problem on rectangles.

Each grid square is split along its SE-NW diagonal into two right triangles
carrying piecewise linear functions.  On the lower triangle the gradient is
the forward difference from the SW corner, on the upper one the backward
difference from the NE corner.  Integrals use one-point (centroid)
quadrature with ``u`` averaged over the three vertices, so the weak
residual against the nodal hat function ``phi_j`` is the finite sum

    R_j = sum_T [ (a(x_T, u_T, Du_T), Dphi_j|_T) + b(x_T, u_T, Du_T) / 3 ] |T|.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import (
    ConfigError,
    ConvergenceError,
    NonFiniteError,
    PreconditionError,
    SingularJacobianError,
)

__all__ = [
    "Grid",
    "DiscreteFunction",
    "SolveOptions",
    "SolveLog",
    "discrete_gradient",
    "discrete_energy",
    "weak_residual",
    "solve",
    "validate_weak_pairings",
    "interpolate",
    "lp_norm",
]


class Grid:
    """Uniform rectangular grid with ``nx * ny`` interior nodes.

    Nodal arrays have shape ``(ny + 2, nx + 2)`` and are indexed ``[j, i]``
    with ``x = origin[0] + i hx`` and ``y = origin[1] + j hy``.
    """

    def __init__(self, nx, ny, hx, hy, origin=(0.0, 0.0)):
        if int(nx) != nx or int(ny) != ny or nx < 3 or ny < 3:
            raise ConfigError(f"grid needs at least 3 interior nodes per direction, got {nx} x {ny}")
        if not (hx > 0 and hy > 0):
            raise ConfigError("grid spacings must be positive")
        self.nx, self.ny = int(nx), int(ny)
        self.hx, self.hy = float(hx), float(hy)
        self.origin = (float(origin[0]), float(origin[1]))
        self.shape = (self.ny + 2, self.nx + 2)
        mask = np.ones(self.shape, dtype=bool)
        mask[1:-1, 1:-1] = False
        self.boundary_mask = mask
        self._build()

    @classmethod
    def on_box(cls, nx, ny, x_box=((0.0, 1.0), (0.0, 1.0))):
        (x0, x1), (y0, y1) = x_box
        return cls(nx, ny, (x1 - x0) / (nx + 1), (y1 - y0) / (ny + 1), (x0, y0))

    def __repr__(self):
        return f"Grid(nx={self.nx}, ny={self.ny}, hx={self.hx!r}, hy={self.hy!r}, origin={self.origin})"

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.nx, self.ny, self.hx, self.hy, self.origin) == (
            other.nx, other.ny, other.hx, other.hy, other.origin)

    @property
    def n_nodes(self):
        return self.shape[0] * self.shape[1]

    @property
    def n_cells(self):
        return 2 * (self.shape[0] - 1) * (self.shape[1] - 1)

    @property
    def area(self):
        return (self.shape[1] - 1) * self.hx * (self.shape[0] - 1) * self.hy

    @property
    def cell_diameter(self):
        return math.hypot(self.hx, self.hy)

    def _build(self):
        NY, NX = self.shape
        idx = np.arange(NY * NX).reshape(NY, NX)
        sw = idx[:-1, :-1].ravel()
        se = idx[:-1, 1:].ravel()
        nw = idx[1:, :-1].ravel()
        ne = idx[1:, 1:].ravel()
        # lower triangles (sw, se, nw) then upper triangles (ne, nw, se)
        self.tri = np.concatenate([np.stack([sw, se, nw], 1), np.stack([ne, nw, se], 1)])
        hx, hy = self.hx, self.hy
        lower = np.array([[-1 / hx, -1 / hy], [1 / hx, 0.0], [0.0, 1 / hy]])
        upper = np.array([[1 / hx, 1 / hy], [-1 / hx, 0.0], [0.0, -1 / hy]])
        m = sw.size
        self.hat_grads = np.concatenate([np.broadcast_to(lower, (m, 3, 2)), np.broadcast_to(upper, (m, 3, 2))])
        self.areas = np.full(2 * m, 0.5 * hx * hy)
        xs, ys = self.coords()
        px, py = xs.ravel(), ys.ravel()
        self.centroids = np.stack([px[self.tri].mean(1), py[self.tri].mean(1)], 1)
        self.interior = np.flatnonzero(~self.boundary_mask.ravel())
        self.boundary = np.flatnonzero(self.boundary_mask.ravel())

    def coords(self):
        NY, NX = self.shape
        x = self.origin[0] + self.hx * np.arange(NX)
        y = self.origin[1] + self.hy * np.arange(NY)
        return np.meshgrid(x, y)

    def points(self):
        xs, ys = self.coords()
        return np.stack([xs.ravel(), ys.ravel()], 1)


@dataclass
class SolveLog:
    """Per-iteration records ``(iteration, residual, damping)`` and the outcome."""

    method: str
    records: list = field(default_factory=list)
    converged: bool = False
    residual: float = math.inf
    energies: list = field(default_factory=list)

    def add(self, it, res, damping):
        self.records.append((int(it), float(res), float(damping)))

    def to_lines(self):
        return "".join(f"{it} {res:.17g} {d:.17g}\n" for it, res, d in self.records)

    def to_dict(self):
        return {
            "method": self.method,
            "converged": self.converged,
            "final_residual": self.residual,
            "iterations": len(self.records),
            "records": [list(r) for r in self.records],
        }


class DiscreteFunction:
    """Nodal values on a :class:`Grid`."""

    def __init__(self, values, grid: Grid, log: Optional[SolveLog] = None):
        values = np.array(values, dtype=float).reshape(grid.shape)
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("discrete function has non-finite values")
        self.values = values
        self.grid = grid
        self.log = log

    def copy(self):
        return DiscreteFunction(self.values.copy(), self.grid, self.log)

    @property
    def flat(self):
        return self.values.ravel()

    def cell_values(self):
        """Vertex averages on every triangle."""
        return self.flat[self.grid.tri].mean(1)

    def max_abs(self):
        return float(np.max(np.abs(self.values)))

    def boundary_max_abs(self):
        return float(np.max(np.abs(self.values[self.grid.boundary_mask])))

    def to_csv(self, path=None):
        """Rows ``x,y,u`` in row-major node order."""
        pts = self.grid.points()
        buf = io.StringIO()
        buf.write("x,y,u\n")
        for (x, y), u in zip(pts, self.flat):
            buf.write(f"{x:.17g},{y:.17g},{u:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_raw(self, path):
        """Header line ``nx ny hx hy`` (interior counts) then row-major float64 values."""
        g = self.grid
        with open(path, "wb") as fh:
            fh.write(f"{g.nx} {g.ny} {g.hx!r} {g.hy!r}\n".encode())
            fh.write(self.values.astype("<f8").tobytes())

    @classmethod
    def from_raw(cls, path, origin=(0.0, 0.0)):
        with open(path, "rb") as fh:
            header = fh.readline().decode().split()
            data = np.frombuffer(fh.read(), dtype="<f8")
        nx, ny, hx, hy = int(header[0]), int(header[1]), float(header[2]), float(header[3])
        return cls(data.copy(), Grid(nx, ny, hx, hy, origin))


def interpolate(expr, grid: Grid):
    """Nodal interpolant of an expression in ``x1, x2``."""
    vals = expr(x=grid.points()) if hasattr(expr, "source") else np.asarray(expr(grid.points()), dtype=float)
    return DiscreteFunction(vals, grid)


def discrete_gradient(u: DiscreteFunction):
    """Per-triangle gradient, shape ``(n_cells, 2)``; exact on affine functions."""
    g = u.grid
    return np.einsum("tk,tkd->td", u.flat[g.tri], g.hat_grads)


def lp_norm(u: DiscreteFunction, s):
    """``L^s`` norm of the cell values (``s = inf`` gives the nodal max)."""
    if math.isinf(s):
        return u.max_abs()
    return float(np.sum(u.grid.areas * np.abs(u.cell_values()) ** s) ** (1.0 / s))


def _cell_args(u):
    return u.grid.centroids, u.cell_values(), discrete_gradient(u)


def discrete_energy(f, u: DiscreteFunction):
    """Centroid-rule value of ``int f(x, u, Du) dx``."""
    x, uc, du = _cell_args(u)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = f.value(x, uc, du)
    if not np.all(np.isfinite(vals)):
        bad = int(np.argmax(~np.isfinite(vals)))
        raise NonFiniteError(f"energy density not finite on cell {bad}")
    return float(np.sum(vals * u.grid.areas))


def _assemble(grid, a_vals, b_vals):
    """Nodal residual from cell values of ``a`` and ``b``."""
    contrib = np.einsum("tkd,td->tk", grid.hat_grads, a_vals) + (b_vals / 3.0)[:, None]
    contrib *= grid.areas[:, None]
    return np.bincount(grid.tri.ravel(), weights=contrib.ravel(), minlength=grid.n_nodes)


def _residual_full(problem, u, reg=0.0, frozen_u=None):
    x, uc, du = _cell_args(u)
    uu = uc if frozen_u is None else frozen_u
    with np.errstate(over="ignore", invalid="ignore"):
        a_vals = problem.vector_field(x, uu, du, reg=reg)
        b_vals = problem.rhs(x, uu, du)
    if not (np.all(np.isfinite(a_vals)) and np.all(np.isfinite(b_vals))):
        raise NonFiniteError("vector field or right-hand side not finite during assembly")
    return _assemble(u.grid, a_vals, b_vals)


def _datum(problem, grid):
    return interpolate(problem.boundary, grid).values


def _check_boundary(problem, u, atol=1e-12):
    g = u.grid
    target = _datum(problem, g)[g.boundary_mask]
    have = u.values[g.boundary_mask]
    err = np.abs(have - target)
    if np.any(err > atol * np.maximum(1.0, np.abs(target))):
        j = int(np.argmax(err))
        node = int(g.boundary[j])
        raise PreconditionError(f"boundary node {node} has u = {have[j]!r}, datum {target[j]!r}")


def weak_residual(problem, u: DiscreteFunction, reg=0.0):
    """Weak residual at interior nodes, as an array of shape ``(ny, nx)``."""
    _check_boundary(problem, u)
    r = _residual_full(problem, u, reg)
    return r[u.grid.interior].reshape(u.grid.ny, u.grid.nx)


# -- nonlinear solve ------------------------------------------------------------


@dataclass
class SolveOptions:
    method: str = "newton"
    max_iters: int = 100
    residual_tol: float = 1e-10
    min_damping: float = 2.0**-20
    fd_step: float = 1e-7
    regularization: float = 1e-8
    inner_iters: int = 30

    def __post_init__(self):
        if self.method not in ("newton", "picard", "energy_descent"):
            raise ConfigError(f"unknown solve method {self.method!r}")
        if not self.residual_tol > 0:
            raise ConfigError("residual_tol must be positive")
        if int(self.max_iters) < 1:
            raise ConfigError("max_iters must be >= 1")
        if not 0 < self.min_damping <= 1:
            raise ConfigError("min_damping must lie in (0, 1]")

    @classmethod
    def from_config(cls, cfg):
        try:
            return cls(**(cfg or {}))
        except TypeError as exc:
            raise ConfigError(f"bad solver options: {exc}") from None


class _System:
    """Residual and finite-difference Jacobian restricted to interior unknowns."""

    OFFSETS = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))

    def __init__(self, problem, u0, opts):
        self.problem = problem
        self.grid = u0.grid
        self.base = u0.values.copy()
        self.opts = opts
        g = self.grid
        NY, NX = g.shape
        jj, ii = np.divmod(g.interior, NX)
        self.color = (ii % 3) + 3 * (jj % 3)
        pos = -np.ones(g.n_nodes, dtype=int)
        pos[g.interior] = np.arange(g.interior.size)
        rows, cols = [], []
        for di, dj in self.OFFSETS:
            ni, nj = ii + di, jj + dj
            ok = (ni >= 0) & (ni < NX) & (nj >= 0) & (nj < NY)
            k = pos[np.where(ok, nj * NX + ni, 0)]
            ok &= k >= 0
            rows.append(np.flatnonzero(ok))
            cols.append(k[ok])
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        self.col_color = self.color[self.cols]

    def full(self, U):
        vals = self.base.copy().ravel()
        vals[self.grid.interior] = U
        return DiscreteFunction(vals, self.grid)

    def residual(self, U, frozen=None):
        r = _residual_full(self.problem, self.full(U), self.opts.regularization, frozen)
        return r[self.grid.interior]

    def jacobian(self, U, frozen=None):
        h = self.opts.fd_step * max(1.0, float(np.max(np.abs(U))) if U.size else 1.0)
        d = np.empty((9, U.size))
        for c in range(9):
            e = (self.color == c) * h
            d[c] = (self.residual(U + e, frozen) - self.residual(U - e, frozen)) / (2 * h)
        vals = d[self.col_color, self.rows]
        return sp.csc_matrix((vals, (self.rows, self.cols)), shape=(U.size, U.size))

    def step(self, U, R, frozen=None):
        J = self.jacobian(U, frozen)
        with np.errstate(all="ignore"):
            try:
                dU = spsolve(J, -R)
            except RuntimeError as exc:
                raise SingularJacobianError(f"linear solve failed: {exc}") from None
        if not np.all(np.isfinite(dU)):
            raise SingularJacobianError("Jacobian is singular")
        return dU


def _newton(sys_, U, opts, log, frozen=None, max_iters=None, tol=None, it0=0):
    max_iters = opts.max_iters if max_iters is None else max_iters
    tol = opts.residual_tol if tol is None else tol
    R = sys_.residual(U, frozen)
    res = float(np.max(np.abs(R))) if R.size else 0.0
    dampings = []
    for it in range(max_iters):
        if res <= tol:
            return U, res, True
        try:
            dU = sys_.step(U, R, frozen)
        except SingularJacobianError as exc:
            exc.history = dampings
            exc.residual = res
            raise
        lam = 1.0
        while True:
            Un = U + lam * dU
            try:
                Rn = sys_.residual(Un, frozen)
                rn = float(np.max(np.abs(Rn)))
            except NonFiniteError:
                rn = math.inf
            if rn < (1 - 1e-4 * lam) * res or lam <= opts.min_damping:
                break
            lam *= 0.5
        if not math.isfinite(rn):
            raise ConvergenceError("residual became non-finite", residual=res, history=dampings)
        U, R, res = Un, Rn, rn
        dampings.append(lam)
        log.add(it0 + it + 1, res, lam)
    return U, res, res <= tol


def _energy(problem, U, sys_):
    u = sys_.full(U)
    x, uc, _ = _cell_args(u)
    e = discrete_energy(problem.energy, u)
    if not problem.rhs.is_zero:
        e += float(np.sum(problem.rhs(x, uc, np.zeros((uc.size, 2))) * uc * u.grid.areas))
    return e


def _energy_descent(problem, sys_, U, opts, log):
    if not (problem.vector_field.is_variational and problem.rhs.has_potential
            and not problem.energy.depends_on_u()):
        raise PreconditionError("energy descent needs a = D_xi f with f independent of u and b = b(x)")
    E = _energy(problem, U, sys_)
    log.energies.append(E)
    R = sys_.residual(U)
    res = float(np.max(np.abs(R)))
    for it in range(opts.max_iters):
        if res <= opts.residual_tol:
            return U, res, True
        dU = sys_.step(U, R)
        slope = float(R @ dU)
        if not slope < 0:
            dU, slope = -R, -float(R @ R)
        lam = 1.0
        while True:
            Un = U + lam * dU
            try:
                En = _energy(problem, Un, sys_)
            except NonFiniteError:
                En = math.inf
            if En <= E + 1e-4 * lam * slope or (En <= E and lam < 1):
                break
            if lam <= opts.min_damping:
                # rounding floor: accept only if the energy did not grow
                if not En <= E:
                    raise ConvergenceError("energy descent stalled", residual=res,
                                           history=[r[2] for r in log.records])
                break
            lam *= 0.5
        U, E = Un, En
        R = sys_.residual(U)
        res = float(np.max(np.abs(R)))
        log.energies.append(E)
        log.add(it + 1, res, lam)
    return U, res, res <= opts.residual_tol


def solve(problem, u0: DiscreteFunction, opts: Optional[SolveOptions] = None):
    """Solve for a discrete weak solution with ``u = u0`` on boundary nodes.

    Raises :class:`ConvergenceError` (carrying the last residual) if the
    tolerance is not met within ``opts.max_iters`` iterations.
    """
    opts = opts or SolveOptions()
    if problem.pack.n != 2:
        raise ConfigError("the solver works in two dimensions")
    if not np.all(np.isfinite(u0.values)):
        raise PreconditionError("initial function must be finite")
    sys_ = _System(problem, u0, opts)
    U = u0.values.ravel()[u0.grid.interior].copy()
    log = SolveLog(method=opts.method)
    if opts.method == "newton":
        U, res, ok = _newton(sys_, U, opts, log)
    elif opts.method == "energy_descent":
        U, res, ok = _energy_descent(problem, sys_, U, opts, log)
    else:
        ok, res, it = False, math.inf, 0
        for outer in range(opts.max_iters):
            frozen = sys_.full(U).cell_values()
            U, _, _ = _newton(sys_, U, opts, log, frozen=frozen, max_iters=opts.inner_iters,
                              tol=0.1 * opts.residual_tol, it0=it)
            it = len(log.records)
            res = float(np.max(np.abs(sys_.residual(U))))
            log.add(it, res, 0.0)
            if res <= opts.residual_tol:
                ok = True
                break
    log.converged, log.residual = bool(ok), float(res)
    if not ok:
        raise ConvergenceError(f"{opts.method} did not converge: residual {res:.3e} after "
                               f"{len(log.records)} iterations", residual=res,
                               history=[r[2] for r in log.records])
    out = sys_.full(U)
    out.log = log
    return out


# -- well-posedness of the pairings --------------------------------------------


def _pw(t, e):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return np.where(t > 0, np.power(t, e), 0.0 if e > 0 else 1.0)


def validate_weak_pairings(problem, u: DiscreteFunction, k, M=None):
    """Discrete pairings of ``a`` and ``b`` with the truncation at level ``k``.

    Returns a dict with both sides of three bounding chains: the ``a``
    pairing on ``A_k`` against the comparison and doubling constants, the
    ``b`` pairing against the growth constants of ``b``, and the energy of
    the truncation against ``c6 F(u) + int f(x, 0, 0)``.
    """
    from .energy import estimate_delta2

    bmax = u.boundary_max_abs()
    if not k > bmax:
        raise PreconditionError(f"k = {k} must exceed max boundary |u0| = {bmax}")
    pack = problem.pack
    f = problem.energy
    g = u.grid
    x, uc, du = _cell_args(u)
    area = g.areas
    inA = np.abs(uc) > k
    if M is None:
        M = problem.M_delta2 or estimate_delta2(f, problem.sampling_domain()).M_est
    with np.errstate(over="ignore", invalid="ignore"):
        fv = f.value(x, uc, du)
        a_dot = np.sum(problem.vector_field(x, uc, du) * du, axis=1)
        bv = problem.rhs(x, uc, du)
    au = np.abs(uc)
    ps = pack.p_star
    c = {i: (getattr(pack, f"c{i}") or 0.0) for i in range(1, 10)}
    b1, b2 = pack.b1(x=x), pack.b2(x=x)
    lhs_a = float(np.sum(np.abs(a_dot)[inA] * area[inA]))
    rhs_a_cell = c[3] * (M - 1) * fv + c[4] * _pw(au, ps) + c[2] * _pw(au, pack.p_star) + b1 + b2
    rhs_a = float(np.sum(rhs_a_cell[inA] * area[inA]))

    if pack.c7 is None and pack.c9 is not None:
        pk = pack.implied_unilateral()
    else:
        pk = pack
    c7, c8 = pk.c7 or 0.0, pk.c8 or 0.0
    phi = np.where(inA, (au - k) * np.sign(uc), 0.0)
    G = _pw(fv, 1 - 1 / ps) + _pw(np.linalg.norm(du, axis=1), pack.p + pack.p / pack.n - 1) + _pw(au, ps - 1)
    lhs_b = float(np.sum(np.abs(bv * phi) * area))
    rhs_b_cell = au * (c7 * G + pk.b3(x=x)) + c8 * (fv + _pw(au, ps)) + pk.b4(x=x)
    rhs_b = float(np.sum(rhs_b_cell[inA] * area[inA]))

    from .degiorgi import truncate

    phi_u = truncate(u, k)
    F_phi = discrete_energy(f, phi_u)
    F_u = discrete_energy(f, u)
    with np.errstate(over="ignore", invalid="ignore"):
        f00 = float(np.sum(f.value(x, np.zeros_like(uc), np.zeros_like(du)) * area))
    rhs_t = c[6] * F_u + f00
    return {
        "k": float(k),
        "M": float(M),
        "a_pairing": {"lhs": lhs_a, "rhs": rhs_a, "passed": bool(lhs_a <= rhs_a * (1 + 1e-12) + 1e-300)},
        "b_pairing": {"lhs": lhs_b, "rhs": rhs_b, "passed": bool(lhs_b <= rhs_b * (1 + 1e-12) + 1e-300)},
        "truncation_energy": {"lhs": F_phi, "rhs": rhs_t, "passed": bool(F_phi <= rhs_t * (1 + 1e-12) + 1e-300)},
        "energy_finite": bool(math.isfinite(F_u)),
    }

"""Level-set (De Giorgi) iteration on discrete solutions.

The objects are cell-wise: a triangle belongs to ``A_k`` when the vertex
average of ``|u|`` exceeds ``k``, and every integral over ``A_k`` uses the
same cell values.  With that convention the Chebyshev step of the
iteration holds exactly for the discrete sums.

The iteration constant ``L`` is assembled from two fitted quantities, the
Caccioppoli constant ``c_c`` (largest ``required_c`` over the audited
levels) and the Poincare constant ``C_P`` (largest ratio over the trace
levels), so that ``J_{h+1} <= L zeta**h J_h**(1 + delta)`` follows from the
audited inequalities at every recorded step.
"""

from __future__ import annotations

import copy
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    InvalidCertificateError,
    PQBoundError,
    PreconditionError,
    ThresholdError,
    UncoveredProblemError,
)
from .expr import Expr
from .solver import DiscreteFunction, SolveOptions, discrete_gradient, interpolate, lp_norm, solve
from .structure import delta_exponent, gamma_exponent

__all__ = [
    "LevelSet",
    "LevelSequence",
    "TraceStep",
    "IterationTrace",
    "Certificate",
    "superlevel",
    "truncate",
    "truncate_values",
    "j_value",
    "poincare_check",
    "caccioppoli_audit",
    "audit_levels",
    "recursion_lemma",
    "find_threshold_d",
    "verify_estimate",
]


@dataclass
class LevelSet:
    cells: np.ndarray
    nodes: np.ndarray
    measure: float

    def __len__(self):
        return int(np.count_nonzero(self.cells))


def superlevel(u: DiscreteFunction, k):
    """Cells (and nodes) where ``|u| > k`` and the area of those cells."""
    if k < 0:
        raise PreconditionError("level k must be nonnegative")
    cells = np.abs(u.cell_values()) > k
    nodes = np.abs(u.values) > k
    return LevelSet(cells=cells, nodes=nodes, measure=float(np.sum(u.grid.areas[cells])))


def truncate_values(values, k):
    """``sgn(v) (|v| - k)_+`` elementwise."""
    v = np.asarray(values, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - k, 0.0)


def truncate(u: DiscreteFunction, k):
    """Truncation ``sgn(u) (|u| - k)_+`` at the nodes; vanishes on the boundary."""
    bmax = u.boundary_max_abs()
    if not k >= bmax:
        raise PreconditionError(f"level k = {k} is below the boundary maximum {bmax}")
    return DiscreteFunction(truncate_values(u.values, k), u.grid)


def _grad_norm(u):
    return np.linalg.norm(discrete_gradient(u), axis=1)


def j_value(u: DiscreteFunction, k, p):
    """``sum over A_k of |Du|**p`` times the cell area."""
    if not p > 1:
        raise PreconditionError("p must exceed 1")
    cells = np.abs(u.cell_values()) > k
    g = _grad_norm(u)
    return float(np.sum(g[cells] ** p * u.grid.areas[cells]))


def _excess_power(u, k, e):
    uc = np.abs(u.cell_values())
    cells = uc > k
    return float(np.sum((uc[cells] - k) ** e * u.grid.areas[cells]))


def poincare_check(u: DiscreteFunction, k, p, p_star):
    """``sum_{A_k} (|u| - k)**p*`` against ``J(k)**(p*/p)``.

    ``C_P_est`` is their ratio; it is ``None`` when both sides vanish and
    ``inf`` (with ``anomaly=True``) when only the right side does.
    """
    lhs = _excess_power(u, k, p_star)
    rhs = j_value(u, k, p) ** (p_star / p)
    if rhs > 0:
        return {"k": float(k), "lhs": lhs, "rhs": rhs, "C_P_est": lhs / rhs, "anomaly": False}
    if lhs > 0:
        return {"k": float(k), "lhs": lhs, "rhs": rhs, "C_P_est": math.inf, "anomaly": True}
    return {"k": float(k), "lhs": lhs, "rhs": rhs, "C_P_est": None, "anomaly": False}


def _pack_norms(problem, u):
    pack = problem.pack
    if pack.norm_b1 is None or pack.norm_b3 is None:
        pack = pack.with_norms(u.grid.centroids, u.grid.areas)
    return pack


def caccioppoli_audit(problem, u: DiscreteFunction, k):
    """Left side ``J(k)`` and the four right-hand terms with unit constant.

    ``required_c`` is the smallest constant for which the inequality holds
    at this level (0 when ``A_k`` is empty).
    """
    floor = max(u.boundary_max_abs(), 1.0)
    if not k > floor:
        raise PreconditionError(f"level k = {k} must exceed max(|u0|_inf, 1) = {floor}")
    pack = _pack_norms(problem, u)
    ps, s1, s3 = pack.p_star, pack.s1, pack.s3
    A = superlevel(u, k)
    lhs = j_value(u, k, pack.p)
    ex = _excess_power(u, k, ps)
    ex_norm = ex ** (1.0 / ps)
    inv1 = 0.0 if math.isinf(s1) else 1.0 / s1
    inv3 = 0.0 if math.isinf(s3) else 1.0 / s3
    m = A.measure
    terms = [
        pack.norm_b3 * ex_norm * (m ** (1 - inv3 - 1 / ps) if m > 0 else 0.0),
        ex,
        k**ps * m,
        pack.norm_b1 * (m ** (1 - inv1) if m > 0 else 0.0),
    ]
    total = sum(terms)
    if total > 0:
        req = lhs / total
    else:
        req = 0.0 if lhs == 0 else math.inf
    return {"k": float(k), "lhs": lhs, "rhs_terms": terms, "required_c": req, "measure": m}


def audit_levels(u: DiscreteFunction, n_levels=10, floor=None):
    """Ten-point default grid of levels between ``max(|u0|_inf, 1)`` and ``max|u|``."""
    floor = max(u.boundary_max_abs(), 1.0) if floor is None else floor
    top = u.max_abs()
    lo = floor * (1 + 1e-9) + 1e-12
    if top <= lo:
        return np.linspace(lo, 2 * lo, n_levels)
    return np.linspace(lo, top, n_levels)


def recursion_lemma(z0, L, zeta, delta, H):
    """Run ``z_{h+1} = L zeta**h z_h**(1 + delta)`` against ``zeta**(-h/delta) z0``.

    ``converges`` is the smallness condition ``z0 <= L**(-1/delta) zeta**(-1/delta**2)``.
    """
    if not (L > 0 and delta > 0 and zeta > 1 and z0 > 0) or int(H) != H or H < 0:
        raise PQBoundError("recursion lemma needs L, delta, z0 > 0, zeta > 1 and an integer H >= 0")
    threshold = L ** (-1.0 / delta) * zeta ** (-1.0 / delta**2)
    converges = z0 <= threshold * (1 + 1e-12)
    z = np.empty(int(H) + 1)
    z[0] = z0
    with np.errstate(over="ignore", under="ignore"):
        for h in range(int(H)):
            z[h + 1] = L * zeta**h * z[h] ** (1 + delta)
        bounds = zeta ** (-np.arange(int(H) + 1) / delta) * z0
    return {
        "converges": bool(converges),
        "threshold": float(threshold),
        "z": z,
        "bounds": bounds,
        "satisfied": bool(np.all(z <= bounds * (1 + 1e-12))),
    }


@dataclass
class LevelSequence:
    d: float
    H: int = 40

    def __post_init__(self):
        if not self.d > 0:
            raise PreconditionError("d must be positive")

    @property
    def levels(self):
        h = np.arange(self.H + 1)
        return self.d * (1 - 2.0 ** (-(h + 1)))


@dataclass
class TraceStep:
    h: int
    k: float
    measure: float
    J: float
    bound: float
    J_hat: float = 0.0
    C_P: Optional[float] = None


@dataclass
class IterationTrace:
    steps: list = field(default_factory=list)

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write("h,k_h,measure,J_h,bound\n")
        for s in self.steps:
            buf.write(f"{s.h},{s.k:.17g},{s.measure:.17g},{s.J:.17g},{s.bound:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def arrays(self):
        return {
            "h": [s.h for s in self.steps],
            "k_h": [s.k for s in self.steps],
            "measure": [s.measure for s in self.steps],
            "J_h": [s.J for s in self.steps],
            "bound": [s.bound for s in self.steps],
            "J_hat": [s.J_hat for s in self.steps],
        }


@dataclass
class Certificate:
    d: float
    delta: float
    L: float
    zeta: float
    c_star: float
    threshold_ok: bool
    trace: IterationTrace
    observed_max: float
    tolerance: float
    C_P: float
    c_caccioppoli: float
    checks: dict = field(default_factory=dict)
    predicted_linfty_form: dict = field(default_factory=dict)
    audit: list = field(default_factory=list)

    @property
    def valid(self):
        return bool(self.threshold_ok and self.observed_max <= self.d + self.tolerance)

    def to_dict(self):
        return {
            "d": self.d,
            "delta": self.delta,
            "L": self.L,
            "zeta": self.zeta,
            "c_star": self.c_star,
            "C_P": self.C_P,
            "c_caccioppoli": self.c_caccioppoli,
            "threshold_ok": self.threshold_ok,
            "observed_max": self.observed_max,
            "tolerance": self.tolerance,
            "valid": self.valid,
            "checks": self.checks,
            "predicted_linfty_form": self.predicted_linfty_form,
            "audit": self.audit,
            "trace": self.trace.arrays(),
        }


def _fit_L(pack, c_c, C_P, grad_p_norm):
    """Iteration constant from the fitted Caccioppoli and Poincare constants."""
    ps = pack.p_star
    inv1 = 0.0 if math.isinf(pack.s1) else 1.0 / pack.s1
    inv3 = 0.0 if math.isinf(pack.s3) else 1.0 / pack.s3
    e3 = 1 - inv3 - 1 / ps
    if e3 < 0:
        raise PreconditionError("need 1 - 1/s3 - 1/p* >= 0 for the measure step")
    base = C_P * 4.0**ps
    kappa3 = C_P ** (1 / ps) * base**e3
    kappa1 = base ** (1 - inv1)
    c_star = c_c * max(C_P * (1 + 4.0**ps), kappa3, kappa1) * (1 + pack.norm_b1 + pack.norm_b3)
    m = max(inv1, inv3)
    return c_star, c_star * (1 + grad_p_norm**ps) ** m


def find_threshold_d(problem, u: DiscreteFunction, H=40, n_levels=10, d_max=None, rounds=5):
    """Smallest level ``d`` meeting the smallness condition, with its trace.

    Raises :class:`ThresholdError` when even ``d_max`` fails and
    :class:`InvalidCertificateError` when the observed maximum exceeds ``d``.
    """
    pack = _pack_norms(problem, u)
    p, ps = pack.p, pack.p_star
    delta = delta_exponent(pack)
    zeta = 2.0**ps
    floor = max(u.boundary_max_abs(), 1.0)
    d_lo = 2 * floor
    d_max = 64 * floor if d_max is None else float(d_max)
    tol = 1e-6 * d_max
    gp = float(np.sum(_grad_norm(u) ** p * u.grid.areas) ** (1 / p))
    prob = copy.copy(problem)
    prob.pack = pack

    levels = list(audit_levels(u, n_levels, floor))
    audits = {}
    poinc = {}

    def fit(levels_c, levels_p):
        for k in levels_c:
            if k not in audits:
                audits[k] = caccioppoli_audit(prob, u, k)
        for k in levels_p:
            if k not in poinc:
                poinc[k] = poincare_check(u, k, p, ps)
        c_c = max([1.0] + [a["required_c"] for a in audits.values()])
        cps = [r["C_P_est"] for r in poinc.values() if r["C_P_est"] is not None]
        C_P = max([1.0] + cps)
        return c_c, C_P

    c_c, C_P = fit(levels, levels)
    d = None
    for _ in range(rounds):
        c_star, L = _fit_L(pack, c_c, C_P, gp)
        thr = L ** (-1 / delta) * zeta ** (-1 / delta**2)

        def ok(dd):
            return j_value(u, dd / 2, p) <= thr

        if not ok(d_max):
            raise ThresholdError(f"J_0(d_max) = {j_value(u, d_max / 2, p):.6g} exceeds threshold {thr:.6g}")
        lo, hi = d_lo, d_max
        if ok(d_lo + tol):
            hi = d_lo + tol
        else:
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                lo, hi = (lo, mid) if ok(mid) else (mid, hi)
        d = hi
        ks = list(LevelSequence(d, H).levels)
        new_c, new_p = fit(ks, ks)
        if new_c <= c_c and new_p <= C_P:
            break
        c_c, C_P = new_c, new_p
    c_star, L = _fit_L(pack, c_c, C_P, gp)
    thr = L ** (-1 / delta) * zeta ** (-1 / delta**2)

    seq = LevelSequence(d, H)
    ks = seq.levels
    J = np.array([j_value(u, k, p) for k in ks])
    J0 = J[0]
    steps = []
    for h, k in enumerate(ks):
        A = superlevel(u, k)
        cp = poincare_check(u, k, p, ps)["C_P_est"]
        steps.append(TraceStep(h=h, k=float(k), measure=A.measure, J=float(J[h]),
                               bound=float(zeta ** (-h / delta) * J0),
                               J_hat=_excess_power(u, k, ps), C_P=cp))
    trace = IterationTrace(steps)

    rec_ok, cheb_ok, mono_ok, bound_ok = True, True, True, True
    for h in range(H):
        a, b = steps[h], steps[h + 1]
        rhs = L * zeta**h * a.J ** (1 + delta)
        rec_ok &= b.J <= rhs * (1 + 1e-12)
        mono_ok &= b.J <= a.J and b.measure <= a.measure
        cp = a.C_P if a.C_P is not None and math.isfinite(a.C_P) else (0.0 if a.J == 0 else math.inf)
        cheb = cp * 4.0**ps * (2.0**h / d) ** ps * a.J ** (ps / p)
        cheb_ok &= b.measure <= cheb * (1 + 1e-12)
    for s in steps:
        bound_ok &= s.J <= s.bound * (1 + 1e-12)
    threshold_ok = bool(J0 <= thr)

    checks = {
        "recursion": bool(rec_ok),
        "chebyshev": bool(cheb_ok),
        "monotone": bool(mono_ok),
        "lemma_bound": bool(bound_ok),
        "threshold": float(thr),
        "J0": float(J0),
        "trace_nontrivial": bool(J0 > 0),
    }
    # epsilon-theorem sequence: record the constant its recursion needs
    if getattr(problem, "expected", {}).get("classification") == "theorem2" or pack.epsilon > 0:
        req = 0.0
        for h in range(H):
            a, b = steps[h], steps[h + 1]
            if b.J_hat > 0:
                req = max(req, b.J_hat / (zeta**h * a.J_hat ** (1 + delta)))
        checks["J_hat_required_L"] = req

    observed = u.max_abs()
    tol_cell = u.grid.cell_diameter * float(np.max(_grad_norm(u))) if u.grid.n_cells else 0.0
    form = {"norm_u0_inf": u.boundary_max_abs(), "norm_u_pstar": lp_norm(u, ps), "norm_u_inf": observed}
    try:
        gam = gamma_exponent(pack)
        form["gamma"] = gam
        form["ratio"] = observed / ((1 + form["norm_u0_inf"]) * (1 + form["norm_u_pstar"]) ** gam)
    except PQBoundError:
        pass
    cert = Certificate(
        d=float(d), delta=float(delta), L=float(L), zeta=float(zeta), c_star=float(c_star),
        threshold_ok=threshold_ok, trace=trace, observed_max=observed, tolerance=tol_cell,
        C_P=float(C_P), c_caccioppoli=float(c_c), checks=checks, predicted_linfty_form=form,
        audit=[audits[k] for k in sorted(audits)][:n_levels],
    )
    if threshold_ok and not observed <= d + tol_cell:
        raise InvalidCertificateError(f"observed max {observed} exceeds d = {d} + {tol_cell}")
    return cert


def _scaled(problem, lam):
    out = copy.copy(problem)
    out.boundary = Expr(f"({lam!r}) * ({problem.boundary.source})")
    return out


def verify_estimate(problem, family, grid=None, opts: Optional[SolveOptions] = None, classification=None):
    """Fit the constant of the epsilon-theorem bound over scaled boundary data.

    ``family`` is a list of factors ``lam``; each instance uses ``lam * u0``.
    """
    if classification is not None and classification != "theorem2":
        raise UncoveredProblemError(f"estimate fit needs a theorem2 problem, got {classification}")
    gam = gamma_exponent(problem.pack)
    grid = grid or problem.make_grid()
    ps = problem.pack.p_star
    records = []
    for lam in family:
        pb = _scaled(problem, float(lam))
        u0 = interpolate(pb.boundary, grid)
        u = solve(pb, u0, opts)
        ninf = u.max_abs()
        n0 = u0.boundary_max_abs()
        npst = lp_norm(u, ps)
        ratio = ninf / ((1 + n0) * (1 + npst) ** gam)
        records.append({"scale": float(lam), "norm_u_inf": ninf, "norm_u0_inf": n0,
                        "norm_u_pstar": npst, "ratio": ratio,
                        "iterations": len(u.log.records) if u.log else 0})
    ratios = [r["ratio"] for r in records]
    lo = min(ratios) if ratios else 0.0
    return {
        "fitted_c": max(ratios) if ratios else 0.0,
        "gamma_used": gam,
        "stability": (max(ratios) / lo) if lo > 0 else math.inf,
        "records": records,
    }

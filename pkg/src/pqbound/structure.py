"""Vector fields, right-hand sides, parameter packs and the hypothesis classifier.

The equation is ``div a(x, u, Du) = b(x, u, Du)`` with weak form
``int (a, Dphi) + b phi dx = 0``.  This module audits the comparison of ``a``
with the energy gradient, the growth of ``b``, and computes the exponents
``gamma``, ``delta`` and ``sigma`` that drive the level-set iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Optional

import numpy as np

from .energy import (
    CheckReport,
    EnergyDensity,
    GrowthEnvelope,
    SamplingDomain,
    _norm,
    _pow,
    check_convexity,
    check_coercivity,
    check_gradient_growth,
    check_nonnegative,
    check_summability,
    check_u_monotonicity,
    compare,
    density_from_config,
    estimate_delta2,
)
from .errors import ConfigError, ExponentError, MissingOverrideError, PQBoundError
from .expr import Expr, as_expr

__all__ = [
    "VectorField",
    "RightHandSide",
    "ParameterPack",
    "Classification",
    "IncompleteSpecError",
    "sobolev_conjugate",
    "check_comparison",
    "check_rhs_growth",
    "check_standard_growth",
    "check_ellipticity",
    "classify",
    "gamma_exponent",
    "delta_exponent",
    "sigma_exponent",
]

RTOL = 1e-9
STRICT_SLACK = 1e-6
SERRIN_CAP = 1e3
DELTA2_CAP = 1e6


class IncompleteSpecError(ConfigError):
    """A problem lacks fields needed for classification."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("incomplete problem specification, missing: " + ", ".join(self.missing))


# -- vector field -------------------------------------------------------------


class VectorField:
    """The field ``a(x, u, xi)`` of the divergence operator.

    Parameters
    ----------
    kind : str
        ``gradient_of_f``, ``weighted_sum``, ``linear_plus_power`` or ``custom``.
    f, g : EnergyDensity, optional
        Densities whose gradients are used.  ``gradient_of_f`` without ``f``
        is bound later to the problem energy.
    scale : float
        Multiplier for ``gradient_of_f``.
    alpha, beta : expression
        Weights of ``weighted_sum``.
    matrix : list of lists of expressions
        Coefficients ``a_ij(x)`` of ``linear_plus_power``; need not be symmetric.
    weight, q, component :
        The power term ``weight(x, u) |xi_k|**(q-2) xi_k e_k`` with ``k = component``.
    func : callable
        ``func(x, u, xi) -> (N, n)`` for ``custom``.
    """

    KINDS = ("gradient_of_f", "weighted_sum", "linear_plus_power", "custom")

    def __init__(self, kind="gradient_of_f", f=None, g=None, scale=1.0, alpha=1.0, beta=1.0,
                 matrix=None, weight=0.0, q=2.0, component=0, func: Optional[Callable] = None):
        if kind not in self.KINDS:
            raise ConfigError(f"unknown vector field kind {kind!r}")
        self.kind = kind
        self.f = f
        self.g = g
        self.scale = float(scale)
        self.alpha = as_expr(alpha)
        self.beta = as_expr(beta)
        self.weight = as_expr(weight)
        self.q = float(q)
        self.component = int(component)
        self.func = func
        self.matrix = None
        if kind == "linear_plus_power":
            if matrix is None:
                raise ConfigError("linear_plus_power needs a coefficient matrix")
            rows = [[as_expr(v) for v in row] for row in matrix]
            if any(len(r) != len(rows) for r in rows):
                raise ConfigError("coefficient matrix must be square")
            if self.q <= 1:
                raise ConfigError("power term exponent q must exceed 1")
            if not 0 <= self.component < len(rows):
                raise ConfigError("power term component out of range")
            self.matrix = rows
        if kind == "weighted_sum" and (f is None or g is None):
            raise ConfigError("weighted_sum needs densities f and g")
        if kind == "custom" and func is None:
            raise ConfigError("custom vector field needs func")

    def bind(self, energy):
        """Attach the problem energy to an unbound ``gradient_of_f`` field."""
        if self.kind == "gradient_of_f" and self.f is None:
            self.f = energy
        return self

    @property
    def is_variational(self):
        return self.kind == "gradient_of_f" and self.scale == 1.0

    def matrix_at(self, x):
        """``(N, n, n)`` array of ``a_ij(x)``."""
        n = len(self.matrix)
        out = np.empty((x.shape[0], n, n))
        for i in range(n):
            for j in range(n):
                out[:, i, j] = self.matrix[i][j](x=x)
        return out

    def __call__(self, x, u, xi, reg=0.0):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if self.kind == "gradient_of_f":
            if self.f is None:
                raise ConfigError("gradient_of_f field is not bound to an energy")
            return self.scale * self.f.grad(x, u, xi, reg)
        if self.kind == "weighted_sum":
            a = self.alpha(x=x, u=u)[:, None]
            b = self.beta(x=x, u=u)[:, None]
            return a * self.f.grad(x, u, xi, reg) + b * self.g.grad(x, u, xi, reg)
        if self.kind == "linear_plus_power":
            out = np.einsum("nij,nj->ni", self.matrix_at(x), xi)
            t = xi[:, self.component]
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.power(t * t + reg * reg, (self.q - 2.0) / 2.0)
            w = np.where((t != 0) | (reg > 0), w, 0.0)
            out[:, self.component] += self.weight(x=x, u=u) * w * t
            return out
        return np.asarray(self.func(x, u, xi), dtype=float)

    def to_config(self):
        if self.kind == "gradient_of_f":
            cfg = {"kind": self.kind, "scale": self.scale}
            return cfg
        if self.kind == "weighted_sum":
            return {"kind": self.kind, "alpha": self.alpha.source, "beta": self.beta.source,
                    "f": self.f.to_config(), "g": self.g.to_config()}
        if self.kind == "linear_plus_power":
            return {"kind": self.kind, "matrix": [[e.source for e in r] for r in self.matrix],
                    "weight": self.weight.source, "q": self.q, "component": self.component}
        raise ConfigError("custom vector fields cannot be serialised")

    @classmethod
    def from_config(cls, cfg):
        if not isinstance(cfg, dict):
            raise ConfigError("vector_field must be a mapping")
        cfg = dict(cfg)
        kind = cfg.pop("kind", "gradient_of_f")
        for key in ("f", "g"):
            if key in cfg:
                cfg[key] = density_from_config(cfg[key])
        try:
            return cls(kind=kind, **cfg)
        except TypeError as exc:
            raise ConfigError(f"bad vector_field parameters: {exc}") from None


def check_ellipticity(a: VectorField, c_lo, c_hi, dom: SamplingDomain):
    """Eigenvalue bounds of the symmetric part of a ``linear_plus_power`` matrix.

    ``sum a_ij l_i l_j`` only sees the symmetric part, so its extreme
    eigenvalues over sampled ``x`` are the sharp constants.
    """
    if a.kind != "linear_plus_power":
        raise PQBoundError("ellipticity check applies to linear_plus_power fields")
    s = dom.draw()
    A = a.matrix_at(s.x)
    eig = np.linalg.eigvalsh(0.5 * (A + np.transpose(A, (0, 2, 1))))
    lo, hi = float(eig[:, 0].min()), float(eig[:, -1].max())
    ok = lo >= c_lo * (1 - RTOL) and hi <= c_hi * (1 + RTOL)
    return CheckReport(name="ellipticity", passed=bool(ok and c_lo > 0), n_samples=len(s),
                       worst_margin=min(lo - c_lo, c_hi - hi),
                       details={"min_eig": lo, "max_eig": hi, "c_lo": c_lo, "c_hi": c_hi})


# -- right-hand side ----------------------------------------------------------


class RightHandSide:
    """``b(x, u, xi)`` as a sum of expression terms.

    ``kind`` declares which arguments the terms may use (``x_only``, ``x_u``,
    ``x_xi`` or ``sum`` for anything); ``growth`` declares which growth form
    the problem claims (``unilateral``, ``absolute``, ``unilateral_epsilon``,
    ``absolute_epsilon``), or ``None`` to let the classifier try all.
    """

    KINDS = ("x_only", "x_u", "x_xi", "sum")
    GROWTHS = (None, "unilateral", "absolute", "unilateral_epsilon", "absolute_epsilon")

    def __init__(self, terms=(), kind="sum", growth=None):
        if isinstance(terms, (str, int, float, Expr)):
            terms = [terms]
        self.terms = [as_expr(t) for t in terms]
        if kind not in self.KINDS:
            raise ConfigError(f"unknown rhs kind {kind!r}")
        if growth not in self.GROWTHS:
            raise ConfigError(f"unknown rhs growth form {growth!r}")
        self.kind = kind
        self.growth = growth
        for t in self.terms:
            if kind in ("x_only", "x_xi") and t.depends_on_u():
                raise ConfigError(f"rhs term {t.source!r} uses u but kind is {kind}")
            if kind in ("x_only", "x_u") and t.depends_on_xi():
                raise ConfigError(f"rhs term {t.source!r} uses xi but kind is {kind}")

    @property
    def is_zero(self):
        return all(t.is_constant and float(t()) == 0.0 for t in self.terms)

    @property
    def has_potential(self):
        """True when ``b = b(x)``, so that ``b(x) u`` is a potential."""
        return all(not t.depends_on_u() and not t.depends_on_xi() for t in self.terms)

    def __call__(self, x, u, xi):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[0])
        for t in self.terms:
            out = out + t(x=x, u=u, xi=xi)
        return out

    def to_config(self):
        return {"kind": self.kind, "growth": self.growth, "terms": [t.source for t in self.terms]}

    @classmethod
    def from_config(cls, cfg):
        if cfg is None:
            return cls()
        if not isinstance(cfg, dict):
            raise ConfigError("rhs must be a mapping")
        unknown = set(cfg) - {"kind", "growth", "terms"}
        if unknown:
            raise ConfigError(f"unknown rhs fields {sorted(unknown)}")
        return cls(terms=cfg.get("terms", ()), kind=cfg.get("kind", "sum"), growth=cfg.get("growth"))


# -- parameters ---------------------------------------------------------------


def sobolev_conjugate(p, n, override=None):
    """``np/(n - p)`` for ``p < n``; the override otherwise.

    >>> sobolev_conjugate(2, 3)
    6.0
    """
    p = float(p)
    if not p > 1 or int(n) != n or n < 2:
        raise ConfigError("need p > 1 and an integer n >= 2")
    if p < n:
        return n * p / (n - p)
    if override is None:
        raise MissingOverrideError(f"p = {p} >= n = {n}: the Sobolev conjugate must be configured")
    if not float(override) > p:
        raise ExponentError("configured Sobolev conjugate must exceed p")
    return float(override)


def _parse_real(v):
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
        return math.inf
    return float(v)


@dataclass
class ParameterPack:
    """Exponents, structural constants and data of both theorems.

    Unset epsilon-theorem exponents default to ``p* - eps``, ``1 - 1/p* - eps``,
    ``p + p/n - eps`` and ``p* - eps``; with ``epsilon = 0`` they sit on the
    boundary of their ranges, which is the exact theorem.  ``b1 .. b4`` are
    nonnegative functions of ``x``; their norms may be filled in with
    :meth:`with_norms`.
    """

    n: int = 2
    p: float = 2.0
    p_star: Optional[float] = None
    s1: float = math.inf
    s3: float = math.inf
    epsilon: float = 0.0
    theta: Optional[float] = None
    alpha: Optional[float] = None
    r: Optional[float] = None
    s: Optional[float] = None
    c1: Optional[float] = None
    c2: Optional[float] = None
    c3: Optional[float] = None
    c4: Optional[float] = None
    c5: Optional[float] = None
    c6: Optional[float] = None
    c7: Optional[float] = None
    c8: Optional[float] = None
    c9: Optional[float] = None
    b1: Expr = field(default_factory=lambda: Expr("0"))
    b2: Expr = field(default_factory=lambda: Expr("0"))
    b3: Expr = field(default_factory=lambda: Expr("0"))
    b4: Expr = field(default_factory=lambda: Expr("0"))
    norm_b1: Optional[float] = None
    norm_b2: Optional[float] = None
    norm_b3: Optional[float] = None
    norm_b4: Optional[float] = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError("n must be an integer >= 2")
        self.n = int(self.n)
        self.p = float(self.p)
        if not self.p > 1:
            raise ConfigError("p must exceed 1")
        if self.p < self.n:
            exact = self.n * self.p / (self.n - self.p)
            if self.p_star is not None and not math.isclose(float(self.p_star), exact, rel_tol=1e-12):
                raise ConfigError(f"p_star must equal np/(n-p) = {exact} when p < n")
            self.p_star = exact
        else:
            self.p_star = sobolev_conjugate(self.p, self.n, self.p_star)
        self.s1 = _parse_real(self.s1)
        self.s3 = _parse_real(self.s3)
        for name in ("s1", "s3"):
            if not getattr(self, name) > self.n / self.p:
                raise ExponentError(f"{name} = {getattr(self, name)} must exceed n/p = {self.n / self.p}")
        self.epsilon = float(self.epsilon)
        if self.epsilon < 0 or self.epsilon >= 1:
            raise ConfigError("epsilon must lie in [0, 1)")
        ps, e = self.p_star, self.epsilon
        defaults = {"theta": ps - e, "alpha": 1 - 1 / ps - e, "r": self.p + self.p / self.n - e, "s": ps - e}
        for name, value in defaults.items():
            setattr(self, name, value if getattr(self, name) is None else float(getattr(self, name)))
        bounds = self.exponent_ranges()
        for name, (lo, hi) in bounds.items():
            v = getattr(self, name)
            if not lo <= v <= hi * (1 + 1e-12):
                raise ConfigError(f"{name} = {v} outside [{lo}, {hi}]")
        for i in range(1, 10):
            v = getattr(self, f"c{i}")
            if v is not None:
                v = float(v)
                if v < 0:
                    raise ConfigError(f"c{i} must be nonnegative")
                setattr(self, f"c{i}", v)
        for name in ("b1", "b2", "b3", "b4"):
            e = as_expr(getattr(self, name), "0")
            if e.depends_on_u() or e.depends_on_xi():
                raise ConfigError(f"{name} may depend on x only")
            setattr(self, name, e)

    def exponent_ranges(self):
        """Closed ranges of the epsilon-theorem exponents (upper ends are excluded there)."""
        ps = self.p_star
        return {
            "theta": (0.0, ps),
            "alpha": (0.0, 1 - 1 / ps),
            "r": (1.0, self.p + self.p / self.n),
            "s": (1.0, ps),
        }

    def strict_margins(self):
        """Relative distance of each epsilon exponent below its excluded upper end."""
        return {name: (hi - getattr(self, name)) / hi for name, (_, hi) in self.exponent_ranges().items()}

    @property
    def strict_ok(self):
        return all(m >= STRICT_SLACK for m in self.strict_margins().values())

    @property
    def p_star_conj(self):
        """Hoelder conjugate ``p*/(p* - 1)``."""
        return self.p_star / (self.p_star - 1.0)

    def implied_unilateral(self):
        """Constants of the unilateral bound implied by the absolute one.

        ``c7 = c9`` and ``b4 = b3**(p*/(p*-1))``; ``c8`` follows from Young's
        inequality applied to ``|u| f**(1-1/p*)`` and ``|u| b3``.
        """
        if self.c9 is None:
            raise PQBoundError("absolute growth needs c9")
        ps = self.p_star
        c9 = self.c9
        c8 = max(c9 * (ps - 1) / ps, c9 * (1 + 1 / ps) + 1 / ps)
        b4 = Expr(f"({self.b3.source}) ** ({self.p_star_conj!r})")
        return replace(self, c7=c9, c8=c8, b4=b4, norm_b4=None)

    def with_norms(self, points, weights):
        """Fill ``norm_b1 .. norm_b4`` by quadrature (``L^s1``, ``L^1``, ``L^s3``, ``L^1``)."""
        points = np.asarray(points, dtype=float)
        weights = np.asarray(weights, dtype=float)
        out = {}
        for name, s in (("b1", self.s1), ("b2", 1.0), ("b3", self.s3), ("b4", 1.0)):
            vals = np.abs(getattr(self, name)(x=points))
            if math.isinf(s):
                out[f"norm_{name}"] = float(vals.max()) if vals.size else 0.0
            else:
                out[f"norm_{name}"] = float(np.sum(weights * vals**s) ** (1.0 / s))
        return replace(self, **out)

    def to_config(self):
        out = {}
        for f_ in fields(self):
            v = getattr(self, f_.name)
            if isinstance(v, Expr):
                v = v.source
            elif isinstance(v, float) and math.isinf(v):
                v = "inf"
            out[f_.name] = v
        return out

    @classmethod
    def from_config(cls, cfg):
        if not isinstance(cfg, dict):
            raise ConfigError("parameters must be a mapping")
        names = {f_.name for f_ in fields(cls)}
        unknown = set(cfg) - names
        if unknown:
            raise ConfigError(f"unknown parameter fields {sorted(unknown)}")
        cfg = {k: v for k, v in cfg.items() if v is not None}
        try:
            return cls(**cfg)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, PQBoundError):
                raise
            raise ConfigError(f"bad parameters: {exc}") from None


# -- exponents ----------------------------------------------------------------


def _inv(s):
    return 0.0 if math.isinf(s) else 1.0 / s


def _eps_max(pack):
    denom_r = pack.p - pack.r + 1.0
    return max(
        1.0 / (1.0 - pack.alpha) if pack.alpha < 1 else math.inf,
        pack.p / denom_r if denom_r > 0 else math.inf,
        pack.theta,
        pack.s,
        pack.p_star * _inv(pack.s1),
        pack.p_star * _inv(pack.s3) + 1.0,
    )


def gamma_exponent(pack: ParameterPack):
    """Exponent of ``(1 + ||u||_{p*})`` in the epsilon-theorem bound.

    >>> round(gamma_exponent(ParameterPack(n=3, p=2, alpha=0.5, r=2, theta=3, s=3, s1=3, s3=3)), 12)
    1.333333333333
    """
    den = pack.p_star - _eps_max(pack)
    if not den > 0:
        raise ExponentError(f"gamma denominator p* - max(...) = {den} is not positive")
    return (pack.p_star - pack.p) / den


def delta_exponent(pack: ParameterPack):
    """Superlinearity ``delta`` of the level-set recursion."""
    d = (pack.p_star / pack.p) * (1.0 - max(_inv(pack.s1), _inv(pack.s3))) - 1.0
    if not d > 0:
        raise ExponentError(f"delta = {d} is not positive")
    return d


def sigma_exponent(pack: ParameterPack, form="exact"):
    """``sigma`` for the exact theorem (``form="exact"``) or the epsilon one."""
    if form == "exact":
        sig = pack.p_star - max(pack.p_star * _inv(pack.s1), pack.p_star * _inv(pack.s3) + 1.0)
    elif form == "epsilon":
        sig = pack.p_star - _eps_max(pack)
    else:
        raise ConfigError(f"unknown sigma form {form!r}")
    if not sig > 0:
        raise ExponentError(f"sigma = {sig} is not positive")
    return sig


# -- sampled structure checks ---------------------------------------------------


def _need(pack, *names):
    missing = [n for n in names if getattr(pack, n) is None]
    if missing:
        raise IncompleteSpecError(missing)


def _combine(name, parts, extra=None):
    reps = list(parts.values())
    details = {"parts": {k: r.to_dict() for k, r in parts.items()}}
    details.update(extra or {})
    return CheckReport(
        name=name,
        passed=all(r.passed for r in reps),
        n_samples=min(r.n_samples for r in reps),
        n_violations=sum(r.n_violations for r in reps),
        worst_margin=min(r.worst_margin for r in reps),
        n_skipped=max(r.n_skipped for r in reps),
        witnesses=[w for r in reps for w in r.witnesses],
        details=details,
    )


def _pointwise_ok(lhs, rhs, rtol):
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
    with np.errstate(invalid="ignore"):
        return (rhs - lhs) / scale >= -rtol


def check_comparison(a: VectorField, f: EnergyDensity, pack: ParameterPack, dom: SamplingDomain,
                     variant="exact", samples=None, rtol=RTOL):
    """Two-sided comparison of ``(a, xi)`` with ``(D_xi f, xi)``.

    The lower side carries ``|u|**p*`` (exact) or ``|u|**theta`` (epsilon).
    """
    if variant not in ("exact", "epsilon"):
        raise ConfigError(f"unknown comparison variant {variant!r}")
    _need(pack, "c1", "c2", "c3", "c4")
    s = dom.draw() if samples is None else samples
    theta = pack.p_star if variant == "exact" else pack.theta
    with np.errstate(over="ignore", invalid="ignore"):
        ax = np.sum(a(s.x, s.u, s.xi) * s.xi, axis=1)
        fx = np.sum(f.grad(s.x, s.u, s.xi) * s.xi, axis=1)
        au = np.abs(s.u)
        lower = pack.c1 * fx - pack.c2 * _pow(au, theta) - pack.b1(x=s.x)
        upper = pack.c3 * fx + pack.c4 * _pow(au, pack.p_star) + pack.b2(x=s.x)
    mask = ~f.singular_mask(s.x, s.u, s.xi)
    parts = {
        "lower": compare("comparison_lower", lower, ax, s, rtol, mask=mask),
        "upper": compare("comparison_upper", ax, upper, s, rtol, mask=mask),
    }
    return _combine(f"comparison_{variant}", parts, {"variant": variant, "theta_prime": theta})


RHS_VARIANTS = ("exact", "epsilon", "absolute", "absolute_epsilon")


def check_rhs_growth(b: RightHandSide, f: EnergyDensity, pack: ParameterPack, dom: SamplingDomain,
                     variant="exact", samples=None, rtol=RTOL):
    """Growth of ``b`` in the unilateral (``exact``/``epsilon``) or absolute form.

    For the absolute forms the report also carries the implied unilateral
    constants and the outcome of the unilateral check run with them on the
    same samples (``details["chain"]``).  ``details`` never holds arrays; the
    per-sample pass mask is attached as ``report.sample_pass``.
    """
    if variant not in RHS_VARIANTS:
        raise ConfigError(f"unknown rhs growth variant {variant!r}")
    s = dom.draw() if samples is None else samples
    ps = pack.p_star
    eps = variant.endswith("epsilon")
    with np.errstate(over="ignore", invalid="ignore"):
        bv = b(s.x, s.u, s.xi)
        fv = f.value(s.x, s.u, s.xi)
        au = np.abs(s.u)
        r = _norm(s.xi)
        b3 = pack.b3(x=s.x)
        if variant.startswith("absolute"):
            _need(pack, "c9")
            fa, ue = (pack.alpha, pack.s - 1.0) if eps else (1 - 1 / ps, ps - 1.0)
            rhs = pack.c9 * (_pow(fv, fa) + _pow(au, ue)) + b3
            rep = compare(f"rhs_growth_{variant}", np.abs(bv), rhs, s, rtol)
            ok = _pointwise_ok(np.abs(bv), rhs, rtol)
            implied = pack.implied_unilateral()
            chain = check_rhs_growth(b, f, implied, dom, "epsilon" if eps else "exact", samples=s, rtol=rtol)
            implied_ok = chain.sample_pass
            rep.details.update({
                "variant": variant,
                "implied_c7": implied.c7,
                "implied_c8": implied.c8,
                "implied_b4": implied.b4.source,
                "chain": {"passed": bool(np.all(implied_ok[ok])),
                          "n_absolute_pass": int(np.count_nonzero(ok)),
                          "n_implied_pass": int(np.count_nonzero(implied_ok))},
            })
            rep.sample_pass = ok
            return rep
        _need(pack, "c7", "c8")
        if eps:
            fa, re_, ue = pack.alpha, pack.r - 1.0, pack.s - 1.0
        else:
            fa, re_, ue = 1 - 1 / ps, pack.p + pack.p / pack.n - 1.0, ps - 1.0
        lo_lhs = -pack.c7 * (_pow(fv, fa) + _pow(r, re_) + _pow(au, ue)) - b3
        lo_rhs = np.sign(s.u) * bv
        up_lhs = s.u * bv
        up_rhs = pack.c8 * (fv + _pow(au, ps)) + pack.b4(x=s.x)
    parts = {
        "lower": compare("rhs_growth_lower", lo_lhs, lo_rhs, s, rtol),
        "upper": compare("rhs_growth_upper", up_lhs, up_rhs, s, rtol),
    }
    rep = _combine(f"rhs_growth_{variant}", parts, {"variant": variant})
    rep.sample_pass = _pointwise_ok(lo_lhs, lo_rhs, rtol) & _pointwise_ok(up_lhs, up_rhs, rtol)
    return rep


def check_standard_growth(a: VectorField, b: RightHandSide, pack: ParameterPack, dom: SamplingDomain,
                          samples=None, cap=SERRIN_CAP):
    """Classical natural growth of ``a`` and ``b`` with exponent ``p``.

    The three constants are fitted from the samples; the check passes when
    the coercivity constant is at least ``1/cap`` and both growth constants
    are at most ``cap``.
    """
    s = dom.draw() if samples is None else samples
    p = pack.p
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        av = a(s.x, s.u, s.xi)
        ax = np.sum(av * s.xi, axis=1)
        na = _norm(av)
        nb = np.abs(b(s.x, s.u, s.xi))
        r = _norm(s.xi)
        au = np.abs(s.u)
        bracket = r**p - au**p - 1.0
        growth = r ** (p - 1) + au ** (p - 1) + 1.0
        # (a, xi) >= c0 * bracket: positive brackets bound c0 from above,
        # negative ones from above too unless (a, xi) >= 0 there
        pos = bracket > 0
        neg = (bracket < 0) & (ax < 0)
        ub = np.concatenate([ax[pos] / bracket[pos], ax[neg] / bracket[neg]])
        c0 = float(np.min(ub)) if ub.size else math.inf
        c1 = float(np.max(na / growth))
        c2 = float(np.max(nb / growth))
    ok = [c0 >= 1.0 / cap, c1 <= cap, c2 <= cap]
    names = ("coercivity", "growth_a", "growth_b")
    return CheckReport(
        name="standard_growth",
        passed=all(ok),
        n_samples=len(s),
        n_violations=ok.count(False),
        worst_margin=min(c0 * cap - 1.0, 1.0 - c1 / cap, 1.0 - c2 / cap),
        details={"fitted_c0": c0, "fitted_c1": c1, "fitted_c2": c2, "cap": cap,
                 "failed": [n for n, o in zip(names, ok) if not o]},
    )


# -- classification -----------------------------------------------------------


@dataclass
class Classification:
    label: str
    reasons: list
    reports: dict = field(default_factory=dict)
    exponents: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "label": self.label,
            "reasons": list(self.reasons),
            "exponents": dict(self.exponents),
            "reports": {k: v.to_dict() if hasattr(v, "to_dict") else v for k, v in self.reports.items()},
        }


_REQUIRED = ("energy", "vector_field", "rhs", "pack")


def classify(problem, dom: Optional[SamplingDomain] = None, quadrature=None):
    """Decide which boundedness theorem covers ``problem``.

    Returns a :class:`Classification` with label ``theorem2`` (all epsilon
    checks pass and every epsilon exponent is strictly inside its range),
    ``theorem1`` (exact checks pass) or ``uncovered`` with reasons.
    """
    missing = [name for name in _REQUIRED if getattr(problem, name, None) is None]
    if missing:
        raise IncompleteSpecError(missing)
    pack = problem.pack
    missing = [f"pack.c{i}" for i in (1, 2, 3, 4, 5, 6) if getattr(pack, f"c{i}") is None]
    if pack.c9 is None and (pack.c7 is None or pack.c8 is None):
        missing.append("pack.c9 or pack.c7/c8")
    if missing:
        raise IncompleteSpecError(missing)
    f, a, b = problem.energy, problem.vector_field, problem.rhs
    dom = dom or problem.sampling_domain()
    s = dom.draw(n_aux=3)
    reports = {}
    common = []

    reports["nonnegativity"] = check_nonnegative(f, dom, s)
    reports["convexity"] = check_convexity(f, dom, s)
    est = estimate_delta2(f, dom, s)
    d2_ok = bool(np.isfinite(est.M_est) and est.M_est <= DELTA2_CAP and est.m_est > 1)
    reports["delta2"] = CheckReport(
        name="delta2", passed=d2_ok, n_samples=est.n_used, n_skipped=est.n_skipped,
        worst_margin=(1.0 - est.M_est / DELTA2_CAP) if np.isfinite(est.M_est) else -math.inf,
        witnesses=est.witnesses if not d2_ok else [], details=est.to_dict(),
    )
    common += ["nonnegativity", "convexity", "delta2"]
    if d2_ok:
        m_decl = getattr(problem, "m_delta2", None)
        M_decl = getattr(problem, "M_delta2", None)
        env = GrowthEnvelope(p=pack.p, m_delta2=m_decl or est.m_est, M_delta2=M_decl or est.M_est,
                             c5=pack.c5, c6=pack.c6)
        reports["gradient_growth"] = check_gradient_growth(f, env, dom, s, rtol=1e-6)
        common.append("gradient_growth")
    else:
        env = GrowthEnvelope(p=pack.p, c5=pack.c5, c6=pack.c6)
    reports["coercivity"] = check_coercivity(f, env, dom, s)
    reports["u_monotonicity"] = check_u_monotonicity(f, env, dom, s)
    common += ["coercivity", "u_monotonicity"]
    if quadrature is None and hasattr(problem, "quadrature"):
        quadrature = problem.quadrature()
    if quadrature is not None:
        reports["summability"] = check_summability(f, *quadrature)
        common.append("summability")

    def rhs_check(eps):
        forms = ["epsilon", "absolute_epsilon"] if eps else ["exact", "absolute"]
        if b.growth is not None:
            forms = [forms[1] if b.growth.startswith("absolute") else forms[0]]
        last = None
        for form in forms:
            try:
                rep = check_rhs_growth(b, f, pack, dom, form, samples=s)
            except IncompleteSpecError:
                continue
            if rep.passed:
                return rep
            last = rep
        return last

    reports["comparison_exact"] = check_comparison(a, f, pack, dom, "exact", samples=s)
    reports["rhs_growth_exact"] = rhs_check(False)
    reports["comparison_epsilon"] = check_comparison(a, f, pack, dom, "epsilon", samples=s)
    reports["rhs_growth_epsilon"] = rhs_check(True)
    reports["standard_growth"] = check_standard_growth(a, b, pack, dom, samples=s)
    if a.kind == "linear_plus_power" and getattr(problem, "ellipticity", None):
        lo, hi = problem.ellipticity
        reports["ellipticity"] = check_ellipticity(a, lo, hi, dom)
        common.append("ellipticity")

    exps = {"p_star": pack.p_star}
    exp_fail = []
    for key, fn in (("delta", lambda: delta_exponent(pack)),
                    ("sigma_exact", lambda: sigma_exponent(pack, "exact")),
                    ("sigma_epsilon", lambda: sigma_exponent(pack, "epsilon")),
                    ("gamma", lambda: gamma_exponent(pack))):
        try:
            exps[key] = fn()
        except ExponentError as exc:
            exps[key] = None
            exp_fail.append(f"{key}: {exc}")

    def failing(names):
        out = []
        for name in names:
            rep = reports.get(name)
            if rep is None:
                out.append(f"{name}: no applicable constants")
            elif not rep.passed:
                out.append(f"{name}: {_why(rep)}")
        return out

    base = failing(common)
    exact_fail = base + failing(["comparison_exact", "rhs_growth_exact"])
    exact_fail += [e for e in exp_fail if e.startswith(("delta", "sigma_exact"))]
    eps_fail = base + failing(["comparison_epsilon", "rhs_growth_epsilon"])
    eps_fail += [e for e in exp_fail if e.startswith(("delta", "sigma_epsilon", "gamma"))]
    if pack.epsilon <= 0:
        eps_fail.append("epsilon: epsilon = 0 selects the exact theorem")
    if not pack.strict_ok:
        tight = [k for k, m in pack.strict_margins().items() if m < STRICT_SLACK]
        eps_fail.append("strictness: exponents " + ", ".join(tight) + " not strictly inside their ranges")

    if not eps_fail:
        label, reasons = "theorem2", []
    elif not exact_fail:
        label, reasons = "theorem1", ["theorem2 not reached: " + r for r in eps_fail]
    else:
        label, reasons = "uncovered", exact_fail
    return Classification(label=label, reasons=reasons, reports=reports, exponents=exps)


def _why(rep):
    if rep.name == "delta2":
        d = rep.details
        if not np.isfinite(d["M_est"]):
            return f"doubling ratio unbounded (largest finite ratio {d['max_finite_ratio']:.3g})"
        return f"doubling constant {d['M_est']:.3g} (lower {d['m_est']:.3g}) outside (1, {DELTA2_CAP:g}]"
    if rep.name == "standard_growth":
        return "fitted constants outside cap: " + ", ".join(rep.details["failed"])
    return f"{rep.n_violations} violations, worst relative margin {rep.worst_margin:.3g}"

"""Energy densities f(x, u, xi) and sampled checks of their structural hypotheses.

Every density is vectorised: ``x`` has shape ``(N, n)``, ``u`` shape ``(N,)``
and ``xi`` shape ``(N, n)``.  Hypotheses that are quantified over all
``(x, u, xi)`` (doubling, coercivity, monotonicity in ``u``, convexity, the
two gradient-growth lemmas) are audited on seeded quasi-random samples drawn
from a :class:`SamplingDomain`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import norm as _normal
from scipy.stats import qmc

from .errors import (
    ConfigError,
    DegenerateSampleError,
    DomainViolationError,
    NonFiniteError,
    PreconditionError,
    SingularityError,
)
from .expr import Expr, as_expr

__all__ = [
    "EnergyDensity",
    "PowerDensity",
    "DoublePhaseDensity",
    "VariableExponentDensity",
    "AnisotropicDensity",
    "LogPerturbedDensity",
    "TwoEnergySum",
    "ExponentialControl",
    "CustomDensity",
    "GrowthEnvelope",
    "SamplingDomain",
    "Samples",
    "Delta2Estimate",
    "CheckReport",
    "density_from_config",
    "eval_f",
    "eval_grad_xi",
    "estimate_delta2",
    "check_coercivity",
    "check_u_monotonicity",
    "check_gradient_growth",
    "check_convexity",
    "check_summability",
    "log_factor_ratio",
]

ZERO_F = 1e-300
RTOL_EXACT = 1e-9
RTOL_FD = 1e-6


def _norm(xi):
    return np.sqrt(np.sum(xi * xi, axis=-1))


def _pow(t, e):
    """``t**e`` for ``t >= 0`` with ``0**e = 0`` for every ``e > 0``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.power(t, e)
    return np.where(t > 0, out, np.where(np.asarray(e) > 0, 0.0, 1.0))


def _radial_grad(xi, r, w, e, reg=0.0):
    """Gradient of ``w * |xi|**e``; zero at the origin when ``e > 1``.

    ``reg > 0`` replaces ``|xi|**(e-2)`` by ``(reg**2 + |xi|**2)**((e-2)/2)``.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        if reg:
            scale = w * e * np.power(r * r + reg * reg, (e - 2.0) / 2.0)
        else:
            scale = w * e * np.power(r, e - 2.0)
    scale = np.where((r > 0) | (reg > 0), scale, 0.0)
    return scale[:, None] * xi


def _as_points(x, u, xi):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    nmax = max(x.shape[0], xi.shape[0], u.shape[0])
    if x.shape[0] == 1 and nmax > 1:
        x = np.repeat(x, nmax, axis=0)
    if xi.shape[0] == 1 and nmax > 1:
        xi = np.repeat(xi, nmax, axis=0)
    if u.shape[0] == 1 and nmax > 1:
        u = np.repeat(u, nmax)
    return x, u, xi


class EnergyDensity:
    """Base class for convex integrands ``f(x, u, xi) >= 0``.

    Subclasses implement :meth:`value` and, for ``grad_mode="analytic"``,
    :meth:`_grad`.  ``x_box`` optionally restricts the admissible ``x``.
    """

    kind = "custom"

    def __init__(self, grad_mode="analytic", fd_step=1e-6, x_box=None):
        if grad_mode not in ("analytic", "finite_difference"):
            raise ConfigError(f"unknown grad_mode {grad_mode!r}")
        self.grad_mode = grad_mode
        self.fd_step = float(fd_step)
        self.x_box = None if x_box is None else np.asarray(x_box, dtype=float)

    # -- evaluation ---------------------------------------------------------
    def value(self, x, u, xi):
        raise NotImplementedError

    def _grad(self, x, u, xi, reg=0.0):
        raise NotImplementedError

    def singular_mask(self, x, u, xi):
        """Samples where the analytic gradient does not exist."""
        return np.zeros(xi.shape[0], dtype=bool)

    def grad(self, x, u, xi, reg=0.0):
        """``D_xi f``; ``reg`` is a solver-only smoothing of degenerate powers."""
        if self.grad_mode == "finite_difference":
            return self.fd_grad(x, u, xi)
        return self._grad(x, u, xi, reg)

    def fd_grad(self, x, u, xi, step=None):
        """Central finite differences in ``xi``."""
        step = self.fd_step if step is None else step
        out = np.empty_like(xi)
        for i in range(xi.shape[1]):
            h = step * np.maximum(1.0, np.abs(xi[:, i]))
            e = np.zeros_like(xi)
            e[:, i] = h
            out[:, i] = (self.value(x, u, xi + e) - self.value(x, u, xi - e)) / (2.0 * h)
        return out

    def dot_grad(self, x, u, xi):
        """``(D_xi f, xi)``."""
        return np.sum(self.grad(x, u, xi) * xi, axis=1)

    def depends_on_u(self):
        return True

    def nominal_delta2(self):
        """Closed-form ``(m, M)`` when the family has constant exponents."""
        return None

    def to_config(self):
        raise NotImplementedError

    def __call__(self, x, u, xi):
        return eval_f(self, x, u, xi)


class PowerDensity(EnergyDensity):
    """``coef * |xi|**p`` with a constant exponent."""

    kind = "power"

    def __init__(self, p, coef=1.0, **kw):
        super().__init__(**kw)
        self.p = float(p)
        self.coef = float(coef)
        if self.p <= 0 or self.coef < 0:
            raise ConfigError("power density needs p > 0 and coef >= 0")

    def value(self, x, u, xi):
        return self.coef * _pow(_norm(xi), self.p)

    def _grad(self, x, u, xi, reg=0.0):
        return _radial_grad(xi, _norm(xi), self.coef, self.p, reg)

    def singular_mask(self, x, u, xi):
        if self.p > 1:
            return np.zeros(xi.shape[0], dtype=bool)
        return _norm(xi) == 0

    def depends_on_u(self):
        return False

    def nominal_delta2(self):
        return 2.0**self.p, 2.0**self.p

    def to_config(self):
        return {"kind": self.kind, "p": self.p, "coef": self.coef}


class VariableExponentDensity(EnergyDensity):
    """``coef(x, u) * |xi|**p(x, u)``."""

    kind = "variable_exponent"

    def __init__(self, p, coef=1.0, **kw):
        super().__init__(**kw)
        self.p = as_expr(p)
        self.coef = as_expr(coef)

    def value(self, x, u, xi):
        return self.coef(x=x, u=u) * _pow(_norm(xi), self.p(x=x, u=u))

    def _grad(self, x, u, xi, reg=0.0):
        return _radial_grad(xi, _norm(xi), self.coef(x=x, u=u), self.p(x=x, u=u), reg)

    def singular_mask(self, x, u, xi):
        return (_norm(xi) == 0) & (self.p(x=x, u=u) <= 1)

    def depends_on_u(self):
        return self.p.depends_on_u() or self.coef.depends_on_u()

    def to_config(self):
        return {"kind": self.kind, "p": self.p.source, "coef": self.coef.source}


class DoublePhaseDensity(EnergyDensity):
    """``alpha |xi|**p + a |xi|**q``, optionally with ``1/p, 1/q`` weights.

    ``p``, ``q``, ``a`` and ``alpha`` may depend on ``x`` and ``u``; this also
    covers the generalised double phase where the exponents depend on ``|u|``.
    """

    kind = "double_phase"

    def __init__(self, p, q, a=1.0, alpha=1.0, normalized=False, **kw):
        super().__init__(**kw)
        self.p = as_expr(p)
        self.q = as_expr(q)
        self.a = as_expr(a)
        self.alpha = as_expr(alpha)
        self.normalized = bool(normalized)

    def _parts(self, x, u):
        p = self.p(x=x, u=u)
        q = self.q(x=x, u=u)
        wp = self.alpha(x=x, u=u)
        wq = self.a(x=x, u=u)
        if self.normalized:
            wp = wp / p
            wq = wq / q
        return p, q, wp, wq

    def value(self, x, u, xi):
        p, q, wp, wq = self._parts(x, u)
        r = _norm(xi)
        return wp * _pow(r, p) + wq * _pow(r, q)

    def _grad(self, x, u, xi, reg=0.0):
        p, q, wp, wq = self._parts(x, u)
        r = _norm(xi)
        return _radial_grad(xi, r, wp, p, reg) + _radial_grad(xi, r, wq, q, reg)

    def singular_mask(self, x, u, xi):
        p, q, _, _ = self._parts(x, u)
        return (_norm(xi) == 0) & (np.minimum(p, q) <= 1)

    def depends_on_u(self):
        return any(e.depends_on_u() for e in (self.p, self.q, self.a, self.alpha))

    def nominal_delta2(self):
        if self.p.is_constant and self.q.is_constant:
            p, q = float(self.p()), float(self.q())
            return 2.0 ** min(p, q), 2.0 ** max(p, q)
        return None

    def to_config(self):
        return {
            "kind": self.kind,
            "p": self.p.source,
            "q": self.q.source,
            "a": self.a.source,
            "alpha": self.alpha.source,
            "normalized": self.normalized,
        }


class AnisotropicDensity(EnergyDensity):
    """``sum_i w_i(x, u) |xi_i|**p_i(x, u)``."""

    kind = "anisotropic"

    def __init__(self, exponents, weights=None, **kw):
        super().__init__(**kw)
        self.exponents = [as_expr(e) for e in exponents]
        if weights is None:
            weights = [1.0] * len(self.exponents)
        if len(weights) != len(self.exponents):
            raise ConfigError("anisotropic density needs one weight per exponent")
        self.weights = [as_expr(w) for w in weights]

    def _check_dim(self, xi):
        if xi.shape[1] != len(self.exponents):
            raise ConfigError(
                f"anisotropic density declared for n={len(self.exponents)}, got n={xi.shape[1]}"
            )

    def value(self, x, u, xi):
        self._check_dim(xi)
        out = np.zeros(xi.shape[0])
        for i, (e, w) in enumerate(zip(self.exponents, self.weights)):
            out += w(x=x, u=u) * _pow(np.abs(xi[:, i]), e(x=x, u=u))
        return out

    def _grad(self, x, u, xi, reg=0.0):
        self._check_dim(xi)
        out = np.zeros_like(xi)
        for i, (e, w) in enumerate(zip(self.exponents, self.weights)):
            t = np.abs(xi[:, i])
            ei = e(x=x, u=u)
            with np.errstate(divide="ignore", invalid="ignore"):
                g = w(x=x, u=u) * ei * np.power(t * t + reg * reg, (ei - 2.0) / 2.0) * xi[:, i]
            out[:, i] = np.where((t > 0) | (reg > 0), g, 0.0)
        return out

    def singular_mask(self, x, u, xi):
        mask = np.zeros(xi.shape[0], dtype=bool)
        for i, e in enumerate(self.exponents):
            mask |= (xi[:, i] == 0) & (e(x=x, u=u) <= 1)
        return mask

    def depends_on_u(self):
        return any(e.depends_on_u() for e in self.exponents + self.weights)

    def nominal_delta2(self):
        if all(e.is_constant for e in self.exponents):
            ps = [float(e()) for e in self.exponents]
            return 2.0 ** min(ps), 2.0 ** max(ps)
        return None

    def to_config(self):
        return {
            "kind": self.kind,
            "exponents": [e.source for e in self.exponents],
            "weights": [w.source for w in self.weights],
        }


class LogPerturbedDensity(EnergyDensity):
    """``coef * |xi|**p * log(1 + |xi|)``."""

    kind = "log_perturbed"

    def __init__(self, p, coef=1.0, **kw):
        super().__init__(**kw)
        self.p = float(p)
        self.coef = float(coef)

    def value(self, x, u, xi):
        r = _norm(xi)
        return self.coef * _pow(r, self.p) * np.log1p(r)

    def _grad(self, x, u, xi, reg=0.0):
        r = _norm(xi)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = self.coef * np.power(r, self.p - 2.0) * (self.p * np.log1p(r) + r / (1.0 + r))
        scale = np.where(r > 0, scale, 0.0)
        return scale[:, None] * xi

    def depends_on_u(self):
        return False

    def nominal_delta2(self):
        # log(1+2t)/log(1+t) ranges over (1, 2)
        return 2.0**self.p, 2.0 ** (self.p + 1.0)

    def to_config(self):
        return {"kind": self.kind, "p": self.p, "coef": self.coef}


class TwoEnergySum(EnergyDensity):
    """``alpha(x, u) f + beta(x, u) g`` for two densities ``f`` and ``g``."""

    kind = "two_energy_sum"

    def __init__(self, f, g, alpha=1.0, beta=1.0, **kw):
        super().__init__(**kw)
        self.f = f
        self.g = g
        self.alpha = as_expr(alpha)
        self.beta = as_expr(beta)

    def value(self, x, u, xi):
        return self.alpha(x=x, u=u) * self.f.value(x, u, xi) + self.beta(x=x, u=u) * self.g.value(x, u, xi)

    def _grad(self, x, u, xi, reg=0.0):
        a = self.alpha(x=x, u=u)[:, None]
        b = self.beta(x=x, u=u)[:, None]
        return a * self.f.grad(x, u, xi, reg) + b * self.g.grad(x, u, xi, reg)

    def singular_mask(self, x, u, xi):
        return self.f.singular_mask(x, u, xi) | self.g.singular_mask(x, u, xi)

    def depends_on_u(self):
        return (
            self.alpha.depends_on_u()
            or self.beta.depends_on_u()
            or self.f.depends_on_u()
            or self.g.depends_on_u()
        )

    def to_config(self):
        return {
            "kind": self.kind,
            "alpha": self.alpha.source,
            "beta": self.beta.source,
            "f": self.f.to_config(),
            "g": self.g.to_config(),
        }


class ExponentialControl(EnergyDensity):
    """``exp(|xi|**r)``: convex but not a doubling function (negative control)."""

    kind = "exponential_control"

    def __init__(self, r=1.0, **kw):
        super().__init__(**kw)
        self.r = float(r)

    def value(self, x, u, xi):
        with np.errstate(over="ignore"):
            return np.exp(_pow(_norm(xi), self.r))

    def _grad(self, x, u, xi, reg=0.0):
        rr = _norm(xi)
        with np.errstate(over="ignore"):
            w = np.exp(_pow(rr, self.r))
        return _radial_grad(xi, rr, w, self.r)

    def singular_mask(self, x, u, xi):
        if self.r > 1:
            return np.zeros(xi.shape[0], dtype=bool)
        return _norm(xi) == 0

    def depends_on_u(self):
        return False

    def to_config(self):
        return {"kind": self.kind, "r": self.r}


class CustomDensity(EnergyDensity):
    """Wrap user callables ``value(x, u, xi)`` and optionally ``grad``."""

    kind = "custom"

    def __init__(self, value: Callable, grad: Optional[Callable] = None, u_dependent=True, **kw):
        if grad is None:
            kw.setdefault("grad_mode", "finite_difference")
        super().__init__(**kw)
        self._value = value
        self._grad_fn = grad
        self._u_dependent = u_dependent

    def value(self, x, u, xi):
        return np.asarray(self._value(x, u, xi), dtype=float)

    def _grad(self, x, u, xi, reg=0.0):
        if self._grad_fn is None:
            return self.fd_grad(x, u, xi)
        return np.asarray(self._grad_fn(x, u, xi), dtype=float)

    def depends_on_u(self):
        return self._u_dependent

    def to_config(self):
        raise ConfigError("custom densities cannot be serialised")


_FAMILIES = {
    "power": PowerDensity,
    "variable_exponent": VariableExponentDensity,
    "double_phase": DoublePhaseDensity,
    "anisotropic": AnisotropicDensity,
    "log_perturbed": LogPerturbedDensity,
    "exponential_control": ExponentialControl,
}


def density_from_config(cfg):
    """Build a density from a config mapping with a ``kind`` tag."""
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ConfigError("energy config must be a mapping with a 'kind' field")
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind == "two_energy_sum":
        try:
            f = density_from_config(cfg.pop("f"))
            g = density_from_config(cfg.pop("g"))
        except KeyError as exc:
            raise ConfigError(f"two_energy_sum needs field {exc.args[0]!r}") from None
        return TwoEnergySum(f, g, **cfg)
    if kind == "custom":
        raise ConfigError("custom densities must be built in code")
    cls = _FAMILIES.get(kind)
    if cls is None:
        raise ConfigError(f"unknown energy kind {kind!r}")
    try:
        return cls(**cfg)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind}: {exc}") from None


# -- pointwise operations ---------------------------------------------------


def _check_box(density, x):
    box = density.x_box
    if box is None:
        return
    lo, hi = box[:, 0], box[:, 1]
    bad = np.any((x < lo) | (x > hi), axis=1)
    if np.any(bad):
        raise DomainViolationError(f"x = {x[np.argmax(bad)].tolist()} outside the declared box")


def eval_f(density, x, u, xi):
    """Evaluate ``f(x, u, xi)``; scalar input gives a scalar.

    >>> float(eval_f(PowerDensity(2), [0.0, 0.0], 0.0, [3.0, 4.0]))
    25.0
    """
    scalar = np.ndim(u) == 0 and np.ndim(xi) == 1
    x, u, xi = _as_points(x, u, xi)
    if not np.all(np.isfinite(xi)):
        raise NonFiniteError("xi must be finite")
    _check_box(density, x)
    with np.errstate(over="ignore", invalid="ignore"):
        out = density.value(x, u, xi)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{density.kind} density overflowed")
    return float(out[0]) if scalar else out


def eval_grad_xi(density, x, u, xi):
    """Evaluate ``D_xi f``; raises at non-differentiable points in analytic mode."""
    scalar = np.ndim(u) == 0 and np.ndim(xi) == 1
    x, u, xi = _as_points(x, u, xi)
    if not np.all(np.isfinite(xi)):
        raise NonFiniteError("xi must be finite")
    _check_box(density, x)
    if density.grad_mode == "analytic":
        bad = density.singular_mask(x, u, xi)
        if np.any(bad):
            raise SingularityError(f"{density.kind} density is not differentiable at xi = {xi[np.argmax(bad)].tolist()}")
    g = density.grad(x, u, xi)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError(f"{density.kind} gradient overflowed")
    return g[0] if scalar else g


def log_factor_ratio(t):
    """``log(1 + 2t) / log(1 + t)``; tends to 2 as ``t -> 0+`` and to 1 at infinity."""
    t = np.asarray(t, dtype=float)
    return np.log1p(2.0 * t) / np.log1p(t)


# -- sampling ---------------------------------------------------------------


@dataclass(frozen=True)
class Samples:
    x: np.ndarray
    u: np.ndarray
    xi: np.ndarray
    aux: np.ndarray

    def __len__(self):
        return self.u.shape[0]


@dataclass
class SamplingDomain:
    """Box in ``x``, interval in ``u`` and log-spaced range of ``|xi|``."""

    x_box: Sequence[Sequence[float]] = ((0.0, 1.0), (0.0, 1.0))
    u_range: Sequence[float] = (-10.0, 10.0)
    xi_radius_range: Sequence[float] = (1e-4, 1e4)
    n_samples: int = 100_000
    rng_seed: int = 0

    def __post_init__(self):
        self.x_box = tuple(tuple(float(v) for v in b) for b in self.x_box)
        self.u_range = tuple(float(v) for v in self.u_range)
        self.xi_radius_range = tuple(float(v) for v in self.xi_radius_range)
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if any(hi <= lo for lo, hi in self.x_box):
            raise ConfigError("x_box has an empty side")
        if self.u_range[1] < self.u_range[0]:
            raise ConfigError("u_range is reversed")
        r0, r1 = self.xi_radius_range
        if not (0 < r0 < r1):
            raise ConfigError("xi_radius_range must satisfy 0 < lo < hi")

    @property
    def dim(self):
        return len(self.x_box)

    def draw(self, n_aux=2):
        """Scrambled Halton points mapped to ``(x, u, xi)`` plus uniform ``aux`` columns."""
        n = self.dim
        sampler = qmc.Halton(d=2 * n + 2, scramble=True, seed=self.rng_seed)
        z = sampler.random(self.n_samples)
        lo = np.array([b[0] for b in self.x_box])
        hi = np.array([b[1] for b in self.x_box])
        x = lo + z[:, :n] * (hi - lo)
        u = self.u_range[0] + z[:, n] * (self.u_range[1] - self.u_range[0])
        lr0, lr1 = np.log(self.xi_radius_range)
        radius = np.exp(lr0 + z[:, n + 1] * (lr1 - lr0))
        g = _normal.ppf(np.clip(z[:, n + 2 :], 1e-12, 1 - 1e-12))
        direction = g / np.maximum(_norm(g), 1e-300)[:, None]
        xi = radius[:, None] * direction
        aux = np.random.default_rng(self.rng_seed + 7919).random((self.n_samples, n_aux))
        return Samples(x=x, u=u, xi=xi, aux=aux)


# -- reports ----------------------------------------------------------------


def _witness(samples_x, samples_u, samples_xi, idx, **extra):
    w = {
        "x": [float(v) for v in samples_x[idx]],
        "u": float(samples_u[idx]),
        "xi": [float(v) for v in samples_xi[idx]],
    }
    w.update({k: float(v) for k, v in extra.items()})
    return w


@dataclass
class CheckReport:
    """Outcome of a sampled inequality ``lhs <= rhs``.

    ``worst_margin`` is the minimum of ``(rhs - lhs) / scale`` over samples,
    so a passing check has ``worst_margin >= -rtol``.
    """

    name: str
    passed: bool
    n_samples: int
    n_violations: int = 0
    worst_margin: float = float("inf")
    n_skipped: int = 0
    witnesses: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return self.passed

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "n_samples": int(self.n_samples),
            "n_violations": int(self.n_violations),
            "n_skipped": int(self.n_skipped),
            "worst_margin": float(self.worst_margin),
            "witnesses": self.witnesses,
            "details": self.details,
        }


def compare(name, lhs, rhs, samples, rtol, mask=None, max_witnesses=3, details=None):
    """Build a :class:`CheckReport` for ``lhs <= rhs`` on valid samples."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    valid = np.isfinite(lhs) & np.isfinite(rhs)
    if mask is not None:
        valid &= mask
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
    with np.errstate(invalid="ignore"):
        margin = np.where(valid, (rhs - lhs) / scale, np.inf)
    bad = margin < -rtol
    n_bad = int(np.count_nonzero(bad))
    witnesses = []
    if n_bad:
        order = np.argsort(margin)[:max_witnesses]
        witnesses = [
            _witness(samples.x, samples.u, samples.xi, i, lhs=lhs[i], rhs=rhs[i], margin=margin[i])
            for i in order
            if bad[i]
        ]
    worst = float(np.min(margin)) if margin.size else float("inf")
    return CheckReport(
        name=name,
        passed=n_bad == 0,
        n_samples=int(np.count_nonzero(valid)),
        n_violations=n_bad,
        worst_margin=worst,
        n_skipped=int(lhs.size - np.count_nonzero(valid)),
        witnesses=witnesses,
        details=details or {},
    )


def _rtol_for(density, rtol):
    if rtol is not None:
        return rtol
    return RTOL_FD if density.grad_mode == "finite_difference" else RTOL_EXACT


# -- hypothesis checks --------------------------------------------------------


@dataclass
class GrowthEnvelope:
    """Declared constants: coercivity exponent/constant, doubling bounds, ``c6``."""

    p: float
    m_delta2: Optional[float] = None
    M_delta2: Optional[float] = None
    c5: Optional[float] = None
    c6: Optional[float] = None

    def __post_init__(self):
        if not self.p > 1:
            raise ConfigError("p must exceed 1")
        if self.M_delta2 is not None and not self.M_delta2 > 1:
            raise ConfigError("M_delta2 must exceed 1")
        if self.m_delta2 is not None:
            if not self.m_delta2 > 1:
                raise ConfigError("m_delta2 must exceed 1")
            if self.M_delta2 is not None and self.M_delta2 < self.m_delta2:
                raise ConfigError("need M_delta2 >= m_delta2")
        for name in ("c5", "c6"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")


@dataclass
class Delta2Estimate:
    m_est: float
    M_est: float
    n_used: int
    n_skipped: int
    max_finite_ratio: float
    witnesses: list = field(default_factory=list)

    @property
    def bounded(self):
        return np.isfinite(self.M_est)

    def to_dict(self):
        return {
            "m_est": self.m_est,
            "M_est": self.M_est,
            "n_used": self.n_used,
            "n_skipped": self.n_skipped,
            "max_finite_ratio": self.max_finite_ratio,
            "witnesses": self.witnesses,
        }


def delta2_ratios(density, samples):
    """``f(2 xi) / f(xi)`` per sample, ``nan`` where ``f(xi)`` vanishes."""
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        f1 = density.value(samples.x, samples.u, samples.xi)
        f2 = density.value(samples.x, samples.u, 2.0 * samples.xi)
        ratio = np.where(f1 >= ZERO_F, f2 / np.where(f1 >= ZERO_F, f1, 1.0), np.nan)
    return ratio


def estimate_delta2(density, dom: SamplingDomain, samples=None):
    """Sampled infimum and supremum of ``f(x, u, 2 xi) / f(x, u, xi)``.

    Samples with ``f < 1e-300`` are skipped; if more than half are skipped
    the estimate is refused.  An overflowing ``f(2 xi)`` yields ``M_est = inf``.
    """
    samples = dom.draw() if samples is None else samples
    ratio = delta2_ratios(density, samples)
    used = ~np.isnan(ratio)
    n_used = int(np.count_nonzero(used))
    n_skipped = len(samples) - n_used
    if n_used == 0 or n_skipped > 0.5 * len(samples):
        raise DegenerateSampleError(f"{n_skipped} of {len(samples)} samples have f = 0")
    r = np.where(used, ratio, np.nan)
    i_min = int(np.nanargmin(r))
    i_max = int(np.nanargmax(r))
    finite = r[np.isfinite(r)]
    witnesses = [
        _witness(samples.x, samples.u, samples.xi, i_min, ratio=r[i_min], role=0),
        _witness(samples.x, samples.u, samples.xi, i_max, ratio=r[i_max], role=1),
    ]
    return Delta2Estimate(
        m_est=float(r[i_min]),
        M_est=float(r[i_max]),
        n_used=n_used,
        n_skipped=n_skipped,
        max_finite_ratio=float(finite.max()) if finite.size else float("nan"),
        witnesses=witnesses,
    )


def check_coercivity(density, env: GrowthEnvelope, dom: SamplingDomain, samples=None, rtol=None):
    """``f(x, u, xi) >= c5 |xi|**p`` on every sample."""
    if env.c5 is None:
        raise PreconditionError("coercivity check needs env.c5")
    samples = dom.draw() if samples is None else samples
    with np.errstate(over="ignore", invalid="ignore"):
        f = density.value(samples.x, samples.u, samples.xi)
    lower = env.c5 * _norm(samples.xi) ** env.p
    return compare("coercivity", lower, f, samples, _rtol_for(density, rtol), details={"c5": env.c5, "p": env.p})


def check_u_monotonicity(density, env: GrowthEnvelope, dom: SamplingDomain, samples=None, rtol=None):
    """``f(x, v, xi) <= c6 f(x, u, xi)`` for sampled pairs with ``|v| <= |u|``."""
    if env.c6 is None:
        raise PreconditionError("u-monotonicity check needs env.c6")
    samples = dom.draw() if samples is None else samples
    v = samples.u * (2.0 * samples.aux[:, 0] - 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        fu = density.value(samples.x, samples.u, samples.xi)
        fv = density.value(samples.x, v, samples.xi)
    rep = compare("u_monotonicity", fv, env.c6 * fu, samples, _rtol_for(density, rtol), details={"c6": env.c6})
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(fu > ZERO_F, fv / np.where(fu > ZERO_F, fu, 1.0), np.nan)
    rep.details["required_c6"] = float(np.nanmax(ratio)) if np.any(np.isfinite(ratio)) else 0.0
    return rep


def check_gradient_growth(density, env: GrowthEnvelope, dom: SamplingDomain, samples=None, rtol=None,
                          validate_envelope=True):
    """Sampled two-sided gradient growth ``2(1 - 1/m) f <= (D f, xi) <= (M - 1) f``.

    Only the upper inequality is checked when ``env.m_delta2`` is ``None``.
    Samples at non-differentiable points are skipped and counted.
    """
    if env.M_delta2 is None:
        raise PreconditionError("gradient growth check needs env.M_delta2")
    samples = dom.draw() if samples is None else samples
    if validate_envelope:
        est = estimate_delta2(density, dom, samples)
        slack = 1e-12
        if env.M_delta2 < est.M_est * (1 - slack):
            raise PreconditionError(f"declared M = {env.M_delta2} below measured {est.M_est}")
        if env.m_delta2 is not None and env.m_delta2 > est.m_est * (1 + slack):
            raise PreconditionError(f"declared m = {env.m_delta2} above measured {est.m_est}")
    rtol = _rtol_for(density, rtol)
    singular = density.singular_mask(samples.x, samples.u, samples.xi)
    with np.errstate(over="ignore", invalid="ignore"):
        f = density.value(samples.x, samples.u, samples.xi)
        dg = np.sum(density.grad(samples.x, samples.u, samples.xi) * samples.xi, axis=1)
    ok = ~singular
    upper = compare("gradient_growth_upper", dg, (env.M_delta2 - 1.0) * f, samples, rtol, mask=ok)
    parts = {"upper": upper.to_dict()}
    passed = upper.passed
    n_viol = upper.n_violations
    worst = upper.worst_margin
    witnesses = list(upper.witnesses)
    if env.m_delta2 is not None:
        lower = compare("gradient_growth_lower", 2.0 * (1.0 - 1.0 / env.m_delta2) * f, dg, samples, rtol, mask=ok)
        parts["lower"] = lower.to_dict()
        passed &= lower.passed
        n_viol += lower.n_violations
        worst = min(worst, lower.worst_margin)
        witnesses += lower.witnesses
    return CheckReport(
        name="gradient_growth",
        passed=passed,
        n_samples=int(np.count_nonzero(ok)),
        n_violations=n_viol,
        worst_margin=worst,
        n_skipped=int(np.count_nonzero(singular)),
        witnesses=witnesses,
        details={"m": env.m_delta2, "M": env.M_delta2, "parts": parts},
    )


def check_convexity(density, dom: SamplingDomain, samples=None, rtol=None):
    """Midpoint-type convexity inequality along sampled segments in ``xi``."""
    samples = dom.draw(n_aux=3) if samples is None else samples
    t = samples.aux[:, 0]
    n = samples.xi.shape[1]
    rng = np.random.default_rng(dom.rng_seed + 104729)
    d = rng.standard_normal((len(samples), n))
    d /= np.maximum(_norm(d), 1e-300)[:, None]
    xi0 = samples.xi
    xi1 = xi0 + (2.0 * samples.aux[:, 1] * _norm(xi0))[:, None] * d
    with np.errstate(over="ignore", invalid="ignore"):
        f0 = density.value(samples.x, samples.u, xi0)
        f1 = density.value(samples.x, samples.u, xi1)
        fm = density.value(samples.x, samples.u, t[:, None] * xi0 + (1 - t)[:, None] * xi1)
    return compare("convexity", fm, t * f0 + (1 - t) * f1, samples, _rtol_for(density, rtol))


def check_nonnegative(density, dom: SamplingDomain, samples=None):
    samples = dom.draw() if samples is None else samples
    with np.errstate(over="ignore", invalid="ignore"):
        f = density.value(samples.x, samples.u, samples.xi)
    return compare("nonnegativity", np.zeros_like(f), f, samples, 0.0)


def check_summability(density, points, weights):
    """Quadrature of ``x -> f(x, 0, 0)``; passes when finite."""
    points = np.asarray(points, dtype=float)
    zeros = np.zeros(points.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        vals = density.value(points, zeros, np.zeros_like(points))
    total = float(np.sum(vals * np.asarray(weights)))
    return CheckReport(
        name="summability",
        passed=bool(np.isfinite(total)),
        n_samples=points.shape[0],
        worst_margin=0.0 if np.isfinite(total) else -np.inf,
        details={"integral_f_x00": total},
    )

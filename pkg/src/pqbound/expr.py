"""Small arithmetic expression language for coefficient functions.

Configuration files describe coefficients such as ``p(x)``, ``a(x)`` or
``alpha(x, u)`` as strings.  Only a restricted grammar is accepted:

* numbers, ``pi``
* the operators ``+ - * / **`` and unary minus
* the functions ``pow exp log abs sqrt sin cos min max``
* the variables ``x1 .. xn`` (coordinates), ``u``, ``xi1 .. xin`` (gradient
  components) and ``xinorm`` (Euclidean norm of the gradient)

Expressions are compiled once into a closure over numpy ufuncs and evaluated
on whole sample arrays.

>>> e = Expr("1 + x1*x2")
>>> float(e(x=np.array([[2.0, 3.0]]))[0])
7.0
"""

from __future__ import annotations

import ast
import math
import operator
import re

import numpy as np

from .errors import ConfigError

__all__ = ["Expr", "as_expr"]

_FUNCS = {
    "pow": np.power,
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "min": np.minimum,
    "max": np.maximum,
}
_ARITY = {"min": 2, "max": 2, "pow": 2}
_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: np.power,
}
_CONSTS = {"pi": math.pi}
_VAR_RE = re.compile(r"^(x|xi)([1-9][0-9]*)$")


def _compile(node, names):
    if isinstance(node, ast.Expression):
        return _compile(node.body, names)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ConfigError(f"unsupported literal {node.value!r}")
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name):
        name = node.id
        if name in _CONSTS:
            value = _CONSTS[name]
            return lambda env: value
        if name in ("u", "xinorm") or _VAR_RE.match(name):
            names.add(name)
            return lambda env: env[name]
        raise ConfigError(f"unknown name {name!r}")
    if isinstance(node, ast.UnaryOp):
        inner = _compile(node.operand, names)
        if isinstance(node.op, ast.USub):
            return lambda env: -inner(env)
        if isinstance(node.op, ast.UAdd):
            return inner
        raise ConfigError("unsupported unary operator")
    if isinstance(node, ast.BinOp):
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise ConfigError(f"unsupported operator {type(node.op).__name__}")
        left = _compile(node.left, names)
        right = _compile(node.right, names)
        return lambda env: op(left(env), right(env))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ConfigError(f"unknown function in {ast.dump(node.func)}")
        if node.keywords:
            raise ConfigError("keyword arguments are not allowed")
        fname = node.func.id
        want = _ARITY.get(fname, 1)
        if len(node.args) != want:
            raise ConfigError(f"{fname} takes {want} argument(s)")
        fn = _FUNCS[fname]
        args = [_compile(a, names) for a in node.args]
        return lambda env: fn(*(a(env) for a in args))
    raise ConfigError(f"unsupported syntax: {type(node).__name__}")


class Expr:
    """A compiled expression in the coefficient grammar.

    Parameters
    ----------
    source : str or float
        Expression text, or a plain number.
    """

    def __init__(self, source):
        if isinstance(source, (int, float)) and not isinstance(source, bool):
            source = repr(float(source))
        if not isinstance(source, str):
            raise ConfigError(f"expression must be a string or number, got {type(source).__name__}")
        self.source = source.strip()
        try:
            tree = ast.parse(self.source.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {source!r}: {exc.msg}") from None
        names: set[str] = set()
        self._fn = _compile(tree, names)
        self.names = frozenset(names)

    def __repr__(self):
        return f"Expr({self.source!r})"

    @property
    def is_constant(self):
        return not self.names

    def depends_on_u(self):
        return "u" in self.names

    def depends_on_xi(self):
        return any(n == "xinorm" or n.startswith("xi") for n in self.names)

    def __call__(self, x=None, u=None, xi=None):
        """Evaluate on samples.

        ``x`` has shape ``(N, n)``, ``u`` shape ``(N,)`` and ``xi`` shape
        ``(N, n)``.  The result always has shape ``(N,)`` when any argument
        is given, otherwise it is a 0-d array.
        """
        env = {}
        size = None
        if x is not None:
            x = np.asarray(x, dtype=float)
            size = x.shape[0]
            for i in range(x.shape[1]):
                env[f"x{i + 1}"] = x[:, i]
        if u is not None:
            u = np.asarray(u, dtype=float)
            size = u.shape[0] if u.ndim else size
            env["u"] = u
        if xi is not None:
            xi = np.asarray(xi, dtype=float)
            size = xi.shape[0]
            for i in range(xi.shape[1]):
                env[f"xi{i + 1}"] = xi[:, i]
            env["xinorm"] = np.sqrt(np.sum(xi * xi, axis=1))
        missing = [n for n in self.names if n not in env]
        if missing:
            raise ConfigError(f"expression {self.source!r} needs {sorted(missing)}")
        with np.errstate(all="ignore"):
            out = np.asarray(self._fn(env), dtype=float)
        if size is not None and out.shape != (size,):
            out = np.broadcast_to(out, (size,)).copy()
        return out


def as_expr(value, default=None):
    """Coerce numbers, strings and ``Expr`` instances to ``Expr``."""
    if value is None:
        if default is None:
            return None
        value = default
    if isinstance(value, Expr):
        return value
    return Expr(value)

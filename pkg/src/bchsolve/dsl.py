"""Potential expression language.

Grammar (whitespace-insensitive)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := number | ident | func '(' args ')' | '(' expr ')'

Identifiers are the coordinates ``x``, ``y``, ``z``, the time ``t``, the
constant ``pi`` and any parameter declared by the caller.  Functions are
``sin cos exp log erf sqrt`` (one argument) and ``wall(lo, hi[, height])``,
which is ``height`` (default 1e6) for ``x`` outside ``[lo, hi]`` and zero
inside.  Unary minus binds looser than ``^``, so ``-x^2`` is ``-(x^2)``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import erf as _erf

COORDS = ("x", "y", "z")
TIME = "t"
CONSTANTS = {"pi": math.pi}
FUNCS1 = ("sin", "cos", "exp", "log", "erf", "sqrt")
WALL_HEIGHT = 1e6


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExprEvalError(ArithmeticError):
    def __init__(self, message: str, index=None, point=None):
        super().__init__(message)
        self.index = index
        self.point = point


class DifferentiationError(ValueError):
    pass


# --------------------------------------------------------------------------- nodes


class Expr:
    __slots__ = ()

    def free_symbols(self) -> set[str]:
        out: set[str] = set()
        _collect(self, out)
        return out

    def depends_on(self, name: str) -> bool:
        return name in self.free_symbols()


@dataclass(frozen=True)
class Num(Expr):
    value: float

    def __str__(self):
        return repr(float(self.value)) if self.value >= 0 else f"({self.value!r})"


@dataclass(frozen=True)
class Sym(Expr):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr

    def __str__(self):
        return f"{self.func}({self.arg})"


@dataclass(frozen=True)
class Wall(Expr):
    lo: Expr
    hi: Expr
    height: Expr

    def __str__(self):
        return f"wall({self.lo}, {self.hi}, {self.height})"


def _collect(e: Expr, out: set) -> None:
    if isinstance(e, Sym):
        out.add(e.name)
    elif isinstance(e, Neg):
        _collect(e.arg, out)
    elif isinstance(e, BinOp):
        _collect(e.left, out)
        _collect(e.right, out)
    elif isinstance(e, Call):
        _collect(e.arg, out)
    elif isinstance(e, Wall):
        out.add("x")
        for a in (e.lo, e.hi, e.height):
            _collect(a, out)


# ------------------------------------------------------------ folding constructors

ZERO = Num(0.0)
ONE = Num(1.0)


def _isnum(e, v=None):
    return isinstance(e, Num) and (v is None or e.value == v)


def add(a: Expr, b: Expr) -> Expr:
    if _isnum(a) and _isnum(b):
        return Num(a.value + b.value)
    if _isnum(a, 0.0):
        return b
    if _isnum(b, 0.0):
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _isnum(a) and _isnum(b):
        return Num(a.value - b.value)
    if _isnum(b, 0.0):
        return a
    if _isnum(a, 0.0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _isnum(a) and _isnum(b):
        return Num(a.value * b.value)
    if _isnum(a, 0.0) or _isnum(b, 0.0):
        return ZERO
    if _isnum(a, 1.0):
        return b
    if _isnum(b, 1.0):
        return a
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _isnum(a) and _isnum(b) and b.value != 0.0:
        return Num(a.value / b.value)
    if _isnum(b, 1.0):
        return a
    return BinOp("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if _isnum(a) and _isnum(b):
        try:
            r = a.value**b.value
        except (OverflowError, ZeroDivisionError):
            r = None
        if isinstance(r, float) and math.isfinite(r):
            return Num(r)
        return BinOp("^", a, b)
    if _isnum(b, 1.0):
        return a
    if _isnum(b, 0.0):
        return ONE
    return BinOp("^", a, b)


def neg(a: Expr) -> Expr:
    if _isnum(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def call(f: str, a: Expr) -> Expr:
    if _isnum(a):
        v = a.value
        try:
            r = _SCALAR[f](v)
        except (ValueError, OverflowError):
            return Call(f, a)
        if math.isfinite(r):
            return Num(r)
    return Call(f, a)


_SCALAR = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "log": math.log,
    "erf": math.erf,
    "sqrt": math.sqrt,
}


# --------------------------------------------------------------------------- parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),−]))"
)


class _Parser:
    def __init__(self, text: str, params):
        self.text = text
        self.params = params
        self.tokens = []
        pos = 0
        while True:
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                rest = text[pos:]
                if rest.strip() == "":
                    break
                bad = pos + len(rest) - len(rest.lstrip())
                raise ExprSyntaxError(f"unexpected character {text[bad]!r}", self._byte(bad))
            kind = m.lastgroup
            val = m.group(kind)
            if val == "−":
                val = "-"
            self.tokens.append((kind, val, self._byte(m.start(kind))))
            pos = m.end()
        self.end = self._byte(len(text))
        self.i = 0

    def _byte(self, i):
        return len(self.text[:i].encode("utf-8"))

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, self.end)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, val):
        kind, v, off = self.take()
        if v != val:
            what = "end of input" if kind is None else repr(v)
            raise ExprSyntaxError(f"expected {val!r}, found {what}", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, v, off = self.peek()
        if kind is not None:
            raise ExprSyntaxError(f"unexpected {v!r}", off)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            r = self.term()
            e = BinOp(op, e, r)
        return e

    def term(self):
        e = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            r = self.factor()
            e = BinOp(op, e, r)
        return e

    def factor(self):
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.factor())
        if self.peek()[1] == "+":
            self.take()
            return self.factor()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.factor())
        return base

    def atom(self):
        kind, v, off = self.take()
        if kind == "num":
            return Num(float(v))
        if kind == "id":
            if self.peek()[1] == "(":
                return self.call(v, off)
            if v in COORDS or v == TIME:
                return Sym(v)
            if v in CONSTANTS:
                return Num(CONSTANTS[v])
            if v in self.params:
                return Sym(v)
            if v in FUNCS1 or v == "wall":
                raise ExprSyntaxError(f"function {v!r} needs arguments", off)
            raise ExprSyntaxError(f"unknown identifier {v!r}", off)
        if v == "(":
            e = self.expr()
            self.expect(")")
            return e
        what = "end of input" if kind is None else repr(v)
        raise ExprSyntaxError(f"expected a value, found {what}", off)

    def call(self, name, off):
        if name not in FUNCS1 and name != "wall":
            raise ExprSyntaxError(f"unknown function {name!r}", off)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        if name == "wall":
            if len(args) not in (2, 3):
                raise ExprSyntaxError(f"wall takes 2 or 3 arguments, got {len(args)}", off)
            height = args[2] if len(args) == 3 else Num(WALL_HEIGHT)
            return Wall(args[0], args[1], height)
        if len(args) != 1:
            raise ExprSyntaxError(f"{name} takes 1 argument, got {len(args)}", off)
        return Call(name, args[0])


@dataclass(frozen=True)
class PotentialExpr:
    """Parsed expression together with its source text and declared parameters."""

    text: str
    tree: Expr
    params: tuple[str, ...] = ()

    def __str__(self):
        return self.text


def parse_potential(text: str, params=()) -> PotentialExpr:
    """Parse ``text``; ``params`` lists the parameter names that may appear."""
    names = tuple(params)
    for p in names:
        if p in COORDS or p == TIME or p in CONSTANTS or p in FUNCS1 or p == "wall":
            raise ValueError(f"parameter name {p!r} is reserved")
    tree = _Parser(text, set(names)).parse()
    return PotentialExpr(text, tree, names)


# -------------------------------------------------------------------- derivatives


def _d(e: Expr, v: str) -> Expr:
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Sym):
        return ONE if e.name == v else ZERO
    if isinstance(e, Neg):
        return neg(_d(e.arg, v))
    if isinstance(e, Wall):
        return ZERO
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        if e.op == "+":
            return add(_d(a, v), _d(b, v))
        if e.op == "-":
            return sub(_d(a, v), _d(b, v))
        if e.op == "*":
            return add(mul(_d(a, v), b), mul(a, _d(b, v)))
        if e.op == "/":
            return div(sub(mul(_d(a, v), b), mul(a, _d(b, v))), power(b, Num(2.0)))
        if e.op == "^":
            da = _d(a, v)
            if not b.depends_on(v):
                return mul(mul(b, power(a, sub(b, ONE))), da)
            # d(a^b) = a^b * (b' log a + b a'/a)
            return mul(e, add(mul(_d(b, v), call("log", a)), div(mul(b, da), a)))
    if isinstance(e, Call):
        a = e.arg
        da = _d(a, v)
        if _isnum(da, 0.0):
            return ZERO
        f = e.func
        if f == "sin":
            inner = call("cos", a)
        elif f == "cos":
            inner = neg(call("sin", a))
        elif f == "exp":
            inner = e
        elif f == "log":
            inner = div(ONE, a)
        elif f == "sqrt":
            inner = div(ONE, mul(Num(2.0), e))
        elif f == "erf":
            inner = mul(Num(2.0 / math.sqrt(math.pi)), call("exp", neg(power(a, Num(2.0)))))
        else:
            raise DifferentiationError(f"no derivative rule for {f}")
        return mul(inner, da)
    raise DifferentiationError(f"cannot differentiate {type(e).__name__}")


def differentiate(e: PotentialExpr | Expr, var: str) -> PotentialExpr | Expr:
    """Exact partial derivative with respect to a coordinate."""
    if var not in COORDS:
        raise DifferentiationError(f"can only differentiate with respect to x, y or z, not {var!r}")
    if isinstance(e, PotentialExpr):
        tree = _d(e.tree, var)
        return PotentialExpr(str(tree), tree, e.params)
    return _d(e, var)


# --------------------------------------------------------------------- evaluation


def _eval(e: Expr, env: Mapping[str, object]):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Sym):
        try:
            return env[e.name]
        except KeyError:
            raise ExprEvalError(f"unbound symbol {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, BinOp):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            zero = np.asarray(b) == 0
            if np.any(zero):
                idx = np.unravel_index(int(np.argmax(zero)), np.shape(zero)) if np.ndim(zero) else None
                raise ExprEvalError("division by zero", index=idx)
            return a / b
        if isinstance(b, float) and b == 2.0:
            return a * a
        with np.errstate(all="ignore"):
            return np.power(a, b)
    if isinstance(e, Call):
        a = _eval(e.arg, env)
        with np.errstate(all="ignore"):
            if e.func == "erf":
                return _erf(a)
            return getattr(np, e.func)(a)
    if isinstance(e, Wall):
        x = env["x"]
        lo, hi, h = (_eval(p, env) for p in (e.lo, e.hi, e.height))
        return np.where((x >= lo) & (x <= hi), 0.0, h) + 0.0 * x
    raise ExprEvalError(f"cannot evaluate {type(e).__name__}")


def evaluate(e: PotentialExpr | Expr, env: Mapping[str, object]):
    """Evaluate on scalars or broadcastable arrays bound in ``env``."""
    tree = e.tree if isinstance(e, PotentialExpr) else e
    full = dict(CONSTANTS)
    full.update(env)
    return _eval(tree, full)


def coordinate_env(coords, tau: float, params: Mapping[str, float] | None = None) -> dict:
    env = dict(params or {})
    env[TIME] = float(tau)
    for name, c in zip(COORDS, coords):
        env[name] = c
    return env


def evaluate_at(e, coords, tau: float = 0.0, params=None) -> np.ndarray:
    """Evaluate at explicit point arrays ``coords`` (one array per dimension)."""
    shape = np.shape(coords[0])
    try:
        out = evaluate(e, coordinate_env(coords, tau, params))
    except ExprEvalError as err:
        if err.index is not None and err.point is None:
            err.point = tuple(float(np.asarray(c)[err.index]) for c in coords)
            err.args = (f"{err.args[0]} at point {err.point}",)
        raise
    out = np.ascontiguousarray(np.broadcast_to(np.asarray(out, dtype=float), shape))
    bad = ~np.isfinite(out)
    if np.any(bad):
        idx = np.unravel_index(int(np.argmax(bad)), shape)
        point = tuple(float(np.asarray(c)[idx]) for c in coords)
        raise ExprEvalError(f"non-finite value at point {point}", index=idx, point=point)
    return out


def evaluate_on_grid(e, grid, tau: float = 0.0, params=None) -> np.ndarray:
    """Pointwise evaluation at the grid's cell centres."""
    return evaluate_at(e, grid.mesh(), tau, params)


def evaluate_scalar(e, tau: float = 0.0, params=None) -> float:
    """Evaluate an expression that may depend only on ``t`` and parameters."""
    tree = e.tree if isinstance(e, PotentialExpr) else e
    coords = tree.free_symbols() & set(COORDS)
    if coords:
        raise ExprEvalError(f"expected a function of t only, found {sorted(coords)}")
    v = float(evaluate(tree, coordinate_env((), tau, params)))
    if not math.isfinite(v):
        raise ExprEvalError(f"non-finite value at t={tau}")
    return v


# -------------------------------------------------------------- derivative bundle


@dataclass(frozen=True)
class DerivativeTrees:
    """Symbolic derivatives of U needed by the propagators, built once per potential."""

    u: Expr
    grad: tuple[Expr, ...]
    second: tuple[tuple[Expr, ...], ...]
    laplacian: Expr
    bilaplacian: Expr
    has_wall: bool

    @classmethod
    def build(cls, e: PotentialExpr | Expr, dims: int) -> "DerivativeTrees":
        tree = e.tree if isinstance(e, PotentialExpr) else e
        names = COORDS[:dims]
        grad = tuple(_d(tree, v) for v in names)
        second = tuple(tuple(_d(grad[j], names[k]) for k in range(dims)) for j in range(dims))
        lap = ZERO
        for j in range(dims):
            lap = add(lap, second[j][j])
        bilap = ZERO
        for v in names:
            bilap = add(bilap, _d(_d(lap, v), v))
        return cls(tree, grad, second, lap, bilap, _has_wall(tree))


def _has_wall(e: Expr) -> bool:
    if isinstance(e, Wall):
        return True
    if isinstance(e, Neg):
        return _has_wall(e.arg)
    if isinstance(e, BinOp):
        return _has_wall(e.left) or _has_wall(e.right)
    if isinstance(e, Call):
        return _has_wall(e.arg)
    return False


@dataclass(frozen=True)
class DerivativeBundle:
    """alpha*U and its derivative fields on a set of points.

    ``mixed_second`` maps ``(j, k)`` with ``j > k`` to d_j d_k V; ``second`` holds
    the diagonal d_j^2 V.
    """

    v: np.ndarray
    grad: tuple[np.ndarray, ...]
    laplacian: np.ndarray
    bilaplacian: np.ndarray
    grad_dot_grad: np.ndarray
    mixed_second: dict
    second: tuple[np.ndarray, ...]


def bundle_at(trees: DerivativeTrees, coords, tau: float, alpha: float, params=None) -> DerivativeBundle:
    """Evaluate every derivative field of ``alpha*U`` at ``coords``."""
    ev = lambda t: alpha * evaluate_at(t, coords, tau, params)  # noqa: E731
    dims = len(coords)
    v = ev(trees.u)
    grad = tuple(ev(g) for g in trees.grad)
    gg = sum(g * g for g in grad)
    lap = ev(trees.laplacian)
    bilap = ev(trees.bilaplacian)
    second = tuple(ev(trees.second[j][j]) for j in range(dims))
    mixed = {(j, k): ev(trees.second[j][k]) for j in range(dims) for k in range(j)}
    return DerivativeBundle(v, grad, lap, bilap, gg, mixed, second)


def derivative_bundle(e: PotentialExpr, grid, tau: float, alpha: float, params=None) -> DerivativeBundle:
    trees = DerivativeTrees.build(e, grid.dims)
    return bundle_at(trees, grid.mesh(), tau, alpha, params)

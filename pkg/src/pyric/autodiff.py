"""Scalar reverse-mode automatic differentiation.

Every primitive records one node on a :class:`Tape`.  A node's value is a
scalar, or a 1-D array of independent *lanes*: N lanes on one tape behave
exactly like N scalar tapes run in lockstep (every primitive acts
element-wise).  Scalar nodes broadcast into lane nodes; their adjoint is the
sum over lanes, the same accumulation a shared leaf gets when it is reused.
The only cross-lane primitive is ``sum``.

Example::

    tape = Tape()
    x = tape.variable(3.0, name="x")
    y = x ** 2
    grads = backward(y)
    grads[x]  # 6.0
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "ForwardDomainError",
    "BackwardError",
    "Tape",
    "Var",
    "Gradients",
    "GradCheckReport",
    "backward",
    "grad_check",
    "value_of",
    "exp",
    "log",
    "sqrt",
    "sigmoid",
    "minimum",
    "maximum",
    "where",
    "lane_sum",
]

PRIMITIVES = (
    "constant", "variable", "add", "sub", "mul", "div", "neg", "exp", "log",
    "sqrt", "pow", "sigmoid", "min", "max", "select", "sum",
)


class ForwardDomainError(ArithmeticError):
    """A primitive produced a non-finite value."""

    def __init__(self, op: str, detail: str = ""):
        self.op = op
        msg = f"non-finite value from primitive '{op}'"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class BackwardError(ArithmeticError):
    pass


def _finite(value) -> bool:
    return bool(np.all(np.isfinite(value)))


class Tape:
    """Append-only record of primitive operations.

    A tape has a single owner while it is being written.
    """

    def __init__(self):
        self.ops: list[str] = []
        self.parents: list[tuple[int, ...]] = []
        self.values: list = []
        self.local_grads: list[tuple] = []
        self.names: dict[int, str] = {}

    def __len__(self) -> int:
        return len(self.ops)

    def record(self, op: str, parents: Sequence["Var"], value, local_grads=()) -> "Var":
        if op not in PRIMITIVES:
            raise ValueError(f"unknown primitive {op!r}")
        if not _finite(value):
            raise ForwardDomainError(op)
        ids = tuple(p.id for p in parents)
        node_id = len(self.ops)
        # parents always precede the node: topological order by construction
        assert all(i < node_id for i in ids)
        self.ops.append(op)
        self.parents.append(ids)
        self.values.append(value)
        self.local_grads.append(tuple(local_grads))
        return Var(self, node_id)

    def constant(self, value) -> "Var":
        return self.record("constant", (), _as_value(value))

    def variable(self, value, name: str | None = None) -> "Var":
        v = self.record("variable", (), _as_value(value))
        if name is not None:
            self.names[v.id] = name
        return v

    def lift(self, x) -> "Var":
        if isinstance(x, Var):
            if x.tape is not self:
                raise ValueError("cannot mix nodes from different tapes")
            return x
        return self.constant(x)


def _as_value(x):
    if isinstance(x, np.ndarray):
        return x.astype(np.float64, copy=False)
    return np.float64(x)


class Var:
    """Handle to a node on a tape."""

    __slots__ = ("tape", "id")
    # make numpy defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, tape: Tape, node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def value(self):
        return self.tape.values[self.id]

    @property
    def op(self) -> str:
        return self.tape.ops[self.id]

    def __repr__(self):
        return f"Var(id={self.id}, op={self.op}, value={self.value!r})"

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        o = self.tape.lift(other)
        return self.tape.record("add", (self, o), self.value + o.value, (1.0, 1.0))

    def __radd__(self, other):
        return self.tape.lift(other) + self

    def __sub__(self, other):
        o = self.tape.lift(other)
        return self.tape.record("sub", (self, o), self.value - o.value, (1.0, -1.0))

    def __rsub__(self, other):
        return self.tape.lift(other) - self

    def __mul__(self, other):
        o = self.tape.lift(other)
        return self.tape.record("mul", (self, o), self.value * o.value, (o.value, self.value))

    def __rmul__(self, other):
        return self.tape.lift(other) * self

    def __truediv__(self, other):
        o = self.tape.lift(other)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self.value / o.value
        if not _finite(val):
            raise ForwardDomainError("div", "division by zero")
        inv = 1.0 / o.value
        return self.tape.record("div", (self, o), val, (inv, -val * inv))

    def __rtruediv__(self, other):
        return self.tape.lift(other) / self

    def __neg__(self):
        return self.tape.record("neg", (self,), -self.value, (-1.0,))

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            raise TypeError("exponents are constants, never tape variables")
        c = float(exponent)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.power(self.value, c)
            if not _finite(val):
                raise ForwardDomainError("pow", f"base {self.value!r} ** {c}")
            grad = c * np.power(self.value, c - 1.0)
        return self.tape.record("pow", (self,), val, (grad,))

    # elementary functions ------------------------------------------------
    def exp(self):
        with np.errstate(over="ignore"):
            val = np.exp(self.value)
        return self.tape.record("exp", (self,), val, (val,))

    def log(self):
        if np.any(np.asarray(self.value) <= 0.0):
            raise ForwardDomainError("log", "argument must be positive")
        return self.tape.record("log", (self,), np.log(self.value), (1.0 / self.value,))

    def sqrt(self):
        if np.any(np.asarray(self.value) < 0.0):
            raise ForwardDomainError("sqrt", "argument must be non-negative")
        val = np.sqrt(self.value)
        # infinite at 0; backward clips it
        with np.errstate(divide="ignore"):
            grad = 0.5 / val
        return self.tape.record("sqrt", (self,), val, (grad,))

    def sigmoid(self):
        s = expit(self.value)
        return self.tape.record("sigmoid", (self,), s, (s * (1.0 - s),))

    def minimum(self, c: float):
        val = np.minimum(self.value, c)
        grad = np.where(np.asarray(self.value) < c, 1.0, 0.0)
        return self.tape.record("min", (self,), _shape_like(val, self.value), (_shape_like(grad, self.value),))

    def maximum(self, c: float):
        val = np.maximum(self.value, c)
        grad = np.where(np.asarray(self.value) > c, 1.0, 0.0)
        return self.tape.record("max", (self,), _shape_like(val, self.value), (_shape_like(grad, self.value),))

    def sum(self):
        v = self.value
        return self.tape.record("sum", (self,), np.float64(np.sum(v)), (np.ones_like(v),))


def _shape_like(x, ref):
    return np.float64(x) if np.ndim(ref) == 0 else np.asarray(x, dtype=np.float64)


def value_of(x):
    return x.value if isinstance(x, Var) else x


def exp(x):
    return x.exp() if isinstance(x, Var) else np.exp(x)


def log(x):
    return x.log() if isinstance(x, Var) else np.log(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Var) else np.sqrt(x)


def sigmoid(x):
    return x.sigmoid() if isinstance(x, Var) else expit(x)


def minimum(x, c: float):
    return x.minimum(c) if isinstance(x, Var) else np.minimum(x, c)


def maximum(x, c: float):
    return x.maximum(c) if isinstance(x, Var) else np.maximum(x, c)


def lane_sum(x):
    return x.sum() if isinstance(x, Var) else np.sum(x)


def where(cond, y, z):
    """Hard selection: ``y`` where ``cond`` holds, else ``z``."""
    if isinstance(y, Var) or isinstance(z, Var):
        tape = y.tape if isinstance(y, Var) else z.tape
        y, z = tape.lift(y), tape.lift(z)
        mask = np.asarray(cond, dtype=bool)
        val = np.where(mask, y.value, z.value)
        m = mask.astype(np.float64)
        if np.ndim(val) == 0:
            val, m = np.float64(val), np.float64(m)
        return tape.record("select", (y, z), val, (m, 1.0 - m))
    if np.ndim(cond) == 0 and np.ndim(y) == 0 and np.ndim(z) == 0:
        return y if cond else z
    return np.where(cond, y, z)


@dataclass
class Gradients:
    """Adjoints of variable nodes after a backward pass."""

    adjoints: dict[int, object]
    clip_limit: float | None
    clip_events: int = 0
    nan_zeroed: int = 0
    all_adjoints: dict[int, object] | None = None
    names: dict[int, str] = field(default_factory=dict)

    def __getitem__(self, var: Var):
        return self.adjoints.get(var.id, np.zeros_like(var.value))

    def by_name(self) -> dict[str, object]:
        return {self.names[i]: a for i, a in self.adjoints.items() if i in self.names}


def _unbroadcast(contrib, parent_value):
    if np.ndim(parent_value) == 0 and np.ndim(contrib) > 0:
        return np.float64(np.sum(contrib))
    return contrib


def backward(output: Var, clip_limit: float | None = 10.0, seed=None,
             clip_leaves: bool = True, keep_all: bool = False) -> Gradients:
    """Reverse accumulation from ``output`` down to the tape's variables.

    Each node's adjoint is accumulated from all consumers, NaNs from
    ``0 * inf`` are zeroed (and counted), then the adjoint is clipped to
    ``[-clip_limit, clip_limit]`` before being pushed to the parents.
    With ``clip_leaves=False`` variable adjoints are left unclipped so a
    caller can sum them across tapes and clip the total.
    """
    if clip_limit is not None and clip_limit <= 0:
        raise ValueError("clip_limit must be positive")
    tape = output.tape
    if seed is None:
        seed = np.ones_like(output.value)
    adj: dict[int, object] = {output.id: _as_value(seed)}
    result: dict[int, object] = {}
    kept: dict[int, object] | None = {} if keep_all else None
    clip_events = 0
    nan_zeroed = 0

    with np.errstate(invalid="ignore", over="ignore"):
        for i in range(output.id, -1, -1):
            a = adj.pop(i, None)
            if a is None:
                continue
            op = tape.ops[i]
            nan = np.isnan(a)
            if np.any(nan):
                nan_zeroed += int(np.count_nonzero(nan))
                a = np.where(nan, 0.0, a)
                if np.ndim(a) == 0:
                    a = np.float64(a)
            if clip_limit is not None and (clip_leaves or op != "variable"):
                over = np.abs(a) > clip_limit
                if np.any(over):
                    clip_events += int(np.count_nonzero(over))
                    a = np.clip(a, -clip_limit, clip_limit)
                    if np.ndim(a) == 0:
                        a = np.float64(a)
            if kept is not None:
                kept[i] = a
            if op == "variable":
                result[i] = a
                continue
            for parent, lg in zip(tape.parents[i], tape.local_grads[i]):
                contrib = _unbroadcast(a * lg, tape.values[parent])
                prev = adj.get(parent)
                adj[parent] = contrib if prev is None else prev + contrib

    if clip_limit is None:
        bad = [i for i, a in result.items() if not _finite(a)]
        if bad:
            raise BackwardError(f"non-finite adjoint at nodes {bad}; set a clip_limit")
    return Gradients(result, clip_limit, clip_events, nan_zeroed, kept,
                     dict(tape.names))


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_input: str | int | None
    analytic: dict
    numeric: dict
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check(function: Callable[[Tape, dict], Var], inputs: Mapping[str, float] | Sequence[float],
               step: float = 1e-5, tolerance: float = 1e-5,
               reference: Callable[[dict], float] | None = None, floor: float = 1e-6) -> GradCheckReport:
    """Compare reverse-mode gradients with central finite differences.

    ``function(tape, xs)`` builds a scalar output from the tape variables in
    ``xs`` (a dict keyed like ``inputs``).  The perturbation for input x is
    ``step * |x|`` (``step`` when x is zero), so coefficients of very
    different magnitude get comparable relative steps.

    Errors are measured on ``x * df/dx`` (plain ``df/dx`` where x is zero),
    the quantity a relative step resolves, with magnitudes below ``floor``
    (in output units) treated as ``floor``.

    ``reference(xs)``, when given, evaluates the same function without a
    tape for the finite differences.  It receives ``np.longdouble`` values,
    so a reference written with numpy runs in extended precision and the
    differences resolve gradients far below ``eps * |f| / h``.
    """
    if not isinstance(inputs, Mapping):
        inputs = {i: float(v) for i, v in enumerate(inputs)}
    base = {k: float(v) for k, v in inputs.items()}

    tape = Tape()
    xs = {k: tape.variable(v, name=str(k)) for k, v in base.items()}
    out = function(tape, xs)
    if not isinstance(out, Var):
        analytic = {k: 0.0 for k in base}
    else:
        grads = backward(out, clip_limit=None)
        analytic = {k: float(grads[v]) for k, v in xs.items()}

    def evaluate(point):
        if reference is not None:
            return reference(point)
        t = Tape()
        res = function(t, {k: t.variable(v) for k, v in point.items()})
        return value_of(res)

    kind = np.longdouble if reference is not None else np.float64
    start = {k: kind(v) for k, v in base.items()}
    numeric = {}
    worst, worst_err = None, 0.0
    for k, x in start.items():
        h = kind(step) * abs(x) if x != 0.0 else kind(step)
        hi, lo = dict(start), dict(start)
        hi[k], lo[k] = x + h, x - h
        numeric[k] = float((evaluate(hi) - evaluate(lo)) / (2 * h))
        scale = abs(float(x)) if x != 0.0 else 1.0
        err = relative_error(analytic[k] * scale, numeric[k] * scale, floor)
        if err > worst_err:
            worst, worst_err = k, err
    return GradCheckReport(worst_err, worst, analytic, numeric, tolerance)

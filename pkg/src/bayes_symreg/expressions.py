"""Acyclic-graph equation genomes and their evaluation.

An equation is encoded as a flat command array: each row ``(opcode, arg1,
arg2)`` either loads a terminal (an input variable or a numeric parameter
slot) or applies an operator to the results of two strictly earlier rows.
Because operator arguments always point backwards, the encoding is acyclic
by construction and a single forward pass evaluates the whole array.  The
equation output is the final command; rows that the output does not reach
are dormant genetic material that variation can later re-activate.

Evaluation is vectorized over both data rows and batches of parameter
vectors, which is what makes particle-based inference over the parameters
affordable.  Non-finite intermediate values (division by zero, square roots
of negatives, fractional powers of negatives) propagate IEEE-style and are
reported through a validity flag rather than raised.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Op(IntEnum):
    """Command opcodes. VARIABLE/PARAMETER are terminals, the rest operators."""

    VARIABLE = 0
    PARAMETER = 1
    ADD = 2
    SUBTRACT = 3
    MULTIPLY = 4
    DIVIDE = 5
    POWER = 6
    SQRT = 7


TERMINAL_OPS = (Op.VARIABLE, Op.PARAMETER)
OPERATOR_OPS = (Op.ADD, Op.SUBTRACT, Op.MULTIPLY, Op.DIVIDE, Op.POWER, Op.SQRT)
#: Operators that consume a single argument (arg2 is carried but ignored).
UNARY_OPS = (Op.SQRT,)

_OP_SYMBOL = {Op.ADD: "+", Op.SUBTRACT: "-", Op.MULTIPLY: "*", Op.DIVIDE: "/"}
# Precedence used when rendering: higher binds tighter.
_PRECEDENCE = {Op.ADD: 1, Op.SUBTRACT: 1, Op.MULTIPLY: 2, Op.DIVIDE: 2, Op.POWER: 3}
_ATOM = 9


class EquationGenome:
    """Immutable command-array encoding of an equation f(x, theta).

    Parameters
    ----------
    commands : array_like, shape (L, 3)
        Integer rows ``(opcode, arg1, arg2)``.  Operator rows must reference
        strictly earlier rows; terminal rows carry a variable index or a
        parameter slot in ``arg1``.
    output : int, optional
        Index of the command whose value is the equation output.  Defaults
        to the last row.

    Notes
    -----
    Parameter slots may be sparse; the distinct slots reachable from the
    output are renumbered 0..p-1 (in increasing slot order) before any
    fitting or inference, so ``theta`` vectors always have minimal length.
    """

    __slots__ = ("_commands", "_output", "_reachable", "_param_slots", "_key")

    def __init__(self, commands, output: int | None = None):
        commands = np.ascontiguousarray(commands, dtype=np.int64)
        if commands.ndim != 2 or commands.shape[1] != 3 or commands.shape[0] < 1:
            raise ValueError(f"command array must have shape (L, 3), got {commands.shape}")
        n = commands.shape[0]
        if output is None:
            output = n - 1
        if not 0 <= output < n:
            raise ValueError(f"output index {output} out of range for {n} commands")
        ops = commands[:, 0]
        if ops.min() < int(Op.VARIABLE) or ops.max() > int(Op.SQRT):
            raise ValueError("unknown opcode in command array")
        is_term = ops <= int(Op.PARAMETER)
        pos = np.arange(n)
        bad_args = ~is_term & (
            (commands[:, 1] < 0)
            | (commands[:, 1] >= pos)
            | (commands[:, 2] < 0)
            | (commands[:, 2] >= pos)
        )
        if bad_args.any():
            raise ValueError(
                f"operator arguments must reference earlier rows (rows {np.nonzero(bad_args)[0].tolist()})"
            )
        if (is_term & (commands[:, 1] < 0)).any():
            raise ValueError("terminal indices must be non-negative")
        commands.setflags(write=False)
        self._commands = commands
        self._output = int(output)
        self._reachable = None
        self._param_slots = None
        self._key = None

    @property
    def commands(self) -> np.ndarray:
        return self._commands

    @property
    def output(self) -> int:
        return self._output

    def __len__(self) -> int:
        return self._commands.shape[0]

    @property
    def reachable(self) -> np.ndarray:
        """Sorted indices of commands reachable from the output."""
        if self._reachable is None:
            c = self._commands
            needed = np.zeros(len(self), dtype=bool)
            stack = [self._output]
            needed[self._output] = True
            while stack:
                i = stack.pop()
                op = c[i, 0]
                if op <= int(Op.PARAMETER):
                    continue
                a1 = c[i, 1]
                if not needed[a1]:
                    needed[a1] = True
                    stack.append(a1)
                if op not in (int(Op.SQRT),):
                    a2 = c[i, 2]
                    if not needed[a2]:
                        needed[a2] = True
                        stack.append(a2)
            self._reachable = np.nonzero(needed)[0]
        return self._reachable

    @property
    def complexity(self) -> int:
        """Number of distinct commands reachable from the output."""
        return len(self.reachable)

    @property
    def param_slots(self) -> np.ndarray:
        """Distinct parameter slots used by reachable commands, sorted."""
        if self._param_slots is None:
            c = self._commands[self.reachable]
            slots = c[c[:, 0] == int(Op.PARAMETER), 1]
            self._param_slots = np.unique(slots)
        return self._param_slots

    @property
    def param_count(self) -> int:
        return len(self.param_slots)

    @property
    def key(self) -> bytes:
        """Stable identity of the genome (command bytes + output index)."""
        if self._key is None:
            self._key = self._commands.tobytes() + self._output.to_bytes(4, "little")
        return self._key

    def __eq__(self, other) -> bool:
        return isinstance(other, EquationGenome) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        return f"EquationGenome({render(self)!r})"


@dataclass(frozen=True)
class EvalResult:
    """Evaluation output: one value per dataset row plus a finiteness flag."""

    values: np.ndarray
    valid: bool


def _slot_index_map(genome: EquationGenome) -> dict[int, int]:
    return {int(s): k for k, s in enumerate(genome.param_slots)}


def _forward_values(genome: EquationGenome, x: np.ndarray, theta2d: np.ndarray) -> np.ndarray:
    """Evaluate over a batch: x (N, d), theta2d (B, p) -> values (B, N).

    Only reachable commands are evaluated, so dormant rows can never
    invalidate a genome.  Intermediate buffers are kept broadcastable where
    possible ((1, N) for variable loads, (B, 1) for parameter loads).
    """
    c = genome.commands
    slot_map = _slot_index_map(genome)
    n = x.shape[0]
    b = theta2d.shape[0]
    buf: dict[int, np.ndarray] = {}
    with np.errstate(all="ignore"):
        for i in genome.reachable:
            op, a1, a2 = c[i]
            if op == int(Op.VARIABLE):
                if a1 >= x.shape[1]:
                    raise ValueError(f"genome loads variable x_{a1} but dataset has d={x.shape[1]}")
                v = x[:, a1][None, :]
            elif op == int(Op.PARAMETER):
                v = theta2d[:, slot_map[int(a1)]][:, None]
            elif op == int(Op.ADD):
                v = buf[a1] + buf[a2]
            elif op == int(Op.SUBTRACT):
                v = buf[a1] - buf[a2]
            elif op == int(Op.MULTIPLY):
                v = buf[a1] * buf[a2]
            elif op == int(Op.DIVIDE):
                v = buf[a1] / buf[a2]
            elif op == int(Op.POWER):
                v = np.power(buf[a1], buf[a2])
            else:  # SQRT
                v = np.sqrt(buf[a1])
            buf[i] = v
    return np.broadcast_to(buf[genome.output], (b, n)).astype(np.float64, copy=False)


def _forward_values_and_jacobian(
    genome: EquationGenome, x: np.ndarray, theta2d: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Forward-mode values and jacobians: -> (values (B, N), jac (B, N, p)).

    Derivative buffers use ``None`` for structurally zero gradients so that
    parameter-free subtrees cost nothing and do not poison valid genomes
    with 0 * log(negative) artifacts.
    """
    c = genome.commands
    slot_map = _slot_index_map(genome)
    p = genome.param_count
    n = x.shape[0]
    b = theta2d.shape[0]
    buf: dict[int, np.ndarray] = {}
    grad: dict[int, np.ndarray | None] = {}

    def gadd(da, db):
        if da is None:
            return db
        if db is None:
            return da
        return da + db

    with np.errstate(all="ignore"):
        for i in genome.reachable:
            op, a1, a2 = c[i]
            if op == int(Op.VARIABLE):
                if a1 >= x.shape[1]:
                    raise ValueError(f"genome loads variable x_{a1} but dataset has d={x.shape[1]}")
                v, g = x[:, a1][None, :, None], None
            elif op == int(Op.PARAMETER):
                v = theta2d[:, slot_map[int(a1)]][:, None, None]
                g = np.zeros((1, 1, p))
                g[0, 0, slot_map[int(a1)]] = 1.0
            elif op == int(Op.ADD):
                v = buf[a1] + buf[a2]
                g = gadd(grad[a1], grad[a2])
            elif op == int(Op.SUBTRACT):
                v = buf[a1] - buf[a2]
                db = grad[a2] if grad[a2] is None else -grad[a2]
                g = gadd(grad[a1], db)
            elif op == int(Op.MULTIPLY):
                v = buf[a1] * buf[a2]
                t1 = None if grad[a1] is None else grad[a1] * buf[a2]
                t2 = None if grad[a2] is None else grad[a2] * buf[a1]
                g = gadd(t1, t2)
            elif op == int(Op.DIVIDE):
                v = buf[a1] / buf[a2]
                t1 = None if grad[a1] is None else grad[a1] / buf[a2]
                t2 = None if grad[a2] is None else -grad[a2] * (v / buf[a2])
                g = gadd(t1, t2)
            elif op == int(Op.POWER):
                v = np.power(buf[a1], buf[a2])
                t1 = None
                if grad[a1] is not None:
                    t1 = grad[a1] * buf[a2] * np.power(buf[a1], buf[a2] - 1.0)
                t2 = None
                if grad[a2] is not None:
                    t2 = grad[a2] * v * np.log(buf[a1])
                g = gadd(t1, t2)
            else:  # SQRT
                v = np.sqrt(buf[a1])
                g = None if grad[a1] is None else grad[a1] * (0.5 / v)
            buf[i] = v
            grad[i] = g

    values = np.broadcast_to(buf[genome.output][..., 0], (b, n)).astype(np.float64, copy=False)
    gout = grad[genome.output]
    if gout is None:
        jac = np.zeros((b, n, p))
    else:
        jac = np.broadcast_to(gout, (b, n, p)).astype(np.float64, copy=False)
    return values, jac


def _as_theta2d(genome: EquationGenome, theta) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if theta.ndim == 1:
        theta = theta[None, :] if theta.size else np.zeros((1, 0))
    if theta.shape[1] < genome.param_count:
        raise ValueError(
            f"theta has {theta.shape[1]} entries but genome uses {genome.param_count} parameters"
        )
    return theta


def evaluate(genome: EquationGenome, dataset, theta=()) -> EvalResult:
    """Evaluate f(x_i, theta) over all dataset rows.

    Non-finite outputs (domain violations anywhere in the graph) flag the
    result invalid instead of raising.
    """
    theta2d = _as_theta2d(genome, theta)
    values = _forward_values(genome, dataset.x, theta2d)[0]
    return EvalResult(values=values, valid=bool(np.isfinite(values).all()))


def evaluate_batch(genome: EquationGenome, x: np.ndarray, theta2d: np.ndarray) -> np.ndarray:
    """Evaluate a (B, p) batch of parameter vectors at once: -> (B, N)."""
    return _forward_values(genome, np.asarray(x, dtype=np.float64), theta2d)


def evaluate_with_gradient(genome: EquationGenome, dataset, theta=()) -> tuple[EvalResult, np.ndarray]:
    """Evaluate and return the analytic jacobian d f(x_i, theta) / d theta_k.

    Returns ``(EvalResult, jacobian (N, p))``; non-finite derivatives flag
    the result invalid just like non-finite values do.
    """
    theta2d = _as_theta2d(genome, theta)
    values, jac = _forward_values_and_jacobian(genome, dataset.x, theta2d)
    valid = bool(np.isfinite(values).all() and np.isfinite(jac).all())
    return EvalResult(values=values[0], valid=valid), jac[0]


def complexity(genome: EquationGenome) -> int:
    """Count of distinct commands reachable from the output node."""
    return genome.complexity


def _format_value(v: float) -> str:
    s = f"{v:.6g}"
    return f"({s})" if s.startswith("-") else s


def render(genome: EquationGenome, theta=None) -> str:
    """Deterministic infix rendering of the equation.

    With ``theta`` absent, parameters print as ``theta_1 .. theta_p`` in
    compacted slot order; with ``theta`` given, numeric values are
    substituted.  The grammar (see README) is eval-compatible: ``**`` for
    powers and ``sqrt(...)`` for square roots.
    """
    c = genome.commands
    slot_map = _slot_index_map(genome)
    if theta is not None:
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    memo: dict[int, tuple[str, int]] = {}

    def wrap(child: tuple[str, int], min_prec: int) -> str:
        text, prec = child
        return f"({text})" if prec < min_prec else text

    def visit(i: int) -> tuple[str, int]:
        if i in memo:
            return memo[i]
        op, a1, a2 = c[i]
        if op == int(Op.VARIABLE):
            out = (f"x_{a1}", _ATOM)
        elif op == int(Op.PARAMETER):
            k = slot_map[int(a1)]
            if theta is None:
                out = (f"theta_{k + 1}", _ATOM)
            else:
                out = (_format_value(float(theta[k])), _ATOM)
        elif op == int(Op.SQRT):
            out = (f"sqrt({visit(a1)[0]})", _ATOM)
        elif op == int(Op.POWER):
            left = wrap(visit(a1), _PRECEDENCE[Op.POWER] + 1)
            right = wrap(visit(a2), _PRECEDENCE[Op.POWER] + 1)
            out = (f"{left}**{right}", _PRECEDENCE[Op.POWER])
        else:
            sym = _OP_SYMBOL[Op(op)]
            prec = _PRECEDENCE[Op(op)]
            left = wrap(visit(a1), prec)
            # Right operand of - and / needs strictly higher precedence.
            right = wrap(visit(a2), prec + (1 if op in (int(Op.SUBTRACT), int(Op.DIVIDE)) else 0))
            out = (f"{left} {sym} {right}", prec)
        memo[i] = out
        return out

    return visit(genome.output)[0]


def distance(a: EquationGenome, b: EquationGenome) -> float:
    """Similarity metric for crowding: command-level Hamming distance.

    Counts aligned rows that differ (length mismatch counts as all-extra
    rows differing) and breaks ties with the normalized complexity gap,
    which is always below one row's worth of distance.
    """
    ca, cb = a.commands, b.commands
    m = min(len(ca), len(cb))
    differing = int((ca[:m] != cb[:m]).any(axis=1).sum()) + abs(len(ca) - len(cb))
    differing += int(a.output != b.output)
    scale = max(len(ca), len(cb)) + 1
    return differing + abs(a.complexity - b.complexity) / scale


def polynomial_genome(order: int, variable: int = 0) -> EquationGenome:
    """Build a genome for theta_1 + theta_2*x + ... + theta_{k+1}*x^k.

    Used by the polynomial fitness demonstration and as a convenient test
    fixture; powers are encoded as chained multiplications so the genome
    stays inside the {+, *} operator set.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    rows = [(int(Op.PARAMETER), 0, 0)]
    if order == 0:
        return EquationGenome(np.array(rows, dtype=np.int64))
    rows.append((int(Op.VARIABLE), variable, 0))
    power_idx = 1  # row currently holding x^j
    acc_idx = 0
    for j in range(1, order + 1):
        if j > 1:
            rows.append((int(Op.MULTIPLY), power_idx, 1))
            power_idx = len(rows) - 1
        rows.append((int(Op.PARAMETER), j, 0))
        rows.append((int(Op.MULTIPLY), len(rows) - 1, power_idx))
        rows.append((int(Op.ADD), acc_idx, len(rows) - 1))
        acc_idx = len(rows) - 1
    return EquationGenome(np.array(rows, dtype=np.int64))

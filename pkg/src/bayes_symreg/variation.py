"""Random genome generation, single-point crossover, and mutation.

All operations act on full-capacity command arrays, so the maximum graph
size is preserved by construction: crossover swaps aligned array segments
(argument indices are absolute positions and keep pointing backwards), and
every mutation rewrites rows in place.

The five mutation kinds:

* point: replace the opcode of one row (terminals are redrawn whole);
* edge: repoint one operator argument at a different earlier row;
* node-and-edge: redraw one operator row's opcode and both arguments;
* prune: overwrite a reachable operator row with a copy of its first
  argument's command, which can only shrink the expressed graph;
* branch: rewrite dormant rows with a fresh random subgraph and hook a
  reachable operator argument onto it (degrades to point mutation when no
  dormant capacity exists).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expressions import OPERATOR_OPS, UNARY_OPS, EquationGenome, Op

_DEFAULT_OPERATORS = (Op.ADD, Op.SUBTRACT, Op.MULTIPLY, Op.DIVIDE, Op.POWER, Op.SQRT)


@dataclass(frozen=True)
class VariationConfig:
    """Knobs of the variation operators.

    ``terminal_bias`` is the probability that a freshly generated row is a
    terminal rather than an operator; parameter capacity equals
    ``max_commands`` so any row may introduce a distinct parameter slot.
    """

    max_commands: int = 64
    operator_set: tuple[Op, ...] = _DEFAULT_OPERATORS
    crossover_prob: float = 0.4
    mutation_prob: float = 0.4
    terminal_bias: float = 0.2

    def __post_init__(self):
        if self.max_commands < 1:
            raise ValueError("max_commands must be >= 1")
        if not self.operator_set:
            raise ValueError("operator_set must not be empty")
        bad = [op for op in self.operator_set if Op(op) not in OPERATOR_OPS]
        if bad:
            raise ValueError(f"not operators: {bad}")
        for name in ("crossover_prob", "mutation_prob", "terminal_bias"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        object.__setattr__(self, "operator_set", tuple(Op(op) for op in self.operator_set))


def _random_terminal(config: VariationConfig, d: int, rng) -> tuple[int, int, int]:
    if rng.random() < 0.5:
        return (int(Op.VARIABLE), int(rng.integers(d)), 0)
    return (int(Op.PARAMETER), int(rng.integers(config.max_commands)), 0)


def _random_operator(config: VariationConfig, position: int, rng) -> tuple[int, int, int]:
    op = config.operator_set[rng.integers(len(config.operator_set))]
    return (int(op), int(rng.integers(position)), int(rng.integers(position)))


def random_genome(config: VariationConfig, d: int, rng) -> EquationGenome:
    """Generate a full-capacity random genome over d input variables."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rows = []
    for i in range(config.max_commands):
        if i == 0 or rng.random() < config.terminal_bias:
            rows.append(_random_terminal(config, d, rng))
        else:
            rows.append(_random_operator(config, i, rng))
    return EquationGenome(np.asarray(rows, dtype=np.int64))


def repair_indices(commands: np.ndarray, rng) -> np.ndarray:
    """Remap any operator argument pointing at-or-after its row.

    With aligned full-capacity parents this never fires for crossover
    output (absolute indices already point backwards); it exists as the
    declared safety net for hand-built or truncated arrays.
    """
    commands = np.array(commands, dtype=np.int64)
    for i in range(commands.shape[0]):
        op = commands[i, 0]
        if op <= int(Op.PARAMETER):
            continue
        for slot in (1, 2):
            if not 0 <= commands[i, slot] < i:
                commands[i, slot] = int(rng.integers(i)) if i > 0 else 0
    return commands


def crossover(parent_a: EquationGenome, parent_b: EquationGenome, rng) -> tuple[EquationGenome, EquationGenome]:
    """Single-point crossover: swap array segments at a shared cut point."""
    ca, cb = parent_a.commands, parent_b.commands
    if len(ca) != len(cb):
        raise ValueError("parents must share command-array capacity")
    cut = int(rng.integers(0, len(ca) + 1))
    child_a = np.vstack([ca[:cut], cb[cut:]])
    child_b = np.vstack([cb[:cut], ca[cut:]])
    return (
        EquationGenome(repair_indices(child_a, rng)),
        EquationGenome(repair_indices(child_b, rng)),
    )


def _point_mutation(commands: np.ndarray, config: VariationConfig, d: int, rng) -> None:
    i = int(rng.integers(commands.shape[0]))
    if commands[i, 0] <= int(Op.PARAMETER):
        commands[i] = _random_terminal(config, d, rng)
    else:
        choices = [op for op in config.operator_set if int(op) != commands[i, 0]]
        if choices:
            commands[i, 0] = int(choices[rng.integers(len(choices))])


def _operator_rows(commands: np.ndarray) -> np.ndarray:
    return np.nonzero(commands[:, 0] > int(Op.PARAMETER))[0]


def _edge_mutation(commands: np.ndarray, config: VariationConfig, d: int, rng) -> None:
    rows = _operator_rows(commands)
    if len(rows) == 0:
        _point_mutation(commands, config, d, rng)
        return
    i = int(rows[rng.integers(len(rows))])
    unary = Op(commands[i, 0]) in UNARY_OPS
    slot = 1 if unary else int(rng.integers(1, 3))
    commands[i, slot] = int(rng.integers(i))


def _node_and_edge_mutation(commands: np.ndarray, config: VariationConfig, d: int, rng) -> None:
    rows = _operator_rows(commands)
    if len(rows) == 0:
        _point_mutation(commands, config, d, rng)
        return
    i = int(rows[rng.integers(len(rows))])
    commands[i] = _random_operator(config, i, rng)


def _prune_mutation(
    commands: np.ndarray, genome: EquationGenome, config: VariationConfig, d: int, rng
) -> None:
    rows = [i for i in genome.reachable if commands[i, 0] > int(Op.PARAMETER)]
    if not rows:
        _point_mutation(commands, config, d, rng)
        return
    i = int(rows[rng.integers(len(rows))])
    commands[i] = commands[commands[i, 1]]


def _branch_mutation(
    commands: np.ndarray, genome: EquationGenome, config: VariationConfig, d: int, rng
) -> None:
    dormant = np.setdiff1d(np.arange(genome.output), genome.reachable)
    if len(dormant) == 0:
        _point_mutation(commands, config, d, rng)
        return
    size = int(rng.integers(1, min(len(dormant), 8) + 1))
    chosen = np.sort(rng.choice(dormant, size=size, replace=False))
    for i in chosen:
        if i == 0 or rng.random() < config.terminal_bias:
            commands[i] = _random_terminal(config, d, rng)
        else:
            commands[i] = _random_operator(config, int(i), rng)
    root = int(chosen[-1])
    hooks = [
        i
        for i in genome.reachable
        if i > root and commands[i, 0] > int(Op.PARAMETER)
    ]
    if hooks:
        i = int(hooks[rng.integers(len(hooks))])
        unary = Op(commands[i, 0]) in UNARY_OPS
        slot = 1 if unary else int(rng.integers(1, 3))
        commands[i, slot] = root
    else:
        # Output row is a terminal (root < output): grow it into an operator
        # fed by the branch.
        out = genome.output
        op = config.operator_set[rng.integers(len(config.operator_set))]
        commands[out] = (int(op), root, int(rng.integers(out)))


def mutate(genome: EquationGenome, config: VariationConfig, d: int, rng) -> EquationGenome:
    """Apply one mutation kind chosen uniformly at random."""
    commands = np.array(genome.commands, dtype=np.int64)
    kind = int(rng.integers(5))
    if kind == 0:
        _point_mutation(commands, config, d, rng)
    elif kind == 1:
        _edge_mutation(commands, config, d, rng)
    elif kind == 2:
        _node_and_edge_mutation(commands, config, d, rng)
    elif kind == 3:
        _prune_mutation(commands, genome, config, d, rng)
    else:
        _branch_mutation(commands, genome, config, d, rng)
    return EquationGenome(commands, output=genome.output)

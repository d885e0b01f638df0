"""The generational loop: variation, fitness evaluation, crowding survival.

Two fitness modes share one loop.  Conventional mode scores each equation
by its multistart-fitted RMSE and applies deterministic crowding; the
evidence mode follows each fit with an SMC run, scores by the normalized
marginal likelihood q(gamma), and applies probabilistic crowding.

Fitness is cached by genome identity (command bytes) for the duration of a
run, so unchanged incumbents and clone offspring reuse one stochastic
fitness realization instead of being re-sampled every generation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .expressions import EquationGenome, evaluate_batch, render
from .fitting import fit_constants
from .inference import FBFConfig, smc_sample
from .selection import (
    FitnessRecord,
    crowding_pairing,
    deterministic_replacement,
    probabilistic_replacement,
)
from .variation import VariationConfig, crossover, mutate, random_genome

MODE_CONVENTIONAL = "conventional"
MODE_BAYESIAN = "bayesian"


@dataclass(frozen=True)
class EvolutionConfig:
    """All hyperparameters of one evolution run."""

    population_size: int = 60
    generations: int = 200
    mode: str = MODE_BAYESIAN
    variation: VariationConfig = field(default_factory=VariationConfig)
    fbf: FBFConfig = field(default_factory=FBFConfig)
    seed: int = 0
    fit_starts: int = 4
    workers: int = 1

    def __post_init__(self):
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError("population_size must be even and >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.mode not in (MODE_CONVENTIONAL, MODE_BAYESIAN):
            raise ValueError(f"mode must be '{MODE_CONVENTIONAL}' or '{MODE_BAYESIAN}'")
        if self.fit_starts < 1:
            raise ValueError("fit_starts must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class GenerationLog:
    """Per-generation trajectory record (serialized as one JSONL object)."""

    generation: int
    best_train_rmse: float
    best_test_rmse: float | None
    best_q: float | None
    mean_complexity: float
    mean_param_count: float
    best_genome_render: str

    def to_dict(self) -> dict:
        return {
            "generation": self.generation,
            "best_train_rmse": self.best_train_rmse,
            "best_test_rmse": self.best_test_rmse,
            "best_q": self.best_q,
            "mean_complexity": self.mean_complexity,
            "mean_param_count": self.mean_param_count,
            "best_genome_render": self.best_genome_render,
        }


@dataclass
class EvolutionResult:
    """Final population with fitness records plus the generation logs."""

    population: list[EquationGenome]
    records: list[FitnessRecord]
    logs: list[GenerationLog]

    def best_index(self, mode: str) -> int:
        if mode == MODE_BAYESIAN:
            return max(range(len(self.records)), key=lambda i: (self.records[i].log_q, -i))
        return min(range(len(self.records)), key=lambda i: (self.records[i].rmse, i))


def bloat_metrics(population: list[EquationGenome]) -> tuple[float, float]:
    """(mean complexity, mean parameter count) of a population."""
    comp = [g.complexity for g in population]
    pars = [g.param_count for g in population]
    return float(np.mean(comp)), float(np.mean(pars))


def _evaluate_genome(genome: EquationGenome, train: Dataset, config: EvolutionConfig, rng) -> FitnessRecord:
    starts = config.fbf.multistarts if config.mode == MODE_BAYESIAN else config.fit_starts
    ms = fit_constants(genome, train, starts=starts, rng=rng)
    if not ms.any_converged:
        return FitnessRecord.invalid(genome.complexity)
    best = ms.best_fit
    if config.mode == MODE_CONVENTIONAL:
        return FitnessRecord(
            rmse=best.rmse,
            log_q=math.nan,
            valid=True,
            complexity=genome.complexity,
            theta_star=best.theta_star,
        )
    ensemble, _ = smc_sample(genome, train, ms, config.fbf, rng)
    return FitnessRecord(
        rmse=best.rmse,
        log_q=ensemble.log_q,
        valid=not ensemble.degenerate,
        complexity=genome.complexity,
        theta_star=best.theta_star,
    )


class _FitnessCache:
    """Fitness records keyed by genome identity for one (dataset, config)."""

    def __init__(self, train: Dataset, config: EvolutionConfig):
        self.train = train
        self.config = config
        self._records: dict[bytes, FitnessRecord] = {}

    def evaluate_all(self, genomes: list[EquationGenome], rng) -> list[FitnessRecord]:
        fresh: list[EquationGenome] = []
        seen: set[bytes] = set()
        for g in genomes:
            if g.key not in self._records and g.key not in seen:
                fresh.append(g)
                seen.add(g.key)
        # Streams are pre-assigned in deterministic order so results do not
        # depend on worker count or scheduling.
        streams = rng.spawn(len(fresh))
        if self.config.workers > 1 and len(fresh) > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                results = list(
                    pool.map(
                        lambda pair: _evaluate_genome(pair[0], self.train, self.config, pair[1]),
                        zip(fresh, streams),
                    )
                )
        else:
            results = [
                _evaluate_genome(g, self.train, self.config, s) for g, s in zip(fresh, streams)
            ]
        for g, rec in zip(fresh, results):
            self._records[g.key] = rec
        return [self._records[g.key] for g in genomes]


def _test_rmse(genome: EquationGenome, record: FitnessRecord, test: Dataset) -> float:
    if not record.valid:
        return math.inf
    values = evaluate_batch(genome, test.x, record.theta_star[None, :])[0]
    with np.errstate(all="ignore"):
        out = float(np.sqrt(np.mean((values - test.y) ** 2)))
    return out if np.isfinite(out) else math.inf


def _make_log(
    generation: int,
    population: list[EquationGenome],
    records: list[FitnessRecord],
    config: EvolutionConfig,
    test: Dataset | None,
) -> GenerationLog:
    if config.mode == MODE_BAYESIAN:
        best = max(range(len(records)), key=lambda i: (records[i].log_q, -i))
    else:
        best = min(range(len(records)), key=lambda i: (records[i].rmse, i))
    mean_complexity, mean_params = bloat_metrics(population)
    best_rmses = [r.rmse for r in records if r.valid]
    return GenerationLog(
        generation=generation,
        best_train_rmse=min(best_rmses) if best_rmses else math.inf,
        best_test_rmse=None if test is None else _test_rmse(population[best], records[best], test),
        best_q=records[best].q if config.mode == MODE_BAYESIAN else None,
        mean_complexity=mean_complexity,
        mean_param_count=mean_params,
        best_genome_render=render(population[best]),
    )


def evolve(
    config: EvolutionConfig,
    train: Dataset,
    test: Dataset | None = None,
    progress=None,
) -> EvolutionResult:
    """Run the full generational loop and return the final population.

    Each generation the shuffled population is split into pairs; every pair
    produces two children by optional crossover followed by optional
    per-child mutation, and each parent then competes against its
    most-similar child under the mode's replacement rule.  Test data, when
    provided, is strictly observational (logged, never selected on).
    """
    rng = np.random.default_rng(config.seed)
    pop = [random_genome(config.variation, train.d, rng) for _ in range(config.population_size)]
    cache = _FitnessCache(train, config)
    logs: list[GenerationLog] = []
    records = cache.evaluate_all(pop, rng)

    for generation in range(1, config.generations + 1):
        order = rng.permutation(config.population_size)
        children: list[EquationGenome] = []
        for k in range(0, config.population_size, 2):
            pa, pb = pop[order[k]], pop[order[k + 1]]
            if rng.random() < config.variation.crossover_prob:
                ca, cb = crossover(pa, pb, rng)
            else:
                ca, cb = pa, pb
            if rng.random() < config.variation.mutation_prob:
                ca = mutate(ca, config.variation, train.d, rng)
            if rng.random() < config.variation.mutation_prob:
                cb = mutate(cb, config.variation, train.d, rng)
            children.extend((ca, cb))

        child_records = cache.evaluate_all(children, rng)
        next_pop: list[EquationGenome] = []
        next_records: list[FitnessRecord] = []
        for k in range(0, config.population_size, 2):
            ip, jp = order[k], order[k + 1]
            ca, cb = children[k], children[k + 1]
            ia, ib = crowding_pairing((pop[ip], pop[jp]), (ca, cb))
            for parent_idx, child_pos in ((ip, k + ia), (jp, k + ib)):
                pair = (records[parent_idx], child_records[child_pos])
                if config.mode == MODE_BAYESIAN:
                    winner = probabilistic_replacement(pair, rng)
                else:
                    winner = deterministic_replacement(pair)
                if winner == 0:
                    next_pop.append(pop[parent_idx])
                    next_records.append(records[parent_idx])
                else:
                    next_pop.append(children[child_pos])
                    next_records.append(child_records[child_pos])
        pop, records = next_pop, next_records
        logs.append(_make_log(generation, pop, records, config, test))
        if progress is not None:
            progress(logs[-1])

    return EvolutionResult(population=pop, records=records, logs=logs)

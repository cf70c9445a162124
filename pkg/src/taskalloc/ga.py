"""Genetic algorithm over allocation chromosomes.

Each chromosome is an integer vector mapping task positions to analyst
positions.  One generation = rank-based parent selection, single-point
crossover to refill the non-elite slots, adaptive per-gene mutation, with the
top solutions carried over unchanged.  All randomness flows through a single
per-run generator consumed in a fixed order, so runs are reproducible even
when fitness evaluation is spread over worker threads (per-chromosome scores
never interact).

Tournament selection and scramble mutation exist only as config switches for
ablation experiments; they are deliberately not tuned.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, IO, Sequence

import numpy as np

from .model import Allocation, Scenario
from .objectives import ObjectiveSpec, PopulationEvaluator


class SetupError(ValueError):
    """The optimisation problem is malformed (e.g. an unassignable task)."""


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 500
    generations: int = 50
    parents_mating: int = 50
    elitism: int = 10
    # Per-gene resample probabilities: high for below-average solutions,
    # low for the rest.
    mutation_high: float = 0.9
    mutation_low: float = 0.05
    selection: str = "steady_state"      # or "tournament" (ablation)
    mutation: str = "adaptive"           # or "scramble" (ablation)
    crossover: str = "single_point"
    tournament_k: int = 3
    seed: int | None = None
    # Stop after this many generations when set (cheaper, slightly worse).
    early_stop_generation: int | None = None
    workers: int = 0                     # >1 enables threaded evaluation

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if not 0 <= self.elitism < self.population_size:
            raise ValueError("elitism must lie in [0, population_size)")
        if not 1 <= self.parents_mating <= self.population_size:
            raise ValueError("parents_mating must lie in [1, population_size]")
        for rate in (self.mutation_high, self.mutation_low):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("mutation rates must lie in [0, 1]")
        if self.mutation_high < self.mutation_low:
            raise ValueError("mutation_high must be >= mutation_low")
        if self.selection not in ("steady_state", "tournament"):
            raise ValueError(f"unknown selection {self.selection!r}")
        if self.mutation not in ("adaptive", "scramble"):
            raise ValueError(f"unknown mutation {self.mutation!r}")

    @property
    def crossover_fraction(self) -> float:
        return (self.population_size - self.elitism) / self.population_size

    @property
    def effective_generations(self) -> int:
        if self.early_stop_generation is None:
            return self.generations
        return min(self.generations, self.early_stop_generation)

    def scaled_for(self, n_tasks: int, base_tasks: int = 65) -> "GAConfig":
        """Grow population, parents and elitism linearly with task count."""
        factor = max(1.0, n_tasks / base_tasks)
        return replace(
            self,
            population_size=math.ceil(self.population_size * factor),
            parents_mating=math.ceil(self.parents_mating * factor),
            elitism=math.ceil(self.elitism * factor),
        )


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    tasks_switched: int
    # Fraction of offspring mutated at the high rate while creating this
    # generation (0 for the random initial population).
    high_rate_fraction: float = 0.0


@dataclass
class EvolutionResult:
    best: Allocation
    best_fitness: float
    stats: list[GenerationStats]
    evaluations: int
    converged: bool


def write_stats_csv(stats: Sequence[GenerationStats], out: IO[str]) -> None:
    writer = csv.writer(out)
    writer.writerow(["generation", "best", "mean", "tasks_switched"])
    for row in stats:
        writer.writerow(
            [row.generation, row.best_fitness, row.mean_fitness, row.tasks_switched]
        )


def executable_analysts(scenario: Scenario) -> list[np.ndarray]:
    """Per task, the analyst positions allowed to hold it (the pin when
    pinned, otherwise everyone with positive efficiency for the type)."""
    choices = []
    for task in scenario.tasks:
        capable = np.array(
            [
                pos
                for pos, analyst in enumerate(scenario.analysts)
                if analyst.efficiency.get(task.type_id, 0.0) > 0.0
            ],
            dtype=np.int64,
        )
        if capable.size == 0:
            raise SetupError(f"task {task.task_id}: no analyst can execute type {task.type_id}")
        if task.pinned_to is not None:
            pin_pos = scenario.analyst_position(task.pinned_to)
            if pin_pos not in capable:
                raise SetupError(
                    f"task {task.task_id}: pinned to analyst {task.pinned_to} "
                    "who cannot execute it"
                )
            capable = np.array([pin_pos], dtype=np.int64)
        choices.append(capable)
    return choices


def init_population(
    scenario: Scenario, config: GAConfig, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Random population matrix (one chromosome per row); pinned genes fixed,
    unpinned genes uniform over the task's executable analysts."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    choices = executable_analysts(scenario)
    return _random_population(choices, config.population_size, rng)


def _random_population(
    choices: list[np.ndarray], size: int, rng: np.random.Generator
) -> np.ndarray:
    population = np.empty((size, len(choices)), dtype=np.int64)
    for col, capable in enumerate(choices):
        if capable.size == 1:
            population[:, col] = capable[0]
        else:
            population[:, col] = capable[rng.integers(0, capable.size, size=size)]
    return population


def select_parents(
    population: np.ndarray,
    fitnesses: np.ndarray,
    config: GAConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Indices of the chosen parents, best first.

    Steady-state selection is rank truncation: the `parents_mating` fittest
    solutions, ties resolved toward the lower index.  Tournament selection
    draws each parent as the best of `tournament_k` random contenders.
    """
    fitnesses = np.asarray(fitnesses, dtype=np.float64)
    if config.selection == "steady_state":
        order = np.lexsort((np.arange(len(fitnesses)), -fitnesses))
        return order[: config.parents_mating]
    if rng is None:
        rng = np.random.default_rng(config.seed)
    contenders = rng.integers(
        0, len(fitnesses), size=(config.parents_mating, config.tournament_k)
    )
    winners = contenders[
        np.arange(config.parents_mating), np.argmax(fitnesses[contenders], axis=1)
    ]
    return winners


def crossover_single_point(
    parent_a: np.ndarray,
    parent_b: np.ndarray,
    cut: int | None = None,
    rng: np.random.Generator | None = None,
    pinned: dict[int, int] | None = None,
) -> np.ndarray:
    """Head of one parent glued to the tail of the other.

    The cut falls strictly inside the chromosome; length-one parents have no
    interior, so the offspring is a copy of the first parent.
    """
    parent_a = np.asarray(parent_a)
    parent_b = np.asarray(parent_b)
    if parent_a.shape != parent_b.shape:
        raise ValueError(
            f"parent length mismatch: {parent_a.shape} vs {parent_b.shape}"
        )
    n = parent_a.shape[0]
    if n < 2:
        child = parent_a.copy()
    else:
        if cut is None:
            if rng is None:
                rng = np.random.default_rng()
            cut = int(rng.integers(1, n))
        if not 1 <= cut <= n - 1:
            raise ValueError(f"cut {cut} outside [1, {n - 1}]")
        child = np.concatenate([parent_a[:cut], parent_b[cut:]])
    if pinned:
        for col, value in pinned.items():
            child[col] = value
    return child


def mutate_adaptive(
    chromosome: np.ndarray,
    fitness: float,
    population_mean_fitness: float,
    scenario: Scenario,
    config: GAConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Independently resample genes at the high rate for below-average
    solutions and the low rate otherwise; pinned genes never move."""
    rate = (
        config.mutation_high
        if fitness < population_mean_fitness
        else config.mutation_low
    )
    choices = executable_analysts(scenario)
    mutated = np.asarray(chromosome).copy()
    for col, capable in enumerate(choices):
        if scenario.tasks[col].pinned_to is not None:
            continue
        if rng.random() < rate:
            mutated[col] = capable[rng.integers(0, capable.size)]
    return mutated


def allocation_diff(a: Allocation | Sequence[int], b: Allocation | Sequence[int]) -> int:
    """Number of tasks assigned to different analysts in the two allocations."""
    genes_a = np.asarray(a.genes if isinstance(a, Allocation) else a)
    genes_b = np.asarray(b.genes if isinstance(b, Allocation) else b)
    if genes_a.shape != genes_b.shape:
        raise ValueError(f"length mismatch: {genes_a.shape} vs {genes_b.shape}")
    return int(np.count_nonzero(genes_a != genes_b))


def _choice_table(choices: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Pad per-task choice arrays into one matrix for vectorised sampling."""
    widths = np.array([c.size for c in choices], dtype=np.int64)
    table = np.zeros((len(choices), int(widths.max())), dtype=np.int64)
    for col, capable in enumerate(choices):
        table[col, : capable.size] = capable
    return table, widths


def evolve(
    scenario: Scenario,
    spec: ObjectiveSpec,
    config: GAConfig,
    incumbent: Allocation | None = None,
    on_generation: Callable[[GenerationStats], None] | None = None,
) -> EvolutionResult:
    """Run the GA and return the best allocation ever evaluated.

    Exactly ``population_size`` fitness evaluations are spent per generation.
    When ``incumbent`` is given it replaces one random member of the initial
    population, which (with elitism) guarantees the result never scores below
    it.  ``converged`` is False when even the best solution scored zero.
    """
    rng = np.random.default_rng(config.seed)
    choices = executable_analysts(scenario)
    n = scenario.n_tasks
    j = config.population_size
    population = _random_population(choices, j, rng)

    pinned_cols = np.array(
        [pos for pos, t in enumerate(scenario.tasks) if t.pinned_to is not None],
        dtype=np.int64,
    )
    pinned_vals = np.array(
        [
            scenario.analyst_position(scenario.tasks[pos].pinned_to)
            for pos in pinned_cols
        ],
        dtype=np.int64,
    )
    if incumbent is not None:
        genes = np.asarray(incumbent.genes, dtype=np.int64)
        if genes.shape[0] != n:
            raise SetupError("incumbent allocation length does not match scenario")
        population[int(rng.integers(0, j))] = genes

    evaluator = PopulationEvaluator(scenario, spec)
    choice_table, choice_widths = _choice_table(choices)
    unpinned_mask = np.ones(n, dtype=bool)
    if pinned_cols.size:
        unpinned_mask[pinned_cols] = False

    def evaluate(pop: np.ndarray) -> np.ndarray:
        if config.workers and config.workers > 1 and pop.shape[0] >= config.workers:
            chunks = np.array_split(np.arange(pop.shape[0]), config.workers)
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                parts = list(pool.map(lambda idx: evaluator.fitness(pop[idx]), chunks))
            return np.concatenate(parts)
        return evaluator.fitness(pop)

    stats: list[GenerationStats] = []
    best_genes: np.ndarray | None = None
    best_fitness = -np.inf
    previous_best: np.ndarray | None = None
    high_fraction = 0.0
    total_generations = config.effective_generations

    for generation in range(total_generations):
        fitnesses = evaluate(population)
        best_idx = int(np.argmax(fitnesses))
        generation_best = float(fitnesses[best_idx])
        mean_fitness = float(fitnesses.mean())
        if generation_best > best_fitness:
            best_fitness = generation_best
            best_genes = population[best_idx].copy()

        current_best = population[best_idx]
        switched = (
            0 if previous_best is None else allocation_diff(previous_best, current_best)
        )
        previous_best = current_best.copy()
        entry = GenerationStats(
            generation=generation,
            best_fitness=generation_best,
            mean_fitness=mean_fitness,
            tasks_switched=switched,
            high_rate_fraction=high_fraction,
        )
        stats.append(entry)
        if on_generation is not None:
            on_generation(entry)
        if generation == total_generations - 1:
            break

        # --- next generation ---------------------------------------------
        elite_order = np.lexsort((np.arange(j), -fitnesses))
        elites = population[elite_order[: config.elitism]].copy()
        parent_idx = select_parents(population, fitnesses, config, rng)

        pool_a = parent_idx[0::2]
        pool_b = np.concatenate([parent_idx[1::2], parent_idx[:1]])[: pool_a.size]
        n_offspring = j - config.elitism
        pair_of = np.arange(n_offspring) % pool_a.size
        idx_a = pool_a[pair_of]
        idx_b = pool_b[pair_of]
        parents_a = population[idx_a]
        parents_b = population[idx_b]
        if n >= 2:
            cuts = rng.integers(1, n, size=n_offspring)
            take_head = np.arange(n)[None, :] < cuts[:, None]
            offspring = np.where(take_head, parents_a, parents_b)
        else:
            offspring = parents_a.copy()
        if pinned_cols.size:
            offspring[:, pinned_cols] = pinned_vals

        if config.mutation == "adaptive":
            estimate = 0.5 * (fitnesses[idx_a] + fitnesses[idx_b])
            below = estimate < mean_fitness
            rates = np.where(below, config.mutation_high, config.mutation_low)
            high_fraction = float(below.mean())
            mutate_mask = rng.random((n_offspring, n)) < rates[:, None]
            mutate_mask &= unpinned_mask[None, :]
            draws = rng.random((n_offspring, n))
            sampled_idx = (draws * choice_widths[None, :]).astype(np.int64)
            resampled = choice_table[np.arange(n)[None, :], sampled_idx]
            offspring = np.where(mutate_mask, resampled, offspring)
        else:  # scramble: permute a random slice, keeping per-analyst counts
            high_fraction = 0.0
            bounds = rng.integers(0, n, size=(n_offspring, 2))
            for row in range(n_offspring):
                lo, hi = sorted(bounds[row])
                positions = np.where(unpinned_mask[lo : hi + 1])[0] + lo
                if positions.size > 1:
                    offspring[row, positions] = offspring[
                        row, rng.permutation(positions)
                    ]

        population = np.vstack([elites, offspring])

    assert best_genes is not None
    return EvolutionResult(
        best=Allocation(genes=tuple(int(g) for g in best_genes)),
        best_fitness=best_fitness,
        stats=stats,
        evaluations=evaluator.evaluations,
        converged=best_fitness > 0.0,
    )

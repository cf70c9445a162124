"""Reference allocators the GA is judged against.

`greedy_allocate` and `hill_climb` are the classic baseline pair; the two
`manager_*` strategies mimic how allocation is done by hand today (pack the
most efficient analyst first, or deal tasks out evenly).  All of them honour
pinned tasks so comparisons against the GA stay like-for-like, and all count
their utility-function evaluations against an explicit budget so the
comparison can be evaluation-matched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ga import SetupError
from .model import Allocation, Scenario
from .objectives import (
    ObjectiveSpec,
    PopulationEvaluator,
    analyst_utility,
    expected_execution_time,
)


@dataclass
class BaselineBudget:
    """Utility-evaluation allowance shared by a baseline pipeline."""

    max_utility_evaluations: int
    used: int = 0

    def __post_init__(self):
        if self.max_utility_evaluations <= 0:
            raise ValueError("max_utility_evaluations must be positive")

    @property
    def remaining(self) -> int:
        return self.max_utility_evaluations - self.used

    def spend(self, count: int = 1) -> None:
        self.used += count


def greedy_allocate(
    scenario: Scenario, spec: ObjectiveSpec, budget: BaselineBudget | None = None
) -> Allocation:
    """Assign tasks one at a time to whichever analyst maximises the global
    utility of the partial allocation.

    Tasks are visited most urgent first (input order inside a priority);
    pinned tasks are placed first and simply count as context.  Ties go to
    the lower analyst index.
    """
    n, m = scenario.n_tasks, scenario.n_analysts
    types = scenario.types_by_id()
    penalize_empty = scenario.low_workload
    genes = np.full(n, -1, dtype=np.int64)
    assigned: list[list] = [[] for _ in range(m)]

    for pos, task in enumerate(scenario.tasks):
        if task.pinned_to is not None:
            a = scenario.analyst_position(task.pinned_to)
            genes[pos] = a
            assigned[a].append(task)

    utilities = np.array(
        [
            analyst_utility(assigned[a], scenario.analysts[a], spec, types,
                            penalize_empty=penalize_empty)
            for a in range(m)
        ]
    )

    order = sorted(
        (pos for pos in range(n) if genes[pos] < 0),
        key=lambda pos: (scenario.tasks[pos].priority, pos),
    )
    for pos in order:
        task = scenario.tasks[pos]
        best_analyst = -1
        best_global = -1.0
        best_utility = 0.0
        for a in range(m):
            analyst = scenario.analysts[a]
            if analyst.efficiency.get(task.type_id, 0.0) <= 0.0:
                continue
            candidate_utility = analyst_utility(
                assigned[a] + [task], analyst, spec, types, penalize_empty=penalize_empty
            )
            others = np.prod(np.delete(utilities, a)) if m > 1 else 1.0
            candidate_global = others * candidate_utility
            if budget is not None:
                budget.spend(1)
            if candidate_global > best_global:
                best_global = candidate_global
                best_analyst = a
                best_utility = candidate_utility
        if best_analyst < 0:
            raise SetupError(
                f"task {task.task_id}: no analyst can execute type {task.type_id}"
            )
        genes[pos] = best_analyst
        assigned[best_analyst].append(task)
        utilities[best_analyst] = best_utility

    return Allocation(genes=tuple(int(g) for g in genes))


def hill_climb(
    start: Allocation,
    scenario: Scenario,
    spec: ObjectiveSpec,
    budget: BaselineBudget,
    seed: int | None = None,
) -> Allocation:
    """Random-swap local search: propose exchanging the analysts of two
    uniformly drawn tasks, keep the swap only when the global utility
    strictly improves, stop when the evaluation budget runs out."""
    rng = np.random.default_rng(seed)
    evaluator = PopulationEvaluator(scenario, spec)
    swappable = np.array(
        [pos for pos, t in enumerate(scenario.tasks) if t.pinned_to is None],
        dtype=np.int64,
    )
    if swappable.size < 2 or budget.remaining < 2:
        return start

    current = np.asarray(start.genes, dtype=np.int64).copy()
    current_fit = evaluator.fitness_one(Allocation(genes=tuple(current)))
    budget.spend(1)

    while budget.remaining >= 1:
        i, j = swappable[rng.choice(swappable.size, size=2, replace=False)]
        if current[i] == current[j]:
            budget.spend(1)  # a null proposal still spends its evaluation
            continue
        candidate = current.copy()
        candidate[i], candidate[j] = candidate[j], candidate[i]
        candidate_fit = float(evaluator.fitness(candidate[None, :])[0])
        budget.spend(1)
        if candidate_fit > current_fit:
            current = candidate
            current_fit = candidate_fit

    return Allocation(genes=tuple(int(g) for g in current))


def manager_efficiency(scenario: Scenario) -> Allocation:
    """Simulated manager strategy 1: most urgent tasks first, each to the
    historically fastest analyst for its type who still has room; once
    everyone would be over their availability, fall back to the least-loaded
    analyst."""
    n, m = scenario.n_tasks, scenario.n_analysts
    types = scenario.types_by_id()
    genes = np.full(n, -1, dtype=np.int64)
    load = np.zeros(m, dtype=np.float64)

    for pos, task in enumerate(scenario.tasks):
        if task.pinned_to is not None:
            a = scenario.analyst_position(task.pinned_to)
            genes[pos] = a
            load[a] += expected_execution_time(task, scenario.analysts[a], types)

    order = sorted(
        (pos for pos in range(n) if genes[pos] < 0),
        key=lambda pos: (scenario.tasks[pos].priority, pos),
    )
    for pos in order:
        task = scenario.tasks[pos]
        ranked = sorted(
            (
                a
                for a in range(m)
                if scenario.analysts[a].efficiency.get(task.type_id, 0.0) > 0.0
            ),
            key=lambda a: (-scenario.analysts[a].efficiency[task.type_id], a),
        )
        if not ranked:
            raise SetupError(
                f"task {task.task_id}: no analyst can execute type {task.type_id}"
            )
        chosen = -1
        for a in ranked:
            cost = expected_execution_time(task, scenario.analysts[a], types)
            if load[a] + cost <= scenario.analysts[a].availability:
                chosen = a
                break
        if chosen < 0:  # everyone over-burdened: least total load wins
            chosen = min(ranked, key=lambda a: (load[a], a))
        genes[pos] = chosen
        load[chosen] += expected_execution_time(task, scenario.analysts[chosen], types)

    return Allocation(genes=tuple(int(g) for g in genes))


def manager_balanced(scenario: Scenario, seed: int | None = None) -> Allocation:
    """Simulated manager strategy 2: shuffle the tasks and deal them out so
    task counts stay as even as possible, ignoring durations and skills."""
    rng = np.random.default_rng(seed)
    n, m = scenario.n_tasks, scenario.n_analysts
    genes = np.full(n, -1, dtype=np.int64)
    counts = np.zeros(m, dtype=np.int64)

    for pos, task in enumerate(scenario.tasks):
        if task.pinned_to is not None:
            a = scenario.analyst_position(task.pinned_to)
            genes[pos] = a
            counts[a] += 1

    unpinned = [pos for pos in range(n) if genes[pos] < 0]
    for pos in rng.permutation(len(unpinned)):
        task_pos = unpinned[int(pos)]
        task = scenario.tasks[task_pos]
        capable = [
            a
            for a in range(m)
            if scenario.analysts[a].efficiency.get(task.type_id, 0.0) > 0.0
        ]
        if not capable:
            raise SetupError(
                f"task {task.task_id}: no analyst can execute type {task.type_id}"
            )
        chosen = min(capable, key=lambda a: (counts[a], a))
        genes[task_pos] = chosen
        counts[chosen] += 1

    return Allocation(genes=tuple(int(g) for g in genes))

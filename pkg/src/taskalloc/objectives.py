"""Utility functions scored over an allocation: completion probability,
precision, preference, their per-analyst combinations and the global Nash
product.

Everything here is pure.  The scalar functions define the contract; the
`PopulationEvaluator` evaluates whole chromosome batches with numpy and is
required (and property-tested) to agree with the scalar path, so optimisers
can use it without a second source of truth.

Completion is modelled per analyst: tasks run in priority order, total
execution time per priority block is normal with summed means and variances,
and the probability of clearing everything up to priority k multiplies into
a utility that discounts lower priorities by a 1/k exponent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .model import (
    Allocation,
    Analyst,
    InfeasibleAssignmentError,
    PerAnalystUtility,
    Scenario,
    Task,
    TaskTypeSpec,
    UtilityBreakdown,
)


class ObjectiveMode(str, enum.Enum):
    """Which utility components multiply into an analyst's score."""

    COMPLETION_ONLY = "completion_only"
    COMPLETION_PREFERENCE = "completion_preference"
    COMPLETION_PREFERENCE_PRECISION = "completion_preference_precision"
    COMPLETION_PRECISION = "completion_precision"

    @property
    def uses_preference(self) -> bool:
        return self in (
            ObjectiveMode.COMPLETION_PREFERENCE,
            ObjectiveMode.COMPLETION_PREFERENCE_PRECISION,
        )

    @property
    def uses_precision(self) -> bool:
        return self in (
            ObjectiveMode.COMPLETION_PRECISION,
            ObjectiveMode.COMPLETION_PREFERENCE_PRECISION,
        )


@dataclass(frozen=True)
class ObjectiveSpec:
    mode: ObjectiveMode = ObjectiveMode.COMPLETION_PREFERENCE_PRECISION
    # Score given to an analyst left without tasks when the scenario is
    # flagged low-workload; must be small enough to dominate any real score.
    empty_allocation_penalty: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.empty_allocation_penalty <= 0.01:
            raise ValueError(
                f"empty_allocation_penalty {self.empty_allocation_penalty} "
                "must lie in (0, 0.01]"
            )


def normal_cdf(x: float, mean: float, variance: float) -> float:
    """P(X <= x) for X ~ Normal(mean, variance).

    Zero variance degenerates to a step: 0 below the mean, 1 at or above it.
    """
    if variance < 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    if variance == 0:
        return 1.0 if x >= mean else 0.0
    z = (x - mean) / math.sqrt(variance)
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def expected_execution_time(
    task: Task, analyst: Analyst, types: Mapping[int, TaskTypeSpec]
) -> float:
    """Remaining expected seconds for this analyst to finish the task.

    Mean type duration scaled by complexity, divided by the analyst's
    efficiency for the type, and discounted by completed progress.
    """
    efficiency = analyst.efficiency.get(task.type_id, 0.0)
    if efficiency <= 0.0:
        raise InfeasibleAssignmentError(
            f"analyst {analyst.analyst_id} cannot execute task {task.task_id} "
            f"(type {task.type_id})"
        )
    spec = types[task.type_id]
    return spec.mean_duration * task.complexity * (1.0 - task.progress) / efficiency


def remaining_variance(task: Task, types: Mapping[int, TaskTypeSpec]) -> float:
    """Execution-time variance left on a task.

    Variance is a property of the task type, independent of who executes it;
    progress shrinks it proportionally, like the mean.
    """
    return types[task.type_id].duration_variance * (1.0 - task.progress)


def _cumulative_moments(
    tasks: Iterable[Task],
    analyst: Analyst,
    types: Mapping[int, TaskTypeSpec],
    up_to_priority: int,
) -> tuple[list[float], list[float]]:
    """Per-priority cumulative (mean, variance) of total execution time."""
    mean_by_priority = [0.0] * up_to_priority
    var_by_priority = [0.0] * up_to_priority
    for task in tasks:
        idx = task.priority - 1
        mean_by_priority[idx] += expected_execution_time(task, analyst, types)
        var_by_priority[idx] += remaining_variance(task, types)
    cum_mean, cum_var = [], []
    mean_total = var_total = 0.0
    for idx in range(up_to_priority):
        mean_total += mean_by_priority[idx]
        var_total += var_by_priority[idx]
        cum_mean.append(mean_total)
        cum_var.append(var_total)
    return cum_mean, cum_var


def priority_completion_probabilities(
    tasks: Sequence[Task],
    analyst: Analyst,
    types: Mapping[int, TaskTypeSpec],
) -> dict[int, float]:
    """For each priority present, P(all tasks of that and higher urgency done
    within the analyst's availability)."""
    present = sorted({t.priority for t in tasks})
    if not present:
        return {}
    cum_mean, cum_var = _cumulative_moments(tasks, analyst, types, present[-1])
    return {
        priority: normal_cdf(analyst.availability, cum_mean[priority - 1], cum_var[priority - 1])
        for priority in present
    }


def priority_weighted_product(cumulative_probs: Sequence[float]) -> float:
    """Combine cumulative completion probabilities into one utility.

    ``cumulative_probs[k]`` is P(everything of priority <= k+1 done).  The
    first priority counts with full weight; each conditional step down the
    priority list enters with exponent 1/priority, so risking urgent work
    costs more than risking deferrable work.  A zero probability anywhere in
    the chain zeroes the utility: completing later work conditional on an
    impossible prefix carries no value.
    """
    if not cumulative_probs:
        return 1.0
    utility = cumulative_probs[0]
    for k in range(2, len(cumulative_probs) + 1):
        previous = cumulative_probs[k - 2]
        if previous == 0.0:
            return 0.0
        utility *= (cumulative_probs[k - 1] / previous) ** (1.0 / k)
    return utility


def completion_utility(
    tasks: Sequence[Task],
    analyst: Analyst,
    types: Mapping[int, TaskTypeSpec],
) -> float:
    """Priority-weighted probability of the analyst finishing their set.

    An empty set scores 1.0 (nothing to fail at).
    """
    if not tasks:
        return 1.0
    highest = max(t.priority for t in tasks)
    cum_mean, cum_var = _cumulative_moments(tasks, analyst, types, highest)
    probs = [
        normal_cdf(analyst.availability, cum_mean[idx], cum_var[idx])
        for idx in range(highest)
    ]
    return priority_weighted_product(probs)


def precision_utility(tasks: Sequence[Task]) -> float:
    """Mean true-positive likelihood of the assigned tasks (Fig-free reward
    proxy); caller guards against empty sets."""
    if not tasks:
        raise ValueError("precision utility undefined for an empty task set")
    return sum(t.precision for t in tasks) / len(tasks)


def preference_utility(
    tasks: Sequence[Task],
    analyst: Analyst,
    *,
    time_weighted: bool = False,
    types: Mapping[int, TaskTypeSpec] | None = None,
) -> float:
    """How much the analyst likes their set, on the normalised (0.1-1.0]
    scale.

    The plain mean feeds the fitness; the time-weighted variant (weights =
    expected execution times, needs ``types``) feeds the fairness metric,
    where a long disliked task should count for more than a quick one.
    """
    if not tasks:
        raise ValueError("preference utility undefined for an empty task set")
    scores = [analyst.preference_norm[t.type_id] for t in tasks]
    if not time_weighted:
        return sum(scores) / len(scores)
    if types is None:
        raise ValueError("time-weighted preference needs the task type table")
    weights = [expected_execution_time(t, analyst, types) for t in tasks]
    total = sum(weights)
    if total == 0.0:
        return sum(scores) / len(scores)
    return sum(w * s for w, s in zip(weights, scores)) / total


def analyst_utility(
    tasks: Sequence[Task],
    analyst: Analyst,
    spec: ObjectiveSpec,
    types: Mapping[int, TaskTypeSpec],
    *,
    penalize_empty: bool = True,
) -> float:
    """Product of the mode's component utilities for one analyst.

    An empty set scores the configured penalty when ``penalize_empty`` (the
    low-workload regime, where leaving someone idle is an unfair allocation
    rather than a necessity) and 1.0 otherwise.
    """
    if not tasks:
        return spec.empty_allocation_penalty if penalize_empty else 1.0
    try:
        utility = completion_utility(tasks, analyst, types)
    except InfeasibleAssignmentError:
        return 0.0
    if spec.mode.uses_precision:
        utility *= precision_utility(tasks)
    if spec.mode.uses_preference:
        utility *= preference_utility(tasks, analyst)
    return utility


def global_utility(
    alloc: Allocation, scenario: Scenario, spec: ObjectiveSpec
) -> UtilityBreakdown:
    """Nash product of per-analyst utilities, with the full component
    breakdown for reporting.

    Analysts holding a task they cannot execute score zero (and so does the
    product), but the allocation stays evaluable.
    """
    types = scenario.types_by_id()
    assigned: list[list[Task]] = [[] for _ in range(scenario.n_analysts)]
    for pos, gene in enumerate(alloc.genes):
        assigned[gene].append(scenario.tasks[pos])

    penalize_empty = scenario.low_workload
    per_analyst = []
    total = 1.0
    for analyst, tasks in zip(scenario.analysts, assigned):
        if not tasks:
            combined = spec.empty_allocation_penalty if penalize_empty else 1.0
            entry = PerAnalystUtility(
                analyst_id=analyst.analyst_id,
                completion=1.0, precision=1.0, preference=1.0, worker=1.0,
                combined=combined,
            )
        else:
            try:
                completion = completion_utility(tasks, analyst, types)
            except InfeasibleAssignmentError:
                completion = 0.0
            precision = precision_utility(tasks)
            preference = preference_utility(tasks, analyst)
            combined = completion
            if spec.mode.uses_precision:
                combined *= precision
            if spec.mode.uses_preference:
                combined *= preference
            entry = PerAnalystUtility(
                analyst_id=analyst.analyst_id,
                completion=completion,
                precision=precision,
                preference=preference,
                worker=precision * preference,
                combined=combined,
            )
        per_analyst.append(entry)
        total *= entry.combined
    return UtilityBreakdown(per_analyst=tuple(per_analyst), global_utility=total)


def fairness_gap(
    alloc: Allocation, scenario: Scenario, *, empty_score: float = 1e-6
) -> float:
    """Spread between the best- and worst-off analyst.

    Each analyst's allocation quality is completion utility times the
    time-weighted preference and time-weighted precision of their set; an
    analyst with nothing to do scores ``empty_score``.
    """
    types = scenario.types_by_id()
    assigned: list[list[Task]] = [[] for _ in range(scenario.n_analysts)]
    for pos, gene in enumerate(alloc.genes):
        assigned[gene].append(scenario.tasks[pos])

    scores = []
    for analyst, tasks in zip(scenario.analysts, assigned):
        if not tasks:
            scores.append(empty_score)
            continue
        try:
            completion = completion_utility(tasks, analyst, types)
            weights = [expected_execution_time(t, analyst, types) for t in tasks]
        except InfeasibleAssignmentError:
            scores.append(0.0)
            continue
        total_time = sum(weights)
        if total_time == 0.0:
            tw_preference = preference_utility(tasks, analyst)
            tw_precision = precision_utility(tasks)
        else:
            tw_preference = (
                sum(w * analyst.preference_norm[t.type_id] for w, t in zip(weights, tasks))
                / total_time
            )
            tw_precision = sum(w * t.precision for w, t in zip(weights, tasks)) / total_time
        scores.append(completion * tw_preference * tw_precision)
    return max(scores) - min(scores)


class PopulationEvaluator:
    """Batch fitness evaluation for chromosome matrices.

    Precomputes per-(task, analyst) execution times and preference scores so
    a population evaluates as a handful of bincount/cumsum passes.  Results
    match the scalar `global_utility` path; each chromosome's score depends
    only on its own row, so any chunked or threaded split over the batch is
    bit-identical to a sequential pass.

    Tracks the number of utility evaluations spent, which the optimisers use
    to enforce comparable budgets.
    """

    def __init__(self, scenario: Scenario, spec: ObjectiveSpec):
        self.scenario = scenario
        self.spec = spec
        types = scenario.types_by_id()
        n, m, p = scenario.n_tasks, scenario.n_analysts, scenario.max_priority
        self.n_tasks, self.n_analysts, self.n_priorities = n, m, p

        exec_time = np.empty((n, m), dtype=np.float64)
        zeta = np.empty((n, m), dtype=np.float64)
        for j, analyst in enumerate(scenario.analysts):
            for i, task in enumerate(scenario.tasks):
                eff = analyst.efficiency.get(task.type_id, 0.0)
                if eff > 0.0:
                    exec_time[i, j] = (
                        types[task.type_id].mean_duration
                        * task.complexity
                        * (1.0 - task.progress)
                        / eff
                    )
                else:
                    exec_time[i, j] = np.inf
                zeta[i, j] = analyst.preference_norm.get(task.type_id, 0.0)

        self.exec_time = exec_time
        self.executable = np.isfinite(exec_time)
        self.zeta = zeta
        self.variance = np.array(
            [remaining_variance(t, types) for t in scenario.tasks], dtype=np.float64
        )
        self.gamma = np.array([t.precision for t in scenario.tasks], dtype=np.float64)
        self.priority_idx = np.array(
            [t.priority - 1 for t in scenario.tasks], dtype=np.int64
        )
        self.availability = np.array(
            [a.availability for a in scenario.analysts], dtype=np.float64
        )
        self.penalize_empty = scenario.low_workload
        self.evaluations = 0

    def fitness(self, population: np.ndarray) -> np.ndarray:
        """Global utility for each row of ``population`` (shape P x n)."""
        population = np.asarray(population, dtype=np.int64)
        if population.ndim == 1:
            population = population[None, :]
        pop_size, n = population.shape
        if n != self.n_tasks:
            raise ValueError(f"chromosome length {n} != task count {self.n_tasks}")
        m, p = self.n_analysts, self.n_priorities
        self.evaluations += pop_size

        cols = np.arange(n)
        exec_vals = self.exec_time[cols[None, :], population]        # (P, n)
        var_vals = np.broadcast_to(self.variance, (pop_size, n))
        analyst_key = np.arange(pop_size)[:, None] * m + population  # (P, n)
        prio_key = (analyst_key * p + self.priority_idx[None, :]).ravel()

        mean_pp = np.bincount(
            prio_key, weights=exec_vals.ravel(), minlength=pop_size * m * p
        ).reshape(pop_size, m, p)
        var_pp = np.bincount(
            prio_key, weights=var_vals.ravel(), minlength=pop_size * m * p
        ).reshape(pop_size, m, p)
        count_pp = np.bincount(prio_key, minlength=pop_size * m * p).reshape(
            pop_size, m, p
        )

        cum_mean = np.cumsum(mean_pp, axis=2)
        cum_var = np.cumsum(var_pp, axis=2)
        tau = self.availability[None, :, None]
        sd = np.sqrt(cum_var)
        with np.errstate(invalid="ignore", divide="ignore"):
            z = (tau - cum_mean) / sd
        probs = ndtr(z)
        degenerate = cum_var == 0.0
        if degenerate.any():
            probs = np.where(degenerate, (tau >= cum_mean).astype(np.float64), probs)

        completion = probs[:, :, 0].copy()
        if p > 1:
            has_task = count_pp > 0
            # Highest priority index actually present per analyst (-1 if none).
            reach = np.where(
                has_task.any(axis=2), p - 1 - np.argmax(has_task[:, :, ::-1], axis=2), -1
            )
            zero_chain = np.zeros((pop_size, m), dtype=bool)
            for k in range(2, p + 1):
                active = reach >= (k - 1)
                den = probs[:, :, k - 2]
                num = probs[:, :, k - 1]
                zero_chain |= active & (den == 0.0)
                with np.errstate(divide="ignore", invalid="ignore"):
                    factor = np.where(
                        active & (den > 0.0), (num / den) ** (1.0 / k), 1.0
                    )
                completion *= factor
            completion[zero_chain] = 0.0

        counts = count_pp.sum(axis=2)
        empty = counts == 0
        safe_counts = np.where(empty, 1, counts)
        combined = completion.copy()
        if self.spec.mode.uses_precision:
            gamma_sum = np.bincount(
                analyst_key.ravel(),
                weights=np.broadcast_to(self.gamma, (pop_size, n)).ravel(),
                minlength=pop_size * m,
            ).reshape(pop_size, m)
            combined *= gamma_sum / safe_counts
        if self.spec.mode.uses_preference:
            zeta_vals = self.zeta[cols[None, :], population]
            zeta_sum = np.bincount(
                analyst_key.ravel(), weights=zeta_vals.ravel(), minlength=pop_size * m
            ).reshape(pop_size, m)
            combined *= zeta_sum / safe_counts

        empty_value = self.spec.empty_allocation_penalty if self.penalize_empty else 1.0
        combined = np.where(empty, empty_value, combined)
        return np.prod(combined, axis=1)

    def fitness_one(self, alloc: Allocation) -> float:
        return float(self.fitness(np.asarray(alloc.genes, dtype=np.int64)[None, :])[0])

"""Simulated scenario generation and pre-optimisation screening.

Generated scenarios follow the operating profile observed in production NAV
error-resolution queues: five task types with fixed duration statistics, a
small efficiency spread between analysts, a task list expected to slightly
exceed total availability ("difficult but achievable"), and a few tasks
carried over from the previous day with partial progress.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    Analyst,
    Scenario,
    ScenarioValidationError,
    Task,
    TaskTypeSpec,
    normalize_preferences,
    validate_scenario,
)
from .objectives import expected_execution_time


class GenerationError(ValueError):
    """The generator cannot satisfy the requested configuration."""


#: Duration statistics (seconds, seconds^2) and occurrence weight per type.
STANDARD_TYPE_TABLE: tuple[TaskTypeSpec, ...] = (
    TaskTypeSpec(type_id=1, mean_duration=1800, duration_variance=90_000, relative_frequency=1.0),
    TaskTypeSpec(type_id=2, mean_duration=3600, duration_variance=810_000, relative_frequency=0.75),
    TaskTypeSpec(type_id=3, mean_duration=7200, duration_variance=1_440_000, relative_frequency=0.5),
    TaskTypeSpec(type_id=4, mean_duration=14400, duration_variance=7_290_000, relative_frequency=0.25),
    TaskTypeSpec(type_id=5, mean_duration=21600, duration_variance=12_960_000, relative_frequency=0.05),
)

FULL_DAY_SECONDS = 8 * 3600


@dataclass(frozen=True)
class GeneratorConfig:
    n_tasks: int
    n_analysts: int
    seed: int | None = None
    type_table: tuple[TaskTypeSpec, ...] = STANDARD_TYPE_TABLE
    efficiency_jitter: tuple[float, float] = (0.9, 1.1)
    preallocate_fraction: float = 0.05
    target_burden: tuple[float, float] = (1.01, 1.10)
    availability: float = FULL_DAY_SECONDS
    max_priority: int = 3

    def __post_init__(self):
        if self.n_tasks < 1 or self.n_analysts < 1:
            raise GenerationError("need at least one task and one analyst")
        if not 0.0 <= self.preallocate_fraction < 1.0:
            raise GenerationError("preallocate_fraction must lie in [0, 1)")
        lo, hi = self.efficiency_jitter
        if not 0.0 < lo <= hi:
            raise GenerationError("efficiency_jitter bounds must be positive and ordered")
        lo, hi = self.target_burden
        if not 0.0 < lo <= hi:
            raise GenerationError("target_burden bounds must be positive and ordered")


def generate_scenario(config: GeneratorConfig) -> Scenario:
    """Draw a random but realistic scenario, deterministic under the seed.

    Types are sampled proportionally to their relative frequency, complexity
    is left at 1 (unknown), precision is uniform, priorities are uniform over
    the configured range.  Analyst efficiencies jitter around 1 per type and
    preferences are uniform Likert answers normalised per analyst.  A
    rounded-up 5% of tasks arrive pre-allocated with partial progress, and
    every availability is rescaled so the burden ratio lands inside the
    target band.
    """
    rng = np.random.default_rng(config.seed)
    table = config.type_table
    weights = np.array([t.relative_frequency for t in table], dtype=np.float64)
    if weights.sum() <= 0:
        raise GenerationError("type table has no positive relative frequency")

    n, m = config.n_tasks, config.n_analysts
    type_rows = rng.choice(len(table), size=n, p=weights / weights.sum())
    precisions = rng.uniform(0.0, 1.0, size=n)
    priorities = rng.integers(1, config.max_priority + 1, size=n)

    efficiencies = rng.uniform(*config.efficiency_jitter, size=(m, len(table)))
    likert = rng.integers(1, 6, size=(m, len(table)))

    n_pinned = math.ceil(config.preallocate_fraction * n) if config.preallocate_fraction else 0
    pinned_positions = (
        set(rng.choice(n, size=n_pinned, replace=False).tolist()) if n_pinned else set()
    )
    pinned_analyst = {pos: int(rng.integers(0, m)) for pos in sorted(pinned_positions)}
    pinned_progress = {pos: float(rng.uniform(0.0, 0.9)) for pos in sorted(pinned_positions)}

    analysts = tuple(
        Analyst(
            analyst_id=a,
            efficiency={table[k].type_id: float(efficiencies[a, k]) for k in range(len(table))},
            availability=config.availability,
            preference_raw={table[k].type_id: int(likert[a, k]) for k in range(len(table))},
            preference_norm=normalize_preferences(
                {table[k].type_id: int(likert[a, k]) for k in range(len(table))}
            ),
        )
        for a in range(m)
    )

    tasks = []
    for pos in range(n):
        spec = table[type_rows[pos]]
        pinned_to = pinned_analyst.get(pos)
        tasks.append(
            Task(
                task_id=pos,
                type_id=spec.type_id,
                complexity=1.0,
                precision=float(precisions[pos]),
                priority=int(priorities[pos]),
                progress=pinned_progress.get(pos, 0.0),
                pinned_to=pinned_to,
            )
        )

    # Rescale availability so expected remaining work / total availability
    # hits a uniformly drawn point of the target band.  Availabilities are
    # rounded to whole seconds and nudged to stay inside the band.
    types = {t.type_id: t for t in table}
    expected_total = 0.0
    for task in tasks:
        if task.pinned_to is not None:
            expected_total += expected_execution_time(task, analysts[task.pinned_to], types)
        else:
            expected_total += types[task.type_id].mean_duration * task.complexity
    if expected_total <= 0:
        raise GenerationError("total expected duration is zero; burden target unreachable")

    target = rng.uniform(*config.target_burden)
    per_analyst = max(1, round(expected_total / (target * m)))
    lo, hi = config.target_burden
    while expected_total / (m * per_analyst) > hi:
        per_analyst += 1
    while per_analyst > 1 and expected_total / (m * per_analyst) < lo:
        per_analyst -= 1
    ratio = expected_total / (m * per_analyst)
    if not lo <= ratio <= hi:
        raise GenerationError(
            f"cannot hit burden target {config.target_burden} with whole-second "
            f"availabilities (closest ratio {ratio:.4f})"
        )

    analysts = tuple(replace(a, availability=per_analyst) for a in analysts)
    scenario = Scenario(
        tasks=tuple(tasks),
        analysts=analysts,
        type_specs=table,
        max_priority=config.max_priority,
        seed=config.seed,
        low_workload=False,
    )
    findings = validate_scenario(scenario)
    if findings:  # pragma: no cover - generator bug guard
        raise ScenarioValidationError(findings)
    return scenario


def burden_ratio(scenario: Scenario) -> float:
    """Total expected remaining work over total availability.

    Unpinned tasks contribute the workforce-average remaining duration;
    pinned tasks contribute the expected time of the analyst actually
    holding them.
    """
    total_availability = sum(a.availability for a in scenario.analysts)
    if total_availability <= 0:
        raise ValueError("total availability is zero")
    types = scenario.types_by_id()
    total = 0.0
    for task in scenario.tasks:
        if task.pinned_to is not None:
            analyst = scenario.analysts[scenario.analyst_position(task.pinned_to)]
            total += expected_execution_time(task, analyst, types)
        else:
            total += (
                types[task.type_id].mean_duration
                * task.complexity
                * (1.0 - task.progress)
            )
    return total / total_availability


@dataclass(frozen=True)
class ScreeningWarning:
    kind: str            # overload | underload | task_too_long | dropped_tasks
    severity: str        # info | moderate | high
    message: str
    task_ids: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "severity": self.severity,
            "message": self.message,
            "task_ids": list(self.task_ids),
        }


def _remaining_duration(task: Task, types) -> float:
    return types[task.type_id].mean_duration * task.complexity * (1.0 - task.progress)


def screen_scenario(
    scenario: Scenario,
    bounds: tuple[float, float] = (1.01, 1.10),
    auto_drop: bool = False,
) -> tuple[Scenario, list[ScreeningWarning]]:
    """Check workload against availability before optimising.

    Overload above the band produces a warning and, with ``auto_drop``,
    removes the least urgent (then longest) unpinned tasks until the ratio is
    back inside.  Underload flips the scenario into low-workload mode, where
    empty allocations get penalised instead of tolerated.  Tasks that no
    analyst could finish within any availability are flagged individually.
    Pinned tasks are never dropped and surviving tasks keep their order.
    """
    lower, upper = bounds
    warnings: list[ScreeningWarning] = []
    types = scenario.types_by_id()

    for task in scenario.tasks:
        times = []
        for analyst in scenario.analysts:
            if analyst.efficiency.get(task.type_id, 0.0) > 0.0:
                times.append(expected_execution_time(task, analyst, types))
        if not times:
            warnings.append(
                ScreeningWarning(
                    kind="task_infeasible",
                    severity="high",
                    message=f"task {task.task_id}: no analyst can execute type {task.type_id}",
                    task_ids=(task.task_id,),
                )
            )
        elif min(times) > max(a.availability for a in scenario.analysts):
            warnings.append(
                ScreeningWarning(
                    kind="task_too_long",
                    severity="high",
                    message=(
                        f"task {task.task_id}: even the fastest analyst needs "
                        f"{min(times):.0f}s, more than any availability"
                    ),
                    task_ids=(task.task_id,),
                )
            )

    ratio = burden_ratio(scenario)
    tasks = list(scenario.tasks)
    if ratio > upper:
        severity = "high" if ratio > upper + 0.15 else "moderate"
        warnings.append(
            ScreeningWarning(
                kind="overload",
                severity=severity,
                message=(
                    f"expected workload is {ratio:.3f}x total availability "
                    f"(screening band {lower}-{upper})"
                ),
            )
        )
        if auto_drop:
            droppable = sorted(
                (t for t in tasks if t.pinned_to is None),
                key=lambda t: (-t.priority, -_remaining_duration(t, types)),
            )
            dropped: list[int] = []
            total_availability = sum(a.availability for a in scenario.analysts)
            remaining_total = ratio * total_availability
            for candidate in droppable:
                if remaining_total / total_availability <= upper:
                    break
                remaining_total -= _remaining_duration(candidate, types)
                dropped.append(candidate.task_id)
            if dropped:
                kept = [t for t in tasks if t.task_id not in set(dropped)]
                tasks = kept
                warnings.append(
                    ScreeningWarning(
                        kind="dropped_tasks",
                        severity="moderate",
                        message=(
                            f"dropped {len(dropped)} lowest-priority tasks to fit "
                            "the screening band"
                        ),
                        task_ids=tuple(dropped),
                    )
                )

    screened = replace(scenario, tasks=tuple(tasks))
    final_ratio = burden_ratio(screened) if screened.tasks else 0.0
    if final_ratio < 1.0:
        warnings.append(
            ScreeningWarning(
                kind="underload",
                severity="info",
                message=(
                    f"expected workload is only {final_ratio:.3f}x availability; "
                    "empty allocations will be penalised"
                ),
            )
        )
        screened = replace(screened, low_workload=True)
    else:
        screened = replace(screened, low_workload=False)
    return screened, warnings

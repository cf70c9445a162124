"""Domain types for the allocation problem and their JSON wire format.

Tasks, analysts and allocations are immutable value objects.  A chromosome
(`Allocation`) maps task positions to analyst positions, so everything
downstream works on dense 0-based indices; stable ``task_id`` /
``analyst_id`` fields survive screening drops and are what the service and
UI talk about.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable


class ScenarioValidationError(ValueError):
    """Raised when a scenario violates its structural invariants."""

    def __init__(self, findings: list[str]):
        self.findings = findings
        super().__init__("; ".join(findings))


class InfeasibleAssignmentError(ValueError):
    """An analyst with zero efficiency cannot execute a task of that type."""


@dataclass(frozen=True)
class TaskTypeSpec:
    """Statistical profile of one task type.

    ``mean_duration`` and ``duration_variance`` describe the workforce-wide
    completion time of an average-complexity task; ``relative_frequency``
    weights how often the type occurs in simulated scenarios.
    """

    type_id: int
    mean_duration: float          # seconds
    duration_variance: float      # seconds^2
    relative_frequency: float = 1.0


@dataclass(frozen=True)
class Task:
    task_id: int
    type_id: int
    complexity: float = 1.0       # 1 = average, >1 harder, <1 easier
    precision: float = 0.5        # probability the flagged error is real, in [0,1]
    priority: int = 1             # 1 is most urgent
    progress: float = 0.0         # completed fraction, in [0,1)
    pinned_to: int | None = None  # analyst_id this task must stay with


@dataclass(frozen=True)
class Analyst:
    """Worker profile: per-type efficiency, a daily seconds budget and
    task-type preferences (raw 1-5 answers plus their normalised form)."""

    analyst_id: int
    efficiency: dict[int, float]          # type_id -> speed factor, 0 = cannot do
    availability: float                   # seconds available today
    preference_raw: dict[int, int] = field(default_factory=dict)
    preference_norm: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Allocation:
    """A complete assignment: ``genes[t]`` is the analyst position for the
    task at position ``t``.  Totality (each task on exactly one analyst) holds
    by construction."""

    genes: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.genes)


@dataclass(frozen=True)
class PerAnalystUtility:
    analyst_id: int
    completion: float
    precision: float
    preference: float
    worker: float
    combined: float


@dataclass(frozen=True)
class UtilityBreakdown:
    per_analyst: tuple[PerAnalystUtility, ...]
    global_utility: float


@dataclass(frozen=True)
class Scenario:
    tasks: tuple[Task, ...]
    analysts: tuple[Analyst, ...]
    type_specs: tuple[TaskTypeSpec, ...]
    max_priority: int = 3
    seed: int | None = None
    # Set by screening when expected work is below total availability; turns
    # on the heavy penalty for leaving an analyst without any tasks.
    low_workload: bool = False

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def n_analysts(self) -> int:
        return len(self.analysts)

    def types_by_id(self) -> dict[int, TaskTypeSpec]:
        return {spec.type_id: spec for spec in self.type_specs}

    def task_position(self, task_id: int) -> int:
        for pos, task in enumerate(self.tasks):
            if task.task_id == task_id:
                return pos
        raise KeyError(f"unknown task_id {task_id}")

    def analyst_position(self, analyst_id: int) -> int:
        for pos, analyst in enumerate(self.analysts):
            if analyst.analyst_id == analyst_id:
                return pos
        raise KeyError(f"unknown analyst_id {analyst_id}")


def normalize_preferences(raw: dict[int, int]) -> dict[int, float]:
    """Min-max map of one analyst's Likert answers onto [0.1, 1.0].

    Rescaling per analyst corrects for individual optimism or pessimism in
    how the 1-5 scale is used; an analyst who answered the same for every
    type gets 1.0 everywhere (no information, no penalty).  The 0.1 floor
    keeps preference utilities strictly positive.
    """
    if not raw:
        return {}
    lo, hi = min(raw.values()), max(raw.values())
    if hi == lo:
        return {type_id: 1.0 for type_id in raw}
    return {
        type_id: 0.1 + 0.9 * (value - lo) / (hi - lo)
        for type_id, value in raw.items()
    }


def derive_assignment(alloc: Allocation, scenario: Scenario) -> list[set[int]]:
    """Split an allocation into per-analyst sets of task ids.

    The returned list has one set per analyst position; together the sets
    partition the scenario's task ids.
    """
    if len(alloc.genes) != scenario.n_tasks:
        raise ScenarioValidationError(
            [f"allocation has {len(alloc.genes)} genes for {scenario.n_tasks} tasks"]
        )
    sets: list[set[int]] = [set() for _ in range(scenario.n_analysts)]
    for pos, gene in enumerate(alloc.genes):
        if not 0 <= gene < scenario.n_analysts:
            raise ScenarioValidationError(
                [f"task {scenario.tasks[pos].task_id}: analyst index {gene} out of range"]
            )
        sets[gene].add(scenario.tasks[pos].task_id)
    return sets


def validate_allocation(alloc: Allocation, scenario: Scenario) -> list[str]:
    """Findings for gene-range and pin violations; empty list means valid."""
    findings = []
    if len(alloc.genes) != scenario.n_tasks:
        findings.append(
            f"allocation length {len(alloc.genes)} != task count {scenario.n_tasks}"
        )
        return findings
    for pos, gene in enumerate(alloc.genes):
        task = scenario.tasks[pos]
        if not 0 <= gene < scenario.n_analysts:
            findings.append(f"task {task.task_id}: analyst index {gene} out of range")
        elif task.pinned_to is not None:
            if gene != scenario.analyst_position(task.pinned_to):
                findings.append(
                    f"task {task.task_id}: pinned to analyst {task.pinned_to} "
                    f"but assigned position {gene}"
                )
    return findings


def validate_scenario(scenario: Scenario) -> list[str]:
    """Check every structural invariant; returns one finding per violation."""
    findings: list[str] = []
    if scenario.n_tasks < 1:
        findings.append("scenario has no tasks")
    if scenario.n_analysts < 1:
        findings.append("scenario has no analysts")
    if scenario.max_priority < 1:
        findings.append(f"max_priority {scenario.max_priority} must be >= 1")

    types = scenario.types_by_id()
    for spec in scenario.type_specs:
        if spec.mean_duration <= 0:
            findings.append(f"type {spec.type_id}: mean_duration must be positive")
        if spec.duration_variance < 0:
            findings.append(f"type {spec.type_id}: duration_variance must be >= 0")
        if spec.relative_frequency < 0:
            findings.append(f"type {spec.type_id}: relative_frequency must be >= 0")

    seen_task_ids: set[int] = set()
    analyst_ids = {a.analyst_id for a in scenario.analysts}
    for task in scenario.tasks:
        tid = task.task_id
        if tid in seen_task_ids:
            findings.append(f"task {tid}: duplicate task_id")
        seen_task_ids.add(tid)
        if task.type_id not in types:
            findings.append(f"task {tid}: unknown type {task.type_id}")
        if task.complexity <= 0:
            findings.append(f"task {tid}: complexity must be positive")
        if not 0.0 <= task.precision <= 1.0:
            findings.append(f"task {tid}: precision {task.precision} outside [0, 1]")
        if not 1 <= task.priority <= scenario.max_priority:
            findings.append(
                f"task {tid}: priority {task.priority} outside 1..{scenario.max_priority}"
            )
        if not 0.0 <= task.progress < 1.0:
            findings.append(f"task {tid}: progress {task.progress} outside [0, 1)")
        if task.pinned_to is not None and task.pinned_to not in analyst_ids:
            findings.append(f"task {tid}: pinned to unknown analyst {task.pinned_to}")

    seen_analyst_ids: set[int] = set()
    for analyst in scenario.analysts:
        aid = analyst.analyst_id
        if aid in seen_analyst_ids:
            findings.append(f"analyst {aid}: duplicate analyst_id")
        seen_analyst_ids.add(aid)
        if analyst.availability < 0:
            findings.append(f"analyst {aid}: availability must be >= 0")
        for type_id in types:
            if type_id not in analyst.efficiency:
                findings.append(f"analyst {aid}: missing efficiency for type {type_id}")
            elif analyst.efficiency[type_id] < 0:
                findings.append(f"analyst {aid}: efficiency for type {type_id} is negative")
            if type_id not in analyst.preference_norm:
                findings.append(f"analyst {aid}: missing preference for type {type_id}")
            elif not 0.1 <= analyst.preference_norm[type_id] <= 1.0:
                findings.append(
                    f"analyst {aid}: preference for type {type_id} outside [0.1, 1.0]"
                )
    return findings


# --- JSON wire format -------------------------------------------------------
#
# The scenario document is the canonical exchange format used by the CLI,
# the HTTP service and the UI.  Durations are plain numbers of seconds.
# Mapping keys (type ids) are serialised as strings because JSON requires it.


def _int_key_map(data: dict[str, Any]) -> dict[int, Any]:
    return {int(k): v for k, v in data.items()}


def task_to_json(task: Task) -> dict[str, Any]:
    return {
        "task_id": task.task_id,
        "type_id": task.type_id,
        "complexity": task.complexity,
        "precision": task.precision,
        "priority": task.priority,
        "progress": task.progress,
        "pinned_to": task.pinned_to,
    }


def analyst_to_json(analyst: Analyst) -> dict[str, Any]:
    return {
        "analyst_id": analyst.analyst_id,
        "efficiency": {str(k): v for k, v in analyst.efficiency.items()},
        "availability": analyst.availability,
        "preference_raw": {str(k): v for k, v in analyst.preference_raw.items()},
        "preference_norm": {str(k): v for k, v in analyst.preference_norm.items()},
    }


def scenario_to_json(scenario: Scenario) -> dict[str, Any]:
    return {
        "tasks": [task_to_json(t) for t in scenario.tasks],
        "analysts": [analyst_to_json(a) for a in scenario.analysts],
        "type_specs": [
            {
                "type_id": s.type_id,
                "mean_duration": s.mean_duration,
                "duration_variance": s.duration_variance,
                "relative_frequency": s.relative_frequency,
            }
            for s in scenario.type_specs
        ],
        "max_priority": scenario.max_priority,
        "seed": scenario.seed,
        "low_workload": scenario.low_workload,
    }


def scenario_from_json(data: dict[str, Any]) -> Scenario:
    """Parse a scenario document; validates and raises on violations.

    ``preference_norm`` is recomputed from the raw answers when absent so
    files produced by survey exports stay loadable.
    """
    try:
        tasks = tuple(
            Task(
                task_id=t["task_id"],
                type_id=t["type_id"],
                complexity=t.get("complexity", 1.0),
                precision=t.get("precision", 0.5),
                priority=t.get("priority", 1),
                progress=t.get("progress", 0.0),
                pinned_to=t.get("pinned_to"),
            )
            for t in data["tasks"]
        )
        analysts = []
        for a in data["analysts"]:
            raw = _int_key_map(a.get("preference_raw", {}))
            norm = _int_key_map(a.get("preference_norm", {}))
            if not norm and raw:
                norm = normalize_preferences(raw)
            analysts.append(
                Analyst(
                    analyst_id=a["analyst_id"],
                    efficiency=_int_key_map(a["efficiency"]),
                    availability=a["availability"],
                    preference_raw=raw,
                    preference_norm=norm,
                )
            )
        type_specs = tuple(
            TaskTypeSpec(
                type_id=s["type_id"],
                mean_duration=s["mean_duration"],
                duration_variance=s["duration_variance"],
                relative_frequency=s.get("relative_frequency", 1.0),
            )
            for s in data["type_specs"]
        )
        scenario = Scenario(
            tasks=tasks,
            analysts=tuple(analysts),
            type_specs=type_specs,
            max_priority=data.get("max_priority", 3),
            seed=data.get("seed"),
            low_workload=data.get("low_workload", False),
        )
    except (KeyError, TypeError) as exc:
        raise ScenarioValidationError([f"malformed scenario document: {exc}"]) from exc
    findings = validate_scenario(scenario)
    if findings:
        raise ScenarioValidationError(findings)
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    with open(path) as fh:
        return scenario_from_json(json.load(fh))


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_json(scenario), fh, indent=2)
        fh.write("\n")


def breakdown_to_json(breakdown: UtilityBreakdown) -> dict[str, Any]:
    return {
        "global": breakdown.global_utility,
        "per_analyst": [
            {
                "analyst_id": u.analyst_id,
                "completion": u.completion,
                "precision": u.precision,
                "preference": u.preference,
                "worker": u.worker,
                "combined": u.combined,
            }
            for u in breakdown.per_analyst
        ],
    }


def allocation_to_json(
    alloc: Allocation, breakdown: UtilityBreakdown | None = None, run_id: str | None = None
) -> dict[str, Any]:
    doc: dict[str, Any] = {"run_id": run_id, "genes": list(alloc.genes)}
    if breakdown is not None:
        doc["utility"] = breakdown_to_json(breakdown)
    return doc


def with_scenario_tasks(scenario: Scenario, tasks: Iterable[Task]) -> Scenario:
    return replace(scenario, tasks=tuple(tasks))

"""The operational loop around the optimiser: turn an allocation into a
per-analyst schedule, apply a manager's amendments, and re-optimise without
disturbing what the manager pinned down."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Sequence

from .ga import EvolutionResult, GAConfig, evolve
from .model import (
    Allocation,
    Scenario,
    Task,
    validate_allocation,
    validate_scenario,
)
from .objectives import ObjectiveSpec, expected_execution_time


@dataclass(frozen=True)
class ScheduleEntry:
    analyst_id: int
    task_id: int
    start_offset: float      # seconds from shift start
    expected_end: float
    priority: int
    overflow: bool = False   # ends past the analyst's availability

    def to_json(self) -> dict[str, Any]:
        return {
            "analyst_id": self.analyst_id,
            "task_id": self.task_id,
            "start_offset": self.start_offset,
            "expected_end": self.expected_end,
            "priority": self.priority,
            "overflow": self.overflow,
        }


VALID_ACTIONS = ("move_to", "pin", "unpin", "set_progress", "escalate")


@dataclass(frozen=True)
class Amendment:
    """One manager edit: move or pin a task, record progress, or change its
    priority."""

    task_id: int
    action: str
    analyst_id: int | None = None
    progress: float | None = None
    priority: int | None = None

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"task_id": self.task_id, "action": self.action}
        if self.analyst_id is not None:
            doc["analyst_id"] = self.analyst_id
        if self.progress is not None:
            doc["progress"] = self.progress
        if self.priority is not None:
            doc["priority"] = self.priority
        return doc


def amendment_from_json(data: dict[str, Any]) -> Amendment:
    return Amendment(
        task_id=data["task_id"],
        action=data["action"],
        analyst_id=data.get("analyst_id"),
        progress=data.get("progress"),
        priority=data.get("priority"),
    )


class AmendmentRejected(ValueError):
    """One or more amendments are invalid; nothing was applied."""

    def __init__(self, rejections: list[str]):
        self.rejections = rejections
        super().__init__("; ".join(rejections))


def build_schedule(alloc: Allocation, scenario: Scenario) -> list[ScheduleEntry]:
    """Expand an allocation into ordered per-analyst timelines.

    Within an analyst, tasks run most urgent first (task id breaks ties);
    offsets accumulate expected remaining execution times.  Entries that end
    past the analyst's availability carry the overflow flag.
    """
    types = scenario.types_by_id()
    per_analyst: list[list[Task]] = [[] for _ in range(scenario.n_analysts)]
    for pos, gene in enumerate(alloc.genes):
        per_analyst[gene].append(scenario.tasks[pos])

    entries: list[ScheduleEntry] = []
    for analyst, tasks in zip(scenario.analysts, per_analyst):
        clock = 0.0
        for task in sorted(tasks, key=lambda t: (t.priority, t.task_id)):
            duration = expected_execution_time(task, analyst, types)
            end = clock + duration
            entries.append(
                ScheduleEntry(
                    analyst_id=analyst.analyst_id,
                    task_id=task.task_id,
                    start_offset=clock,
                    expected_end=end,
                    priority=task.priority,
                    overflow=end > analyst.availability,
                )
            )
            clock = end
    return entries


def _check_amendment(amendment: Amendment, scenario: Scenario) -> str | None:
    """Reason this amendment must be rejected, or None when it is fine."""
    try:
        pos = scenario.task_position(amendment.task_id)
    except KeyError:
        return f"unknown task {amendment.task_id}"
    task = scenario.tasks[pos]

    if amendment.action not in VALID_ACTIONS:
        return f"task {amendment.task_id}: unknown action {amendment.action!r}"
    if amendment.action in ("move_to", "pin"):
        if amendment.analyst_id is None:
            return f"task {amendment.task_id}: {amendment.action} needs an analyst_id"
        try:
            scenario.analyst_position(amendment.analyst_id)
        except KeyError:
            return f"task {amendment.task_id}: unknown analyst {amendment.analyst_id}"
        analyst = scenario.analysts[scenario.analyst_position(amendment.analyst_id)]
        if analyst.efficiency.get(task.type_id, 0.0) <= 0.0:
            return (
                f"task {amendment.task_id}: analyst {amendment.analyst_id} "
                f"cannot execute type {task.type_id}"
            )
    elif amendment.action == "set_progress":
        if amendment.progress is None or not 0.0 <= amendment.progress < 1.0:
            return (
                f"task {amendment.task_id}: progress must lie in [0, 1), "
                f"got {amendment.progress}"
            )
    elif amendment.action == "escalate":
        if amendment.priority is None or not 1 <= amendment.priority <= scenario.max_priority:
            return (
                f"task {amendment.task_id}: priority must lie in "
                f"1..{scenario.max_priority}, got {amendment.priority}"
            )
    return None


def apply_amendments(
    alloc: Allocation, scenario: Scenario, amendments: Sequence[Amendment]
) -> tuple[Allocation, Scenario]:
    """Apply manager edits atomically.

    All amendments are validated first; any problem rejects the whole batch
    with per-amendment reasons and leaves the inputs untouched.  Pinning a
    task also moves it to the pin target so the pin invariant holds.
    """
    rejections = [
        reason
        for reason in (_check_amendment(a, scenario) for a in amendments)
        if reason is not None
    ]
    if rejections:
        raise AmendmentRejected(rejections)

    genes = list(alloc.genes)
    tasks = list(scenario.tasks)
    for amendment in amendments:
        pos = scenario.task_position(amendment.task_id)
        task = tasks[pos]
        if amendment.action == "move_to":
            genes[pos] = scenario.analyst_position(amendment.analyst_id)
        elif amendment.action == "pin":
            genes[pos] = scenario.analyst_position(amendment.analyst_id)
            tasks[pos] = replace(task, pinned_to=amendment.analyst_id)
        elif amendment.action == "unpin":
            tasks[pos] = replace(task, pinned_to=None)
        elif amendment.action == "set_progress":
            tasks[pos] = replace(task, progress=amendment.progress)
        elif amendment.action == "escalate":
            tasks[pos] = replace(task, priority=amendment.priority)

    new_scenario = replace(scenario, tasks=tuple(tasks))
    new_alloc = Allocation(genes=tuple(genes))
    findings = validate_scenario(new_scenario) + validate_allocation(
        new_alloc, new_scenario
    )
    if findings:
        raise AmendmentRejected(findings)
    return new_alloc, new_scenario


def reoptimize(
    alloc: Allocation,
    scenario: Scenario,
    spec: ObjectiveSpec,
    config: GAConfig,
    on_generation=None,
) -> EvolutionResult:
    """Re-run the GA from the current state.

    The incumbent allocation joins the initial population, so the returned
    best never scores below it; pinned genes stay where the manager put them
    and task progress flows into the expected times automatically.
    """
    findings = validate_allocation(alloc, scenario)
    if findings:
        raise AmendmentRejected(findings)
    return evolve(
        scenario, spec, config, incumbent=alloc, on_generation=on_generation
    )

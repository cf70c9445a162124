import numpy as np
import pytest

from taskalloc.model import Analyst, Scenario, Task, TaskTypeSpec, normalize_preferences
from taskalloc.simulate import STANDARD_TYPE_TABLE


def make_type(type_id=1, mean=1800.0, var=90_000.0, freq=1.0) -> TaskTypeSpec:
    return TaskTypeSpec(
        type_id=type_id, mean_duration=mean, duration_variance=var,
        relative_frequency=freq,
    )


def make_analyst(analyst_id, type_ids, availability=28800.0, efficiency=1.0,
                 preference=0.5) -> Analyst:
    if not isinstance(efficiency, dict):
        efficiency = {tid: efficiency for tid in type_ids}
    if not isinstance(preference, dict):
        preference = {tid: preference for tid in type_ids}
    return Analyst(
        analyst_id=analyst_id,
        efficiency=efficiency,
        availability=availability,
        preference_raw={tid: 3 for tid in type_ids},
        preference_norm=preference,
    )


def make_scenario(tasks, analysts, type_specs, max_priority=3, **kwargs) -> Scenario:
    return Scenario(
        tasks=tuple(tasks), analysts=tuple(analysts), type_specs=tuple(type_specs),
        max_priority=max_priority, **kwargs,
    )


def random_scenario(rng: np.random.Generator, n=None, m=None, with_pins=False,
                    max_priority=3) -> Scenario:
    """Small random scenario over the standard type table, for oracle tests."""
    n = n if n is not None else int(rng.integers(1, 7))
    m = m if m is not None else int(rng.integers(1, 4))
    table = STANDARD_TYPE_TABLE
    analysts = []
    for a in range(m):
        raw = {t.type_id: int(rng.integers(1, 6)) for t in table}
        analysts.append(
            Analyst(
                analyst_id=a,
                efficiency={t.type_id: float(rng.uniform(0.9, 1.1)) for t in table},
                availability=float(rng.uniform(7200, 36000)),
                preference_raw=raw,
                preference_norm=normalize_preferences(raw),
            )
        )
    tasks = []
    for t in range(n):
        spec = table[int(rng.integers(0, len(table)))]
        pinned = None
        progress = 0.0
        if with_pins and rng.random() < 0.2:
            pinned = int(rng.integers(0, m))
            progress = float(rng.uniform(0.0, 0.9))
        tasks.append(
            Task(
                task_id=t,
                type_id=spec.type_id,
                complexity=float(rng.uniform(0.5, 2.0)),
                precision=float(rng.uniform(0.0, 1.0)),
                priority=int(rng.integers(1, max_priority + 1)),
                progress=progress,
                pinned_to=pinned,
            )
        )
    scenario = Scenario(
        tasks=tuple(tasks), analysts=tuple(analysts), type_specs=table,
        max_priority=max_priority,
    )
    # Flag the low-workload penalty mode from the actual burden, like
    # screening would.
    types = scenario.types_by_id()
    total = 0.0
    for task in scenario.tasks:
        remaining = types[task.type_id].mean_duration * task.complexity * (1 - task.progress)
        if task.pinned_to is not None:
            remaining /= scenario.analysts[task.pinned_to].efficiency[task.type_id]
        total += remaining
    ratio = total / sum(a.availability for a in scenario.analysts)
    if ratio < 1.0:
        scenario = Scenario(
            tasks=scenario.tasks, analysts=scenario.analysts,
            type_specs=scenario.type_specs, max_priority=scenario.max_priority,
            low_workload=True,
        )
    return scenario


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)

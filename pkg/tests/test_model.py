import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskalloc.model import (
    Allocation,
    ScenarioValidationError,
    Task,
    derive_assignment,
    normalize_preferences,
    scenario_from_json,
    scenario_to_json,
    validate_allocation,
    validate_scenario,
)
from taskalloc.simulate import GeneratorConfig, generate_scenario

from .conftest import make_analyst, make_scenario, make_type


def three_task_scenario():
    spec = make_type()
    tasks = [Task(task_id=i, type_id=1) for i in range(3)]
    analysts = [make_analyst(a, [1]) for a in range(2)]
    return make_scenario(tasks, analysts, [spec])


class TestDeriveAssignment:
    def test_partitions_by_gene(self):
        scenario = three_task_scenario()
        sets = derive_assignment(Allocation(genes=(0, 0, 1)), scenario)
        assert sets == [{0, 1}, {2}]

    def test_empty_scenario_gives_empty_sets(self):
        scenario = make_scenario([], [make_analyst(a, [1]) for a in range(2)], [make_type()])
        assert derive_assignment(Allocation(genes=()), scenario) == [set(), set()]

    def test_all_tasks_one_analyst(self):
        spec = make_type()
        tasks = [Task(task_id=i, type_id=1) for i in range(4)]
        analysts = [make_analyst(a, [1]) for a in range(2)]
        scenario = make_scenario(tasks, analysts, [spec])
        sets = derive_assignment(Allocation(genes=(1, 1, 1, 1)), scenario)
        assert sets == [set(), {0, 1, 2, 3}]

    def test_out_of_range_gene_names_task(self):
        scenario = three_task_scenario()
        with pytest.raises(ScenarioValidationError, match="task 2"):
            derive_assignment(Allocation(genes=(0, 0, 5)), scenario)

    @given(st.data())
    @settings(max_examples=100, deadline=None)
    def test_partition_property(self, data):
        n = data.draw(st.integers(1, 12))
        m = data.draw(st.integers(1, 5))
        genes = tuple(data.draw(st.integers(0, m - 1)) for _ in range(n))
        tasks = [Task(task_id=i, type_id=1) for i in range(n)]
        analysts = [make_analyst(a, [1]) for a in range(m)]
        scenario = make_scenario(tasks, analysts, [make_type()])
        sets = derive_assignment(Allocation(genes=genes), scenario)
        union = set()
        for i, left in enumerate(sets):
            assert not union & left
            union |= left
        assert union == set(range(n))


class TestValidateScenario:
    def test_generated_scenario_is_clean(self):
        scenario = generate_scenario(GeneratorConfig(n_tasks=65, n_analysts=10, seed=3))
        assert validate_scenario(scenario) == []

    def test_precision_out_of_bounds(self):
        scenario = three_task_scenario()
        bad = make_scenario(
            [Task(task_id=0, type_id=1, precision=1.3)], scenario.analysts,
            scenario.type_specs,
        )
        findings = validate_scenario(bad)
        assert len(findings) == 1 and "task 0" in findings[0] and "precision" in findings[0]

    def test_missing_efficiency_entry(self):
        types = [make_type(1), make_type(3, mean=7200)]
        analyst = make_analyst(7, [1])  # nothing for type 3
        scenario = make_scenario([Task(task_id=0, type_id=1)], [analyst], types)
        findings = validate_scenario(scenario)
        assert any("analyst 7" in f and "type 3" in f for f in findings)

    def test_progress_and_priority_bounds(self):
        scenario = three_task_scenario()
        bad = make_scenario(
            [Task(task_id=0, type_id=1, progress=1.0, priority=9)],
            scenario.analysts, scenario.type_specs,
        )
        findings = validate_scenario(bad)
        assert any("progress" in f for f in findings)
        assert any("priority" in f for f in findings)

    def test_pin_to_unknown_analyst(self):
        scenario = three_task_scenario()
        bad = make_scenario(
            [Task(task_id=0, type_id=1, pinned_to=42)],
            scenario.analysts, scenario.type_specs,
        )
        assert any("pinned" in f for f in validate_scenario(bad))


class TestValidateAllocation:
    def test_pin_violation_reported(self):
        spec = make_type()
        tasks = [Task(task_id=0, type_id=1, pinned_to=1)]
        analysts = [make_analyst(a, [1]) for a in range(2)]
        scenario = make_scenario(tasks, analysts, [spec])
        assert validate_allocation(Allocation(genes=(1,)), scenario) == []
        findings = validate_allocation(Allocation(genes=(0,)), scenario)
        assert len(findings) == 1 and "pinned" in findings[0]


class TestPreferenceNormalization:
    def test_min_max_mapping(self):
        norm = normalize_preferences({1: 1, 2: 5, 3: 3})
        assert norm[1] == pytest.approx(0.1)
        assert norm[2] == pytest.approx(1.0)
        assert norm[3] == pytest.approx(0.55)

    def test_constant_answers_map_to_one(self):
        assert normalize_preferences({1: 2, 2: 2}) == {1: 1.0, 2: 1.0}

    @given(st.dictionaries(st.integers(1, 9), st.integers(1, 5), min_size=1))
    def test_range_invariant(self, raw):
        norm = normalize_preferences(raw)
        assert all(0.1 <= v <= 1.0 for v in norm.values())


class TestSerialization:
    def test_round_trip_identity(self):
        scenario = generate_scenario(GeneratorConfig(n_tasks=20, n_analysts=4, seed=11))
        doc = json.loads(json.dumps(scenario_to_json(scenario)))
        assert scenario_from_json(doc) == scenario

    def test_round_trip_preserves_pins_and_progress(self):
        scenario = generate_scenario(GeneratorConfig(n_tasks=40, n_analysts=5, seed=2))
        restored = scenario_from_json(scenario_to_json(scenario))
        pinned = [t for t in restored.tasks if t.pinned_to is not None]
        assert pinned and pinned == [t for t in scenario.tasks if t.pinned_to is not None]

    def test_norm_recomputed_from_raw_when_missing(self):
        scenario = three_task_scenario()
        doc = scenario_to_json(scenario)
        for analyst_doc in doc["analysts"]:
            analyst_doc["preference_raw"] = {"1": 4}
            del analyst_doc["preference_norm"]
        restored = scenario_from_json(doc)
        assert restored.analysts[0].preference_norm == {1: 1.0}

    def test_malformed_document_raises(self):
        with pytest.raises(ScenarioValidationError):
            scenario_from_json({"tasks": [{"nope": 1}], "analysts": [], "type_specs": []})

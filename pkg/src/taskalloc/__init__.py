"""Workforce task allocation: a Nash-product multi-objective model solved by
a genetic algorithm, with baseline heuristics, a scenario simulator, a
benchmark harness and a manager-facing review service."""

from .baselines import (
    BaselineBudget,
    greedy_allocate,
    hill_climb,
    manager_balanced,
    manager_efficiency,
)
from .ga import (
    EvolutionResult,
    GAConfig,
    GenerationStats,
    SetupError,
    allocation_diff,
    evolve,
)
from .model import (
    Allocation,
    Analyst,
    Scenario,
    ScenarioValidationError,
    Task,
    TaskTypeSpec,
    UtilityBreakdown,
    derive_assignment,
    load_scenario,
    save_scenario,
    scenario_from_json,
    scenario_to_json,
    validate_scenario,
)
from .objectives import (
    ObjectiveMode,
    ObjectiveSpec,
    PopulationEvaluator,
    analyst_utility,
    completion_utility,
    expected_execution_time,
    fairness_gap,
    global_utility,
    normal_cdf,
    precision_utility,
    preference_utility,
    priority_completion_probabilities,
)
from .simulate import (
    GeneratorConfig,
    GenerationError,
    STANDARD_TYPE_TABLE,
    burden_ratio,
    generate_scenario,
    screen_scenario,
)
from .workflow import (
    Amendment,
    AmendmentRejected,
    ScheduleEntry,
    apply_amendments,
    build_schedule,
    reoptimize,
)

__version__ = "0.1.0"

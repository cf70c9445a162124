"""Experiment harness: convergence against baselines, comparison with
simulated manager practice, and runtime scaling.

Every experiment runs from an explicit seed list so reports are reproducible;
aggregates carry Student-t 95% confidence intervals.  Results serialise to
flat CSVs (one row per observation) for plotting elsewhere.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import stats as scipy_stats

from .baselines import (
    BaselineBudget,
    greedy_allocate,
    hill_climb,
    manager_balanced,
    manager_efficiency,
)
from .ga import GAConfig, evolve
from .model import Allocation, Scenario
from .objectives import (
    ObjectiveMode,
    ObjectiveSpec,
    PopulationEvaluator,
    fairness_gap,
    normal_cdf,
)
from .simulate import GeneratorConfig, generate_scenario


def mean_ci(values: Sequence[float], confidence: float = 0.95) -> tuple[float, float, float]:
    """Sample mean with a Student-t confidence interval (needs >= 2 values)."""
    data = np.asarray(values, dtype=np.float64)
    if data.size < 2:
        raise ValueError("confidence interval needs at least two observations")
    mean = float(data.mean())
    sem = float(data.std(ddof=1) / np.sqrt(data.size))
    half = float(scipy_stats.t.ppf((1.0 + confidence) / 2.0, data.size - 1) * sem)
    return mean, mean - half, mean + half


def completion_likelihood(alloc: Allocation, scenario: Scenario) -> float:
    """Probability that every analyst clears their whole assignment: the
    product over analysts of P(total time <= availability), no priority
    weighting."""
    types = scenario.types_by_id()
    total = 1.0
    per_analyst_mean = [0.0] * scenario.n_analysts
    per_analyst_var = [0.0] * scenario.n_analysts
    infeasible = [False] * scenario.n_analysts
    for pos, gene in enumerate(alloc.genes):
        task = scenario.tasks[pos]
        analyst = scenario.analysts[gene]
        eff = analyst.efficiency.get(task.type_id, 0.0)
        if eff <= 0.0:
            infeasible[gene] = True
            continue
        spec = types[task.type_id]
        per_analyst_mean[gene] += (
            spec.mean_duration * task.complexity * (1.0 - task.progress) / eff
        )
        per_analyst_var[gene] += spec.duration_variance * (1.0 - task.progress)
    for a, analyst in enumerate(scenario.analysts):
        if infeasible[a]:
            return 0.0
        total *= normal_cdf(analyst.availability, per_analyst_mean[a], per_analyst_var[a])
    return total


@dataclass
class ExperimentReport:
    name: str
    records: list[dict[str, Any]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    def write_csv(self, path: str | Path, columns: Sequence[str]) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
            writer.writeheader()
            for record in self.records:
                writer.writerow(record)


CONVERGENCE_COLUMNS = ("config", "seed", "generation", "best", "mean", "switched")
COMPARISON_COLUMNS = ("strategy", "seed", "completion_likelihood", "fairness_gap")
SCALING_COLUMNS = ("n_tasks", "n_analysts", "population", "mode", "seed", "seconds")

GA_VARIANTS: dict[str, dict[str, str]] = {
    "steady_adaptive": {},
    "tournament_adaptive": {"selection": "tournament"},
    "steady_scramble": {"mutation": "scramble"},
}


def run_convergence(
    scenario: Scenario,
    base_config: GAConfig | None = None,
    n_seeds: int = 20,
    spec: ObjectiveSpec | None = None,
) -> ExperimentReport:
    """GA operator ablation plus evaluation-matched greedy / hill-climbing
    baselines on one fixed scenario."""
    base_config = base_config or GAConfig()
    spec = spec or ObjectiveSpec(mode=ObjectiveMode.COMPLETION_ONLY)
    budget_size = base_config.population_size * base_config.effective_generations
    report = ExperimentReport(name="convergence")

    finals: dict[str, list[float]] = {}
    for variant, overrides in GA_VARIANTS.items():
        config = replace(base_config, **overrides)
        for seed in range(n_seeds):
            result = evolve(scenario, spec, replace(config, seed=seed))
            finals.setdefault(variant, []).append(result.best_fitness)
            for row in result.stats:
                report.records.append(
                    {
                        "config": variant,
                        "seed": seed,
                        "generation": row.generation,
                        "best": row.best_fitness,
                        "mean": row.mean_fitness,
                        "switched": row.tasks_switched,
                    }
                )

    for seed in range(n_seeds):
        budget = BaselineBudget(max_utility_evaluations=budget_size)
        greedy = greedy_allocate(scenario, spec, budget=budget)
        greedy_fit = PopulationEvaluator(scenario, spec).fitness_one(greedy)
        improved = hill_climb(greedy, scenario, spec, budget=budget, seed=seed)
        improved_fit = PopulationEvaluator(scenario, spec).fitness_one(improved)
        finals.setdefault("greedy", []).append(greedy_fit)
        finals.setdefault("greedy_hc", []).append(improved_fit)
        report.records.append(
            {"config": "greedy", "seed": seed, "generation": -1,
             "best": greedy_fit, "mean": greedy_fit, "switched": 0}
        )
        report.records.append(
            {"config": "greedy_hc", "seed": seed, "generation": -1,
             "best": improved_fit, "mean": improved_fit, "switched": 0}
        )

    report.summary = {
        name: dict(zip(("mean", "ci_low", "ci_high"), mean_ci(values)))
        for name, values in finals.items()
    }
    report.summary["evaluation_budget"] = budget_size
    return report


COMPARISON_MODES = (
    ObjectiveMode.COMPLETION_ONLY,
    ObjectiveMode.COMPLETION_PREFERENCE,
    ObjectiveMode.COMPLETION_PREFERENCE_PRECISION,
)


def run_comparison(
    scenario: Scenario,
    n_seeds: int = 5,
    base_config: GAConfig | None = None,
    modes: Sequence[ObjectiveMode] = COMPARISON_MODES,
) -> ExperimentReport:
    """Simulated manager strategies versus the GA in each objective mode,
    scored on whole-workforce completion likelihood and the fairness gap."""
    base_config = base_config or GAConfig()
    report = ExperimentReport(name="comparison")

    def record(strategy: str, seed: int, alloc: Allocation) -> None:
        report.records.append(
            {
                "strategy": strategy,
                "seed": seed,
                "completion_likelihood": completion_likelihood(alloc, scenario),
                "fairness_gap": fairness_gap(alloc, scenario),
            }
        )

    efficiency_alloc = manager_efficiency(scenario)
    for seed in range(n_seeds):
        record("manager_efficiency", seed, efficiency_alloc)
        record("manager_balanced", seed, manager_balanced(scenario, seed=seed))
        for mode in modes:
            spec = ObjectiveSpec(mode=mode)
            result = evolve(scenario, spec, replace(base_config, seed=seed))
            record(f"ga_{mode.value}", seed, result.best)

    summary: dict[str, Any] = {}
    strategies = sorted({r["strategy"] for r in report.records})
    for strategy in strategies:
        rows = [r for r in report.records if r["strategy"] == strategy]
        summary[strategy] = {
            "completion_likelihood_mean": float(
                np.mean([r["completion_likelihood"] for r in rows])
            ),
            "fairness_gap_mean": float(np.mean([r["fairness_gap"] for r in rows])),
        }
    report.summary = summary
    return report


DEFAULT_SCALING_SIZES = ((65, 10), (130, 20), (195, 30), (260, 40), (325, 50))
SCALING_MODES = (
    ObjectiveMode.COMPLETION_ONLY,
    ObjectiveMode.COMPLETION_PREFERENCE_PRECISION,
)


def run_scaling(
    sizes: Sequence[tuple[int, int]] = DEFAULT_SCALING_SIZES,
    modes: Sequence[ObjectiveMode] = SCALING_MODES,
    n_seeds: int = 3,
    base_config: GAConfig | None = None,
    scenario_seed: int = 7,
) -> ExperimentReport:
    """Wall-clock of the optimisation alone across problem sizes, with the
    population (and parents/elites) scaled linearly with task count."""
    base_config = base_config or GAConfig()
    report = ExperimentReport(name="scaling")
    base_tasks = min(n for n, _ in sizes)

    for n_tasks, n_analysts in sizes:
        scenario = generate_scenario(
            GeneratorConfig(n_tasks=n_tasks, n_analysts=n_analysts, seed=scenario_seed)
        )
        scaled = base_config.scaled_for(n_tasks, base_tasks=base_tasks)
        for mode in modes:
            spec = ObjectiveSpec(mode=mode)
            for seed in range(n_seeds):
                config = replace(scaled, seed=seed)
                start = time.perf_counter()
                evolve(scenario, spec, config)
                elapsed = time.perf_counter() - start
                report.records.append(
                    {
                        "n_tasks": n_tasks,
                        "n_analysts": n_analysts,
                        "population": scaled.population_size,
                        "mode": mode.value,
                        "seed": seed,
                        "seconds": elapsed,
                    }
                )

    summary: dict[str, Any] = {"slope": {}, "mean_seconds": {}}
    for mode in modes:
        rows = [r for r in report.records if r["mode"] == mode.value]
        populations = sorted({r["population"] for r in rows})
        means = [
            float(np.mean([r["seconds"] for r in rows if r["population"] == p]))
            for p in populations
        ]
        slope = float(
            np.polyfit(np.log(np.asarray(populations, float)), np.log(means), 1)[0]
        )
        summary["slope"][mode.value] = slope
        summary["mean_seconds"][mode.value] = dict(zip(populations, means))
    report.summary = summary
    return report


def write_all(
    out_dir: str | Path,
    convergence: ExperimentReport | None = None,
    comparison: ExperimentReport | None = None,
    scaling: ExperimentReport | None = None,
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if convergence is not None:
        convergence.write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS)
        written.append(out / "convergence.csv")
    if comparison is not None:
        comparison.write_csv(out / "comparison.csv", COMPARISON_COLUMNS)
        written.append(out / "comparison.csv")
    if scaling is not None:
        scaling.write_csv(out / "scaling.csv", SCALING_COLUMNS)
        written.append(out / "scaling.csv")
    return written

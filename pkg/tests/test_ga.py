import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskalloc.ga import (
    GAConfig,
    SetupError,
    allocation_diff,
    crossover_single_point,
    evolve,
    init_population,
    mutate_adaptive,
    select_parents,
)
from taskalloc.model import Allocation, Task
from taskalloc.objectives import ObjectiveMode, ObjectiveSpec

from . import bruteforce
from .conftest import make_analyst, make_scenario, make_type, random_scenario


def small_config(**kwargs) -> GAConfig:
    defaults = dict(population_size=30, generations=10, parents_mating=6, elitism=3)
    defaults.update(kwargs)
    return GAConfig(**defaults)


class TestConfig:
    def test_defaults_match_fiducial_setup(self):
        config = GAConfig()
        assert config.population_size == 500
        assert config.generations == 50
        assert config.parents_mating == 50
        assert config.elitism == 10
        assert config.mutation_high == 0.9
        assert config.mutation_low == 0.05
        assert config.crossover_fraction == pytest.approx(0.98)

    def test_validation(self):
        with pytest.raises(ValueError):
            GAConfig(elitism=500, population_size=500)
        with pytest.raises(ValueError):
            GAConfig(parents_mating=501)
        with pytest.raises(ValueError):
            GAConfig(mutation_high=0.01, mutation_low=0.5)
        with pytest.raises(ValueError):
            GAConfig(selection="roulette")

    def test_linear_scaling_rounds_up(self):
        scaled = GAConfig().scaled_for(130)
        assert (scaled.population_size, scaled.parents_mating, scaled.elitism) == (
            1000, 100, 20,
        )
        odd = GAConfig().scaled_for(66)
        assert odd.population_size == 508  # ceil(500 * 66/65)
        assert odd.elitism == 11


class TestInitPopulation:
    def scenario(self, pinned_to=None):
        tasks = [Task(task_id=i, type_id=1, pinned_to=pinned_to if i == 1 else None)
                 for i in range(3)]
        analysts = [make_analyst(a, [1]) for a in range(2)]
        return make_scenario(tasks, analysts, [make_type()])

    def test_shape_and_gene_range(self):
        config = small_config(population_size=4, parents_mating=2, elitism=1, seed=0)
        population = init_population(self.scenario(), config)
        assert population.shape == (4, 3)
        assert set(np.unique(population)) <= {0, 1}

    def test_pinned_gene_fixed_everywhere(self):
        population = init_population(self.scenario(pinned_to=1), small_config(seed=0))
        assert (population[:, 1] == 1).all()

    def test_deterministic_under_seed(self):
        config = small_config(seed=123)
        a = init_population(self.scenario(), config)
        b = init_population(self.scenario(), config)
        assert (a == b).all()

    def test_unassignable_task_is_setup_error(self):
        tasks = [Task(task_id=0, type_id=1), Task(task_id=1, type_id=2)]
        analysts = [make_analyst(0, [1, 2], efficiency={1: 1.0, 2: 0.0})]
        scenario = make_scenario(tasks, analysts, [make_type(1), make_type(2)])
        with pytest.raises(SetupError, match="task 1"):
            init_population(scenario, small_config())

    def test_pin_to_incapable_analyst_is_setup_error(self):
        tasks = [Task(task_id=0, type_id=1, pinned_to=0)]
        analysts = [make_analyst(0, [1], efficiency=0.0), make_analyst(1, [1])]
        scenario = make_scenario(tasks, analysts, [make_type()])
        with pytest.raises(SetupError, match="task 0"):
            init_population(scenario, small_config())


class TestSelectParents:
    def test_rank_truncation(self):
        picked = select_parents(
            np.zeros((3, 2)), np.array([0.1, 0.9, 0.5]),
            small_config(population_size=3, parents_mating=2, elitism=1),
        )
        assert picked.tolist() == [1, 2]

    def test_ties_break_to_lower_index(self):
        picked = select_parents(
            np.zeros((4, 2)), np.array([0.5, 0.5, 0.5, 0.5]),
            small_config(population_size=4, parents_mating=2, elitism=1),
        )
        assert picked.tolist() == [0, 1]

    def test_whole_population_in_rank_order(self):
        picked = select_parents(
            np.zeros((3, 2)), np.array([0.3, 0.1, 0.7]),
            small_config(population_size=3, parents_mating=3, elitism=1),
        )
        assert picked.tolist() == [2, 0, 1]

    def test_tournament_prefers_fitter_solutions(self):
        rng = np.random.default_rng(0)
        fitnesses = np.linspace(0.0, 1.0, 50)
        picked = select_parents(
            np.zeros((50, 2)), fitnesses,
            small_config(population_size=50, parents_mating=20, elitism=1,
                         selection="tournament"),
            rng,
        )
        assert fitnesses[picked].mean() > fitnesses.mean()


class TestCrossover:
    def test_glues_head_and_tail(self):
        child = crossover_single_point(np.array([1, 2, 3, 4]), np.array([4, 3, 2, 1]), cut=2)
        assert child.tolist() == [1, 2, 2, 1]

    def test_identical_parents_any_cut(self):
        parent = np.array([0, 1, 0, 1, 1])
        for cut in range(1, 5):
            assert crossover_single_point(parent, parent, cut=cut).tolist() == parent.tolist()

    def test_smallest_valid_cut(self):
        child = crossover_single_point(np.array([0, 0]), np.array([1, 1]), cut=1)
        assert child.tolist() == [0, 1]

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            crossover_single_point(np.array([1, 2]), np.array([1, 2, 3]))

    def test_pins_reforced(self):
        child = crossover_single_point(
            np.array([0, 0, 0]), np.array([1, 1, 1]), cut=1, pinned={2: 0}
        )
        assert child.tolist() == [0, 1, 0]


class TestMutateAdaptive:
    def scenario(self, m=10):
        tasks = [Task(task_id=i, type_id=1) for i in range(20)]
        analysts = [make_analyst(a, [1]) for a in range(m)]
        return make_scenario(tasks, analysts, [make_type()])

    def test_zero_rates_leave_chromosome_alone(self):
        scenario = self.scenario()
        config = small_config(mutation_high=0.0, mutation_low=0.0)
        chromosome = np.zeros(20, dtype=np.int64)
        out = mutate_adaptive(chromosome, 0.1, 0.5, scenario, config,
                              np.random.default_rng(0))
        assert (out == chromosome).all()

    def test_single_analyst_cannot_change(self):
        scenario = self.scenario(m=1)
        config = small_config(population_size=5, parents_mating=2, elitism=1,
                              mutation_high=1.0, mutation_low=1.0)
        chromosome = np.zeros(20, dtype=np.int64)
        out = mutate_adaptive(chromosome, 0.0, 0.5, scenario, config,
                              np.random.default_rng(0))
        assert (out == chromosome).all()

    def test_pinned_genes_never_mutate(self):
        tasks = [Task(task_id=i, type_id=1, pinned_to=3 if i < 5 else None)
                 for i in range(20)]
        analysts = [make_analyst(a, [1]) for a in range(10)]
        scenario = make_scenario(tasks, analysts, [make_type()])
        config = small_config(mutation_high=1.0, mutation_low=1.0)
        out = mutate_adaptive(np.full(20, 3), 0.0, 0.5, scenario, config,
                              np.random.default_rng(1))
        assert (out[:5] == 3).all()

    def test_low_rate_monte_carlo(self):
        """Per-gene Bernoulli(0.05) resample over 10 analysts: expect roughly
        0.05 * 9/10 of genes to actually change value."""
        scenario = self.scenario(m=10)
        config = small_config(mutation_high=0.9, mutation_low=0.05)
        rng = np.random.default_rng(7)
        changed = 0
        trials = 500  # x 20 genes = 10k gene draws
        base = np.zeros(20, dtype=np.int64)
        for _ in range(trials):
            out = mutate_adaptive(base, 1.0, 0.5, scenario, config, rng)
            changed += int((out != base).sum())
        fraction = changed / (trials * 20)
        assert fraction == pytest.approx(0.05, abs=0.01)

    def test_high_rate_applies_below_mean(self):
        scenario = self.scenario(m=10)
        config = small_config(mutation_high=0.9, mutation_low=0.05)
        rng = np.random.default_rng(7)
        out = mutate_adaptive(np.zeros(20, dtype=np.int64), 0.1, 0.5, scenario,
                              config, rng)
        # at rate 0.9 over 20 genes, leaving everything unchanged is ~1e-20
        assert (out != 0).any()


class TestAllocationDiff:
    def test_identity(self):
        assert allocation_diff([0, 1, 2], [0, 1, 2]) == 0

    def test_total_difference(self):
        assert allocation_diff([0, 0], [1, 1]) == 2

    def test_single_swap(self):
        assert allocation_diff([0, 1, 0, 1], [0, 1, 1, 1]) == 1

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            allocation_diff([0], [0, 1])

    def test_accepts_allocations(self):
        assert allocation_diff(Allocation(genes=(0, 1)), Allocation(genes=(1, 1))) == 1


class TestEvolve:
    def tiny_scenario(self):
        tasks = [
            Task(task_id=0, type_id=1, priority=1, precision=0.9),
            Task(task_id=1, type_id=2, priority=2, precision=0.2),
        ]
        analysts = [
            make_analyst(0, [1, 2], availability=4000.0,
                         efficiency={1: 1.1, 2: 0.9}, preference={1: 1.0, 2: 0.3}),
            make_analyst(1, [1, 2], availability=5200.0,
                         efficiency={1: 0.9, 2: 1.1}, preference={1: 0.4, 2: 0.8}),
        ]
        return make_scenario(tasks, analysts, [make_type(1), make_type(2, mean=3600, var=810000)])

    def test_tiny_scenario_matches_brute_force(self):
        scenario = self.tiny_scenario()
        spec = ObjectiveSpec(mode=ObjectiveMode.COMPLETION_PREFERENCE_PRECISION)
        _, oracle_best = bruteforce.enumerate_best(scenario, spec.mode.value)
        result = evolve(scenario, spec, small_config(population_size=8, seed=5))
        assert result.best_fitness == pytest.approx(oracle_best, abs=1e-9)

    def test_all_pinned_returns_pinned_allocation(self):
        tasks = [Task(task_id=i, type_id=1, pinned_to=i % 2) for i in range(4)]
        analysts = [make_analyst(a, [1]) for a in range(2)]
        scenario = make_scenario(tasks, analysts, [make_type()])
        result = evolve(scenario, ObjectiveSpec(), small_config(seed=1))
        assert result.best.genes == (0, 1, 0, 1)
        assert all(row.tasks_switched == 0 for row in result.stats)

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(42)
        scenario = random_scenario(rng, n=10, m=3)
        config = small_config(seed=99)
        first = evolve(scenario, ObjectiveSpec(), config)
        second = evolve(scenario, ObjectiveSpec(), config)
        assert first.best.genes == second.best.genes
        assert first.stats == second.stats

    def test_parallel_evaluation_is_bit_identical(self):
        rng = np.random.default_rng(43)
        scenario = random_scenario(rng, n=12, m=3)
        serial = evolve(scenario, ObjectiveSpec(), small_config(seed=7, workers=0))
        threaded = evolve(scenario, ObjectiveSpec(), small_config(seed=7, workers=4))
        assert serial.best.genes == threaded.best.genes
        assert serial.stats == threaded.stats
        assert serial.best_fitness == threaded.best_fitness

    def test_budget_is_population_times_generations(self):
        rng = np.random.default_rng(44)
        scenario = random_scenario(rng, n=6, m=2)
        config = small_config(population_size=20, generations=7, parents_mating=4,
                              elitism=2, seed=0)
        result = evolve(scenario, ObjectiveSpec(), config)
        assert result.evaluations == 20 * 7
        assert len(result.stats) == 7

    def test_early_stop_cuts_generations_and_budget(self):
        rng = np.random.default_rng(45)
        scenario = random_scenario(rng, n=6, m=2)
        config = small_config(population_size=20, generations=50, parents_mating=4,
                              elitism=2, seed=0, early_stop_generation=5)
        result = evolve(scenario, ObjectiveSpec(), config)
        assert result.evaluations == 20 * 5
        assert len(result.stats) == 5

    def test_best_fitness_is_monotone_across_generations(self):
        rng = np.random.default_rng(46)
        scenario = random_scenario(rng, n=12, m=3)
        result = evolve(scenario, ObjectiveSpec(), small_config(seed=3, generations=15))
        best_series = [row.best_fitness for row in result.stats]
        assert all(b >= a - 1e-15 for a, b in zip(best_series, best_series[1:]))

    def test_pins_hold_in_best_allocation(self):
        rng = np.random.default_rng(47)
        scenario = random_scenario(rng, n=10, m=3, with_pins=True)
        result = evolve(scenario, ObjectiveSpec(), small_config(seed=11))
        for pos, task in enumerate(scenario.tasks):
            if task.pinned_to is not None:
                assert result.best.genes[pos] == task.pinned_to

    def test_non_converged_flagged_when_fitness_zero(self):
        # Zero-variance type and zero availability make completion a step at
        # 0, so every allocation scores exactly 0.
        tasks = [Task(task_id=0, type_id=1)]
        analysts = [make_analyst(0, [1], availability=0.0)]
        scenario = make_scenario(
            tasks, analysts, [make_type(1, mean=100.0, var=0.0)]
        )
        result = evolve(
            scenario, ObjectiveSpec(mode=ObjectiveMode.COMPLETION_ONLY),
            small_config(population_size=4, parents_mating=2, elitism=1, seed=0),
        )
        assert not result.converged
        assert result.best_fitness == 0.0

    def test_incumbent_never_lost(self):
        rng = np.random.default_rng(48)
        scenario = random_scenario(rng, n=8, m=3)
        spec = ObjectiveSpec()
        from taskalloc.objectives import PopulationEvaluator

        incumbent = Allocation(genes=tuple(int(rng.integers(0, 3)) for _ in range(8)))
        incumbent_fit = PopulationEvaluator(scenario, spec).fitness_one(incumbent)
        result = evolve(scenario, spec, small_config(seed=13, generations=4),
                        incumbent=incumbent)
        assert result.best_fitness >= incumbent_fit - 1e-15

    @given(st.integers(0, 500))
    @settings(max_examples=25, deadline=None)
    def test_best_is_valid_total_allocation(self, seed):
        rng = np.random.default_rng(seed)
        scenario = random_scenario(rng, with_pins=True)
        config = small_config(population_size=10, generations=3, parents_mating=4,
                              elitism=2, seed=seed)
        result = evolve(scenario, ObjectiveSpec(), config)
        assert len(result.best.genes) == scenario.n_tasks
        assert all(0 <= g < scenario.n_analysts for g in result.best.genes)

    def test_scramble_mutation_preserves_analyst_counts_per_chromosome(self):
        rng = np.random.default_rng(50)
        scenario = random_scenario(rng, n=12, m=3)
        config = small_config(seed=2, mutation="scramble", generations=6)
        result = evolve(scenario, ObjectiveSpec(), config)
        assert len(result.best.genes) == 12  # smoke: runs through the ablation path

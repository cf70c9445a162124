"""Command-line front door: simulate scenarios, run allocators, reproduce the
benchmark experiments, and serve the HTTP API."""

from __future__ import annotations

import argparse
import json
from dataclasses import replace
import sys
import uuid
from pathlib import Path

from .baselines import (
    BaselineBudget,
    greedy_allocate,
    hill_climb,
    manager_balanced,
    manager_efficiency,
)
from .bench import (
    COMPARISON_COLUMNS,
    run_comparison,
    run_convergence,
    run_scaling,
    write_all,
)
from .ga import GAConfig, evolve
from .model import allocation_to_json, load_scenario, save_scenario
from .objectives import ObjectiveSpec, PopulationEvaluator, global_utility
from .service import parse_mode
from .simulate import GeneratorConfig, generate_scenario, screen_scenario

STRATEGIES = ("ga", "greedy", "greedy-hc", "manager-eff", "manager-bal")


def _add_objective_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--objective",
        default="completion",
        help="completion | completion-pref | full (or a canonical mode name)",
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = generate_scenario(
        GeneratorConfig(
            n_tasks=args.tasks,
            n_analysts=args.analysts,
            seed=args.seed,
            availability=args.availability,
            max_priority=args.max_priority,
        )
    )
    save_scenario(scenario, args.out)
    print(f"wrote {args.tasks}-task / {args.analysts}-analyst scenario to {args.out}")
    return 0


def cmd_allocate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    scenario, warnings = screen_scenario(scenario, auto_drop=args.auto_drop)
    for warning in warnings:
        print(f"[{warning.severity}] {warning.kind}: {warning.message}", file=sys.stderr)

    spec = ObjectiveSpec(mode=parse_mode(args.objective))
    config = replace(_base_config(args), seed=args.seed)
    if args.scale:
        config = config.scaled_for(scenario.n_tasks)

    if args.strategy == "ga":
        result = evolve(scenario, spec, config)
        alloc, fitness = result.best, result.best_fitness
        if not result.converged:
            print("warning: best fitness is zero (non-converged)", file=sys.stderr)
    elif args.strategy == "greedy":
        alloc = greedy_allocate(scenario, spec)
        fitness = PopulationEvaluator(scenario, spec).fitness_one(alloc)
    elif args.strategy == "greedy-hc":
        budget = BaselineBudget(
            max_utility_evaluations=config.population_size * config.effective_generations
        )
        alloc = hill_climb(
            greedy_allocate(scenario, spec, budget=budget),
            scenario, spec, budget=budget, seed=args.seed,
        )
        fitness = PopulationEvaluator(scenario, spec).fitness_one(alloc)
    elif args.strategy == "manager-eff":
        alloc = manager_efficiency(scenario)
        fitness = PopulationEvaluator(scenario, spec).fitness_one(alloc)
    elif args.strategy == "manager-bal":
        alloc = manager_balanced(scenario, seed=args.seed)
        fitness = PopulationEvaluator(scenario, spec).fitness_one(alloc)
    else:  # pragma: no cover - argparse choices guard
        raise ValueError(args.strategy)

    breakdown = global_utility(alloc, scenario, spec)
    doc = allocation_to_json(alloc, breakdown, run_id=uuid.uuid4().hex[:12])
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        print(f"wrote allocation to {args.out}")
    print(f"{args.strategy}: global utility {fitness:.6g}")
    return 0


def _base_config(args: argparse.Namespace) -> GAConfig:
    parents = min(max(2, args.pop // 10), args.pop)
    elitism = min(max(1, args.pop // 50), args.pop - 1)
    if args.pop == 500:
        parents, elitism = 50, 10
    return GAConfig(population_size=args.pop, generations=args.gens,
                    parents_mating=parents, elitism=elitism)


def cmd_compare(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    scenario, _ = screen_scenario(scenario)
    report = run_comparison(scenario, n_seeds=args.seeds, base_config=_base_config(args))
    if args.out:
        report.write_csv(args.out, COMPARISON_COLUMNS)
        print(f"wrote {args.out}")
    for strategy, row in report.summary.items():
        print(
            f"{strategy:40s} completion {row['completion_likelihood_mean']:.3e}  "
            f"fairness gap {row['fairness_gap_mean']:.4f}"
        )
    return 0


def _parse_sizes(text: str) -> tuple[tuple[int, int], ...]:
    sizes = []
    for chunk in text.split(","):
        n_tasks, n_analysts = chunk.strip().split("x")
        sizes.append((int(n_tasks), int(n_analysts)))
    return tuple(sizes)


def cmd_bench(args: argparse.Namespace) -> int:
    out = Path(args.out)
    which = args.experiment
    base = _base_config(args)
    convergence = comparison = scaling = None
    if which in ("convergence", "comparison", "all"):
        scenario = generate_scenario(
            GeneratorConfig(n_tasks=65, n_analysts=10, seed=args.seed)
        )
        scenario, _ = screen_scenario(scenario)
        if which in ("convergence", "all"):
            convergence = run_convergence(scenario, base_config=base, n_seeds=args.seeds)
            print("convergence summary:", json.dumps(convergence.summary, indent=2))
        if which in ("comparison", "all"):
            comparison = run_comparison(scenario, n_seeds=min(args.seeds, 5),
                                        base_config=base)
            print("comparison summary:", json.dumps(comparison.summary, indent=2))
    if which in ("scaling", "all"):
        scaling = run_scaling(sizes=_parse_sizes(args.sizes), base_config=base,
                              n_seeds=min(args.seeds, 3), scenario_seed=args.seed)
        print("scaling summary:", json.dumps(scaling.summary, indent=2))
    written = write_all(out, convergence, comparison, scaling)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    ui_dir = args.ui_dir if args.ui_dir and Path(args.ui_dir).is_dir() else None
    app = create_app(data_dir=args.data_dir, ui_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskalloc",
        description="workforce task allocation engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a random scenario file")
    p.add_argument("--tasks", type=int, default=65)
    p.add_argument("--analysts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--availability", type=float, default=28800)
    p.add_argument("--max-priority", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("allocate", help="allocate one scenario with a chosen strategy")
    p.add_argument("--scenario", required=True)
    p.add_argument("--strategy", choices=STRATEGIES, default="ga")
    _add_objective_arg(p)
    p.add_argument("--pop", type=int, default=500)
    p.add_argument("--gens", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--auto-drop", action="store_true",
                   help="drop lowest-priority tasks when overloaded")
    p.add_argument("--scale", action="store_true",
                   help="scale population with task count")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("compare", help="strategies vs simulated managers on one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--pop", type=int, default=500)
    p.add_argument("--gens", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="reproduce the benchmark experiments (CSV output)")
    p.add_argument("--experiment", choices=("convergence", "comparison", "scaling", "all"),
                   default="all")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0, help="scenario-generation seed")
    p.add_argument("--pop", type=int, default=500)
    p.add_argument("--gens", type=int, default=50)
    p.add_argument("--sizes", default="65x10,130x20,195x30,260x40,325x50",
                   help="scaling sizes as comma-separated NxM pairs")
    p.add_argument("--out", default="bench-out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir", default="run-data")
    p.add_argument("--ui-dir", default="frontend/dist",
                   help="static UI bundle to mount at /ui (optional)")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

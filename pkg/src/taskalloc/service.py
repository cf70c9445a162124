"""Long-running allocation service.

Each optimisation run is a `RunRecord` persisted as an append-only JSON-lines
file (one event per line), so state survives restarts without a database.
Optimisations execute on background threads with their own random generators;
snapshots fold the event log into one JSON document the CLI and UI consume.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles

from .ga import GAConfig, GenerationStats, evolve
from .model import (
    Allocation,
    Scenario,
    ScenarioValidationError,
    allocation_to_json,
    breakdown_to_json,
    scenario_from_json,
    scenario_to_json,
)
from .objectives import ObjectiveMode, ObjectiveSpec, global_utility
from .simulate import screen_scenario
from .workflow import (
    Amendment,
    AmendmentRejected,
    amendment_from_json,
    apply_amendments,
    build_schedule,
    reoptimize,
)

TERMINAL_STATUSES = ("done", "failed", "non-converged")
_STATUS_ORDER = {"pending": 0, "running": 1, "done": 2, "failed": 2, "non-converged": 2}

MODE_ALIASES = {
    "completion": ObjectiveMode.COMPLETION_ONLY,
    "completion-pref": ObjectiveMode.COMPLETION_PREFERENCE,
    "full": ObjectiveMode.COMPLETION_PREFERENCE_PRECISION,
}


def parse_mode(name: str) -> ObjectiveMode:
    if name in MODE_ALIASES:
        return MODE_ALIASES[name]
    try:
        return ObjectiveMode(name)
    except ValueError:
        valid = sorted({*MODE_ALIASES, *(m.value for m in ObjectiveMode)})
        raise ValueError(f"unknown objective mode {name!r}; expected one of {valid}")


def spec_from_json(data: dict[str, Any] | None) -> ObjectiveSpec:
    data = data or {}
    return ObjectiveSpec(
        mode=parse_mode(data.get("mode", ObjectiveMode.COMPLETION_PREFERENCE_PRECISION.value)),
        empty_allocation_penalty=data.get("empty_allocation_penalty", 1e-6),
    )


_CONFIG_FIELDS = (
    "population_size", "generations", "parents_mating", "elitism",
    "mutation_high", "mutation_low", "selection", "mutation", "crossover",
    "tournament_k", "seed", "early_stop_generation", "workers",
)


def config_from_json(data: dict[str, Any] | None, base: GAConfig | None = None) -> GAConfig:
    base = base or GAConfig()
    overrides = {k: v for k, v in (data or {}).items() if k in _CONFIG_FIELDS}
    return replace(base, **overrides)


class RunStore:
    """Append-only event log per run, folded into snapshots on read."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, run_id: str) -> Path:
        return self.directory / f"run_{run_id}.jsonl"

    def new_run_id(self) -> str:
        while True:
            run_id = uuid.uuid4().hex[:12]
            if not self._path(run_id).exists():
                return run_id

    def append(self, run_id: str, event: dict[str, Any]) -> None:
        with self._lock:
            with open(self._path(run_id), "a") as fh:
                fh.write(json.dumps(event) + "\n")

    def exists(self, run_id: str) -> bool:
        return self._path(run_id).exists()

    def run_ids(self) -> list[str]:
        return sorted(
            p.stem.removeprefix("run_") for p in self.directory.glob("run_*.jsonl")
        )

    def snapshot(self, run_id: str) -> dict[str, Any]:
        """Fold the event log into the current RunRecord document."""
        path = self._path(run_id)
        if not path.exists():
            raise KeyError(run_id)
        record: dict[str, Any] = {
            "run_id": run_id,
            "status": "pending",
            "created_at": None,
            "parent_run_id": None,
            "scenario": None,
            "spec": None,
            "config": None,
            "warnings": [],
            "stats": [],
            "best": None,
            "schedule": None,
            "amendments": [],
            "error": None,
        }
        with self._lock:
            lines = path.read_text().splitlines()
        for line in lines:
            event = json.loads(line)
            kind = event.get("event")
            if kind == "created":
                record.update(
                    created_at=event["created_at"],
                    parent_run_id=event.get("parent_run_id"),
                    scenario=event["scenario"],
                    spec=event["spec"],
                    config=event["config"],
                    warnings=event.get("warnings", []),
                    amendments=event.get("amendments", []),
                )
            elif kind == "status":
                new_status = event["status"]
                if _STATUS_ORDER[new_status] < _STATUS_ORDER[record["status"]]:
                    continue  # never step a run backwards
                record["status"] = new_status
                if event.get("error"):
                    record["error"] = event["error"]
            elif kind == "generation":
                record["stats"].append(event["stats"])
            elif kind == "result":
                record["best"] = event["best"]
                record["schedule"] = event["schedule"]
        return record


class AllocationService:
    """Run lifecycle management on top of a RunStore."""

    def __init__(self, store: RunStore, background: bool = True):
        self.store = store
        self.background = background
        self._threads: dict[str, threading.Thread] = {}

    # -- helpers -----------------------------------------------------------

    def _record_result(
        self, run_id: str, scenario: Scenario, spec: ObjectiveSpec, result
    ) -> None:
        breakdown = global_utility(result.best, scenario, spec)
        schedule = [e.to_json() for e in build_schedule(result.best, scenario)]
        self.store.append(
            run_id,
            {
                "event": "result",
                "best": {
                    "genes": list(result.best.genes),
                    "fitness": result.best_fitness,
                    "utility": breakdown_to_json(breakdown),
                },
                "schedule": schedule,
            },
        )
        status = "done" if result.converged else "non-converged"
        self.store.append(run_id, {"event": "status", "status": status})

    def _execute(
        self,
        run_id: str,
        scenario: Scenario,
        spec: ObjectiveSpec,
        config: GAConfig,
        incumbent: Allocation | None,
    ) -> None:
        self.store.append(run_id, {"event": "status", "status": "running"})

        def on_generation(stats: GenerationStats) -> None:
            self.store.append(
                run_id,
                {
                    "event": "generation",
                    "stats": {
                        "generation": stats.generation,
                        "best": stats.best_fitness,
                        "mean": stats.mean_fitness,
                        "tasks_switched": stats.tasks_switched,
                    },
                },
            )

        try:
            if incumbent is not None:
                result = reoptimize(incumbent, scenario, spec, config, on_generation)
            else:
                result = evolve(scenario, spec, config, on_generation=on_generation)
            self._record_result(run_id, scenario, spec, result)
        except Exception as exc:  # surface the failure instead of a dead thread
            self.store.append(
                run_id, {"event": "status", "status": "failed", "error": str(exc)}
            )

    def _launch(self, run_id: str, scenario, spec, config, incumbent=None) -> None:
        if self.background:
            thread = threading.Thread(
                target=self._execute,
                args=(run_id, scenario, spec, config, incumbent),
                daemon=True,
            )
            self._threads[run_id] = thread
            thread.start()
        else:
            self._execute(run_id, scenario, spec, config, incumbent)

    # -- operations ---------------------------------------------------------

    def create_run(
        self,
        scenario_doc: dict[str, Any],
        spec_doc: dict[str, Any] | None = None,
        config_doc: dict[str, Any] | None = None,
        auto_drop: bool = False,
        parent_run_id: str | None = None,
        amendments_doc: list[dict[str, Any]] | None = None,
        incumbent: Allocation | None = None,
        scenario: Scenario | None = None,
    ) -> str:
        if scenario is None:
            scenario = scenario_from_json(scenario_doc)
        spec = spec_from_json(spec_doc)
        config = config_from_json(config_doc)
        screened, warnings = screen_scenario(scenario, auto_drop=auto_drop)
        if incumbent is not None and len(screened.tasks) != len(scenario.tasks):
            # dropping tasks under an incumbent would desync gene positions
            screened = scenario

        run_id = self.store.new_run_id()
        self.store.append(
            run_id,
            {
                "event": "created",
                "created_at": time.time(),
                "parent_run_id": parent_run_id,
                "scenario": scenario_to_json(screened),
                "spec": {
                    "mode": spec.mode.value,
                    "empty_allocation_penalty": spec.empty_allocation_penalty,
                },
                "config": {k: getattr(config, k) for k in _CONFIG_FIELDS},
                "warnings": [w.to_json() for w in warnings],
                "amendments": amendments_doc or [],
            },
        )
        self._launch(run_id, screened, spec, config, incumbent)
        return run_id

    def get_run(self, run_id: str) -> dict[str, Any]:
        return self.store.snapshot(run_id)

    def amend_and_reoptimize(
        self,
        run_id: str,
        amendments_doc: list[dict[str, Any]],
        config_doc: dict[str, Any] | None = None,
    ) -> str:
        parent = self.store.snapshot(run_id)
        if parent["status"] not in ("done", "non-converged"):
            raise RuntimeError(f"run {run_id} is {parent['status']}, not finished")
        scenario = scenario_from_json(parent["scenario"])
        incumbent = Allocation(genes=tuple(parent["best"]["genes"]))
        amendments = [amendment_from_json(doc) for doc in amendments_doc]
        amendments = auto_pin(amendments)
        new_alloc, new_scenario = apply_amendments(incumbent, scenario, amendments)
        config_base = config_from_json(parent["config"])
        config = config_from_json(config_doc, base=config_base)
        return self.create_run(
            scenario_doc=scenario_to_json(new_scenario),
            spec_doc=parent["spec"],
            config_doc={k: getattr(config, k) for k in _CONFIG_FIELDS},
            parent_run_id=run_id,
            amendments_doc=[a.to_json() for a in amendments],
            incumbent=new_alloc,
            scenario=new_scenario,
        )

    def preview_amendments(
        self, run_id: str, amendments_doc: list[dict[str, Any]]
    ) -> dict[str, Any]:
        """Utility of the amended allocation without running the optimiser."""
        parent = self.store.snapshot(run_id)
        if parent["best"] is None:
            raise RuntimeError(f"run {run_id} has no allocation to amend yet")
        scenario = scenario_from_json(parent["scenario"])
        incumbent = Allocation(genes=tuple(parent["best"]["genes"]))
        spec = spec_from_json(parent["spec"])
        amendments = [amendment_from_json(doc) for doc in amendments_doc]
        new_alloc, new_scenario = apply_amendments(incumbent, scenario, amendments)
        breakdown = global_utility(new_alloc, new_scenario, spec)
        incumbent_breakdown = global_utility(incumbent, scenario, spec)
        return {
            "run_id": run_id,
            "utility": breakdown_to_json(breakdown),
            "incumbent_utility": breakdown_to_json(incumbent_breakdown),
            "delta": breakdown.global_utility - incumbent_breakdown.global_utility,
        }

    def wait(self, run_id: str, timeout: float = 60.0) -> dict[str, Any]:
        """Block until the run reaches a terminal status (testing/CLI aid)."""
        deadline = time.time() + timeout
        while time.time() < deadline:
            snapshot = self.store.snapshot(run_id)
            if snapshot["status"] in TERMINAL_STATUSES:
                return snapshot
            thread = self._threads.get(run_id)
            if thread is not None:
                thread.join(timeout=0.05)
            else:
                time.sleep(0.05)
        raise TimeoutError(f"run {run_id} still {snapshot['status']} after {timeout}s")


def auto_pin(amendments: list[Amendment]) -> list[Amendment]:
    """Moved tasks get pinned to their target so re-optimisation respects the
    manager's edit, unless the same batch explicitly unpins them."""
    unpinned = {a.task_id for a in amendments if a.action == "unpin"}
    result = list(amendments)
    for amendment in amendments:
        if amendment.action == "move_to" and amendment.task_id not in unpinned:
            result.append(
                Amendment(
                    task_id=amendment.task_id,
                    action="pin",
                    analyst_id=amendment.analyst_id,
                )
            )
    return result


def create_app(
    data_dir: str | Path = "run-data",
    background: bool = True,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    store = RunStore(data_dir)
    service = AllocationService(store, background=background)
    app = FastAPI(title="taskalloc service")
    app.state.service = service

    @app.get("/healthz")
    def healthz() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/runs", status_code=201)
    def create_run(body: dict[str, Any]) -> dict[str, str]:
        try:
            run_id = service.create_run(
                scenario_doc=body.get("scenario") or {},
                spec_doc=body.get("spec"),
                config_doc=body.get("config"),
                auto_drop=bool(body.get("auto_drop", False)),
            )
        except ScenarioValidationError as exc:
            raise HTTPException(status_code=400, detail={"findings": exc.findings})
        except (ValueError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"run_id": run_id}

    @app.get("/runs")
    def list_runs() -> dict[str, Any]:
        return {"runs": store.run_ids()}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str) -> dict[str, Any]:
        try:
            return service.get_run(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")

    @app.get("/runs/{run_id}/schedule")
    def get_schedule(run_id: str) -> dict[str, Any]:
        try:
            snapshot = service.get_run(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")
        return {
            "run_id": run_id,
            "status": snapshot["status"],
            "entries": snapshot["schedule"] or [],
        }

    @app.get("/runs/{run_id}/stats")
    def get_stats(run_id: str) -> dict[str, Any]:
        try:
            snapshot = service.get_run(run_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")
        return {"run_id": run_id, "status": snapshot["status"],
                "generations": snapshot["stats"]}

    @app.post("/runs/{run_id}/amendments", status_code=201)
    def post_amendments(run_id: str, body: dict[str, Any]) -> dict[str, Any]:
        if not store.exists(run_id):
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")
        try:
            child = service.amend_and_reoptimize(
                run_id,
                amendments_doc=body.get("amendments", []),
                config_doc=body.get("config"),
            )
        except AmendmentRejected as exc:
            raise HTTPException(status_code=422, detail={"rejections": exc.rejections})
        except RuntimeError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (KeyError, ValueError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"run_id": child, "parent_run_id": run_id}

    @app.post("/runs/{run_id}/preview")
    def preview(run_id: str, body: dict[str, Any]) -> dict[str, Any]:
        if not store.exists(run_id):
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")
        try:
            return service.preview_amendments(run_id, body.get("amendments", []))
        except AmendmentRejected as exc:
            raise HTTPException(status_code=422, detail={"rejections": exc.rejections})
        except RuntimeError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

        @app.get("/", include_in_schema=False)
        def index() -> FileResponse:
            return FileResponse(str(Path(ui_dir) / "index.html"))

    return app

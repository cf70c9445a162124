import threading

import pytest
from fastapi.testclient import TestClient

from taskalloc.model import scenario_to_json
from taskalloc.service import AllocationService, RunStore, create_app, parse_mode
from taskalloc.simulate import GeneratorConfig, generate_scenario
from taskalloc.objectives import ObjectiveMode

TINY_CONFIG = {"population_size": 24, "generations": 6, "parents_mating": 6,
               "elitism": 2, "seed": 0}


def tiny_scenario_doc(seed=31, n=10, m=2):
    return scenario_to_json(generate_scenario(
        GeneratorConfig(n_tasks=n, n_analysts=m, seed=seed)
    ))


@pytest.fixture
def client(tmp_path):
    app = create_app(data_dir=tmp_path / "runs")
    with TestClient(app) as test_client:
        yield test_client


def create_and_wait(client, body, timeout=30.0):
    response = client.post("/runs", json=body)
    assert response.status_code == 201, response.text
    run_id = response.json()["run_id"]
    service = client.app.state.service
    return run_id, service.wait(run_id, timeout=timeout)


class TestParseMode:
    def test_aliases(self):
        assert parse_mode("completion") is ObjectiveMode.COMPLETION_ONLY
        assert parse_mode("completion-pref") is ObjectiveMode.COMPLETION_PREFERENCE
        assert parse_mode("full") is ObjectiveMode.COMPLETION_PREFERENCE_PRECISION
        assert parse_mode("completion_precision") is ObjectiveMode.COMPLETION_PRECISION

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="unknown objective"):
            parse_mode("sharpe-ratio")


class TestHealth:
    def test_healthz(self, client):
        assert client.get("/healthz").json() == {"status": "ok"}


class TestCreateRun:
    def test_happy_path_completes_with_schedule_and_stats(self, client):
        run_id, snapshot = create_and_wait(client, {
            "scenario": tiny_scenario_doc(),
            "spec": {"mode": "full"},
            "config": TINY_CONFIG,
        })
        assert snapshot["status"] == "done"
        assert snapshot["best"]["utility"]["global"] > 0.0
        assert len(snapshot["best"]["genes"]) == 10
        assert snapshot["schedule"]
        assert len(snapshot["stats"]) == TINY_CONFIG["generations"]

        schedule = client.get(f"/runs/{run_id}/schedule").json()
        assert schedule["entries"] == snapshot["schedule"]
        stats = client.get(f"/runs/{run_id}/stats").json()
        assert stats["generations"] == snapshot["stats"]

    def test_malformed_scenario_is_400_with_findings(self, client):
        doc = tiny_scenario_doc()
        doc["tasks"][0]["precision"] = 2.5
        response = client.post("/runs", json={"scenario": doc, "config": TINY_CONFIG})
        assert response.status_code == 400
        assert any("precision" in f for f in response.json()["detail"]["findings"])
        assert client.get("/runs").json()["runs"] == []

    def test_overload_warning_attached_without_auto_drop(self, client):
        doc = tiny_scenario_doc()
        for analyst in doc["analysts"]:
            analyst["availability"] = analyst["availability"] * 0.75
        _, snapshot = create_and_wait(client, {
            "scenario": doc, "config": TINY_CONFIG, "auto_drop": False,
        })
        assert snapshot["status"] in ("done", "non-converged")
        assert any(w["kind"] == "overload" for w in snapshot["warnings"])
        assert len(snapshot["scenario"]["tasks"]) == len(doc["tasks"])

    def test_unknown_run_is_404(self, client):
        assert client.get("/runs/doesnotexist").status_code == 404
        assert client.get("/runs/doesnotexist/schedule").status_code == 404

    def test_pending_or_running_snapshot_before_done(self, client):
        response = client.post("/runs", json={
            "scenario": tiny_scenario_doc(), "config": TINY_CONFIG,
        })
        run_id = response.json()["run_id"]
        status = client.get(f"/runs/{run_id}").json()["status"]
        assert status in ("pending", "running", "done")


class TestAmendments:
    def make_parent(self, client):
        return create_and_wait(client, {
            "scenario": tiny_scenario_doc(),
            "spec": {"mode": "completion"},
            "config": TINY_CONFIG,
        })

    def find_movable(self, snapshot):
        scenario = snapshot["scenario"]
        genes = snapshot["best"]["genes"]
        for task in scenario["tasks"]:
            if task["pinned_to"] is None:
                current = genes[scenario["tasks"].index(task)]
                target = (current + 1) % len(scenario["analysts"])
                return task["task_id"], target
        raise AssertionError("no movable task")

    def test_move_is_autopinned_in_child(self, client):
        parent_id, parent = self.make_parent(client)
        task_id, target = self.find_movable(parent)
        response = client.post(f"/runs/{parent_id}/amendments", json={
            "amendments": [{"task_id": task_id, "action": "move_to",
                            "analyst_id": target}],
        })
        assert response.status_code == 201, response.text
        child_id = response.json()["run_id"]
        child = client.app.state.service.wait(child_id, timeout=30.0)
        assert child["parent_run_id"] == parent_id
        positions = [t["task_id"] for t in child["scenario"]["tasks"]]
        pos = positions.index(task_id)
        assert child["scenario"]["tasks"][pos]["pinned_to"] == target
        assert child["best"]["genes"][pos] == target

    def test_child_utility_at_least_amended_incumbent(self, client):
        parent_id, parent = self.make_parent(client)
        task_id, target = self.find_movable(parent)
        amendments = [{"task_id": task_id, "action": "move_to", "analyst_id": target}]
        preview = client.post(f"/runs/{parent_id}/preview",
                              json={"amendments": amendments}).json()
        response = client.post(f"/runs/{parent_id}/amendments",
                               json={"amendments": amendments})
        child = client.app.state.service.wait(response.json()["run_id"], timeout=30.0)
        assert child["best"]["utility"]["global"] >= preview["utility"]["global"] - 1e-15

    def test_infeasible_move_rejected_without_child(self, client):
        parent_id, parent = self.make_parent(client)
        before = set(client.get("/runs").json()["runs"])
        response = client.post(f"/runs/{parent_id}/amendments", json={
            "amendments": [{"task_id": 0, "action": "move_to", "analyst_id": 99}],
        })
        assert response.status_code == 422
        assert response.json()["detail"]["rejections"]
        assert set(client.get("/runs").json()["runs"]) == before

    def test_amending_unfinished_run_conflicts(self, tmp_path):
        app = create_app(data_dir=tmp_path / "slow-runs")
        with TestClient(app) as client:
            response = client.post("/runs", json={
                "scenario": tiny_scenario_doc(n=30, m=3),
                "config": {**TINY_CONFIG, "population_size": 200, "generations": 50},
            })
            run_id = response.json()["run_id"]
            conflict = client.post(f"/runs/{run_id}/amendments", json={"amendments": []})
            # either we were fast enough to see it running, or it already finished
            assert conflict.status_code in (409, 201)
            client.app.state.service.wait(run_id, timeout=60.0)

    def test_preview_reports_delta(self, client):
        parent_id, parent = self.make_parent(client)
        task_id, target = self.find_movable(parent)
        preview = client.post(f"/runs/{parent_id}/preview", json={
            "amendments": [{"task_id": task_id, "action": "move_to",
                            "analyst_id": target}],
        }).json()
        assert preview["delta"] == pytest.approx(
            preview["utility"]["global"] - preview["incumbent_utility"]["global"]
        )


class TestPersistence:
    def test_runs_survive_restart(self, tmp_path):
        data_dir = tmp_path / "persist"
        app = create_app(data_dir=data_dir)
        with TestClient(app) as client:
            run_id, snapshot = create_and_wait(client, {
                "scenario": tiny_scenario_doc(), "config": TINY_CONFIG,
            })
        reopened = create_app(data_dir=data_dir)
        with TestClient(reopened) as client:
            restored = client.get(f"/runs/{run_id}").json()
            assert restored == snapshot

    def test_concurrent_runs_have_isolated_rng(self, tmp_path):
        store = RunStore(tmp_path / "iso")
        service = AllocationService(store, background=True)
        body = dict(scenario_doc=tiny_scenario_doc(), spec_doc={"mode": "completion"},
                    config_doc=TINY_CONFIG)
        ids = []
        threads = [
            threading.Thread(target=lambda: ids.append(service.create_run(**body)))
            for _ in range(3)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        snapshots = [service.wait(run_id, timeout=30.0) for run_id in ids]
        genes = [tuple(s["best"]["genes"]) for s in snapshots]
        assert len(set(genes)) == 1
        assert len({s["run_id"] for s in snapshots}) == 3

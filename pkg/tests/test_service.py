"""Tests for the HTTP facade.

Calculator endpoints are checked for transport fidelity against direct
library calls (the numeric engines have their own oracle suites), plus
the documented error mapping: 400 for malformed payloads, 422 for domain
violations, 404 for unknown jobs.  Simulation jobs run through the
in-process worker pool and are polled to completion.
"""

import json
import math
import time
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from crt4.correlation import BlockDims, CorrelationParams
from crt4.design import (
    DesignSpec,
    OutcomeModel,
    design_effect,
    optimal_allocation,
    predicted_power,
    sensitivity_grid,
)
from crt4.harness import REPORT_COLUMNS, Scenario, run_grid, scenario_seed
from crt4.service import create_app


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


def reshape_body(**overrides):
    body = {
        "dims": {"m": 3, "k": 3, "l": 36},
        "icc": {"alpha0": 0.05, "alpha1": 0.04, "alpha2": 0.03},
        "outcome": {"link": "logit", "variance_family": "binomial",
                    "mu_c": 0.785, "mu_t": 0.88},
        "n_clusters": 22,
    }
    body.update(overrides)
    return body


def reshape_spec(n_clusters=22):
    return DesignSpec(
        dims=BlockDims(3, 3, 36),
        corr=CorrelationParams(0.05, 0.04, 0.03),
        outcome=OutcomeModel("logit", "binomial", 0.785, 0.88),
        n_clusters=n_clusters,
    )


class TestPower:
    def test_matches_library_and_echoes_resolved_spec(self, client):
        resp = client.post("/v1/power", json=reshape_body())
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["power"] == predicted_power(reshape_spec())
        assert payload["power"] == pytest.approx(0.826529, abs=5e-5)
        # defaults are filled into the echoed spec
        assert payload["spec"]["pi_c"] == 0.5
        assert payload["spec"]["rand_level"] == 4
        assert payload["spec"]["alpha_level"] == 0.05
        assert len(payload["request_id"]) == 16

    def test_same_body_same_bytes(self, client):
        first = client.post("/v1/power", json=reshape_body())
        second = client.post("/v1/power", json=reshape_body())
        assert first.content == second.content

    def test_missing_n_clusters_is_domain_error(self, client):
        body = reshape_body()
        del body["n_clusters"]
        resp = client.post("/v1/power", json=body)
        assert resp.status_code == 422
        assert "n_clusters" in resp.json()["error"]


class TestSampleSize:
    def test_reshape_count(self, client):
        body = reshape_body()
        del body["n_clusters"]
        resp = client.post("/v1/sample-size", json=body)
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["n_clusters"] == 22
        assert payload["power"] == predicted_power(reshape_spec(22))

    def test_gaussian_identity_count(self, client):
        body = {
            "dims": {"m": 4, "k": 25, "l": 2},
            "icc": {"alpha0": 0.445, "alpha1": 0.104, "alpha2": 0.008},
            "outcome": {"link": "identity", "variance_family": "gaussian",
                        "mu_c": 0.0, "mu_t": 0.19},
        }
        resp = client.post("/v1/sample-size", json=body)
        assert resp.status_code == 200
        assert resp.json()["n_clusters"] == 36

    def test_real_valued_flag(self, client):
        body = reshape_body(real_valued=True)
        del body["n_clusters"]
        resp = client.post("/v1/sample-size", json=body)
        assert resp.status_code == 200
        n = resp.json()["n_clusters"]
        assert isinstance(n, float) and 20 < n < 22


class TestDesignEffect:
    def test_matches_library(self, client):
        resp = client.post("/v1/design-effect", json=reshape_body())
        assert resp.status_code == 200
        assert resp.json()["design_effect"] == design_effect(reshape_spec())

    def test_unclustered_route(self, client):
        resp = client.post("/v1/design-effect",
                           json=reshape_body(unclustered_n=562))
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["route"]["clustered_patients"] == 6806
        assert payload["route"]["n_clusters"] == 22


class TestAllocation:
    def test_matches_library(self, client):
        outcome = {"link": "logit", "variance_family": "binomial",
                   "mu_c": 0.2, "mu_t": 0.5}
        resp = client.post("/v1/allocation", json=outcome)
        assert resp.status_code == 200
        expected = optimal_allocation(
            OutcomeModel("logit", "binomial", 0.2, 0.5))
        assert resp.json()["pi_c"] == expected
        assert resp.json()["pi_c"] == pytest.approx(5 / 9, abs=1e-9)


class TestIccValidate:
    def test_zero_triple_is_valid_with_unit_spectrum(self, client):
        body = {"icc": {"alpha0": 0, "alpha1": 0, "alpha2": 0},
                "dims": {"m": 2, "k": 2, "l": 5}}
        resp = client.post("/v1/icc/validate", json=body)
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["valid"] is True
        assert payload["violations"] == []
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            assert payload["spectrum"][name] == 1.0

    def test_invalid_triple_names_eigenvalue(self, client):
        body = {"icc": {"alpha0": 0, "alpha1": 1, "alpha2": 0},
                "dims": {"m": 2, "k": 2, "l": 5}}
        resp = client.post("/v1/icc/validate", json=body)
        assert resp.status_code == 200
        payload = resp.json()
        assert payload["valid"] is False
        assert any("lambda" in v for v in payload["violations"])


class TestSensitivityGrid:
    def test_cells_match_library_mask_included(self, client):
        body = {
            "base": reshape_body(),
            "axis1": {"param": "alpha1", "lo": 0.0, "hi": 0.1, "steps": 11},
            "axis2": {"param": "alpha2", "lo": 0.0, "hi": 0.05, "steps": 11},
        }
        resp = client.post("/v1/sensitivity-grid", json=body)
        assert resp.status_code == 200
        payload = resp.json()

        grid = sensitivity_grid(reshape_spec(),
                                ("alpha1", (0.0, 0.1), 11),
                                ("alpha2", (0.0, 0.05), 11))
        assert payload["values1"] == list(grid.values1)
        assert payload["values2"] == list(grid.values2)
        masked = 0
        for i in range(11):
            for j in range(11):
                assert payload["valid"][i][j] == bool(grid.valid[i, j])
                if grid.valid[i, j]:
                    assert payload["power"][i][j] == float(grid.power[i, j])
                else:
                    assert payload["power"][i][j] is None
                    masked += 1
        assert masked > 0, "expected masked nodes in this rectangle"

    def test_step_cap(self, client):
        body = {
            "base": reshape_body(),
            "axis1": {"param": "alpha1", "lo": 0.0, "hi": 0.1, "steps": 999},
            "axis2": {"param": "alpha2", "lo": 0.0, "hi": 0.05, "steps": 11},
        }
        resp = client.post("/v1/sensitivity-grid", json=body)
        assert resp.status_code == 422


class TestErrorMapping:
    def test_malformed_json_is_400(self, client):
        resp = client.post("/v1/power", content=b"{not json",
                           headers={"content-type": "application/json"})
        assert resp.status_code == 400

    def test_missing_field_is_400_with_field_path(self, client):
        body = reshape_body()
        del body["dims"]
        resp = client.post("/v1/power", json=body)
        assert resp.status_code == 400
        fields = [item["field"] for item in resp.json()["detail"]]
        assert any("dims" in f for f in fields)

    def test_unknown_field_is_400(self, client):
        resp = client.post("/v1/power", json=reshape_body(bogus=1))
        assert resp.status_code == 400

    def test_domain_violation_is_422_naming_eigenvalue(self, client):
        body = reshape_body(icc={"alpha0": 0, "alpha1": 1, "alpha2": 0})
        resp = client.post("/v1/power", json=body)
        assert resp.status_code == 422
        assert "lambda" in resp.json()["error"]

    def test_mkl_cap_is_422(self, client):
        body = reshape_body(dims={"m": 10, "k": 100, "l": 11})
        resp = client.post("/v1/power", json=body)
        assert resp.status_code == 422


def scenario_payload(**overrides):
    payload = {
        "name": "tiny",
        "p0": 0.2,
        "p1": 0.5,
        "icc": "A3",
        "n": 8,
        "dims": [2, 2, 2],
        "replications": 10,
        "seed": 5,
    }
    payload.update(overrides)
    return payload


def poll_job(client, job_id, timeout=30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        resp = client.get(f"/v1/jobs/{job_id}")
        assert resp.status_code == 200
        payload = resp.json()
        if payload["status"] in ("done", "error"):
            return payload
        time.sleep(0.02)
    raise AssertionError("job did not finish in time")


class TestSimulateJobs:
    def test_job_reproduces_direct_grid_run(self, client):
        resp = client.post("/v1/simulate",
                           json={"scenarios": [scenario_payload()]})
        assert resp.status_code == 202
        payload = poll_job(client, resp.json()["job_id"])
        assert payload["status"] == "done"
        assert payload["error"] is None

        direct = run_grid([Scenario(
            name="tiny", p0=0.2, p1=0.5, corr="A3", n_clusters=8,
            dims=(2, 2, 2), replications=10, seed=5)])
        assert payload["result"]["columns"] == list(REPORT_COLUMNS)
        assert payload["result"]["rows"] == list(direct.rows)
        assert payload["result"]["errors"] == []

    def test_master_seed_fills_missing_scenario_seeds(self, client):
        scenario = scenario_payload()
        del scenario["seed"]
        resp = client.post("/v1/simulate",
                           json={"scenarios": [scenario], "master_seed": 99})
        assert resp.status_code == 202
        payload = poll_job(client, resp.json()["job_id"])
        assert payload["status"] == "done"
        assert payload["result"]["rows"][0]["seed"] == scenario_seed(99, 0)

    def test_no_seed_anywhere_is_422(self, client):
        scenario = scenario_payload()
        del scenario["seed"]
        resp = client.post("/v1/simulate", json={"scenarios": [scenario]})
        assert resp.status_code == 422
        assert "seed" in resp.json()["error"]

    def test_scenario_error_is_captured_not_fatal(self, client):
        bad = scenario_payload(name="infeasible",
                               icc=[0.6, 0.0, 0.0], p0=0.1, p1=0.9,
                               rand_level=1)
        resp = client.post("/v1/simulate", json={"scenarios": [bad]})
        assert resp.status_code == 202
        payload = poll_job(client, resp.json()["job_id"])
        assert payload["status"] == "done"
        assert payload["result"]["rows"] == []
        assert "GenerationRangeError" in \
            payload["result"]["errors"][0]["error"]

    def test_replication_cap_is_422(self, client):
        resp = client.post("/v1/simulate", json={
            "scenarios": [scenario_payload(replications=1001)]})
        assert resp.status_code == 422

    def test_unknown_job_is_404(self, client):
        assert client.get("/v1/jobs/deadbeef").status_code == 404

    def test_job_store_evicts_oldest(self):
        with TestClient(create_app(job_capacity=2)) as client:
            ids = []
            for seed in (1, 2, 3):
                resp = client.post("/v1/simulate", json={
                    "scenarios": [scenario_payload(seed=seed,
                                                   replications=4)]})
                assert resp.status_code == 202
                job_id = resp.json()["job_id"]
                poll_job(client, job_id)
                ids.append(job_id)
            assert client.get(f"/v1/jobs/{ids[0]}").status_code == 404
            assert client.get(f"/v1/jobs/{ids[2]}").status_code == 200


class TestCrossCutting:
    def test_cors_preflight_allows_browser_clients(self, client):
        resp = client.options("/v1/power", headers={
            "Origin": "http://localhost:5173",
            "Access-Control-Request-Method": "POST",
        })
        assert resp.status_code == 200
        assert resp.headers["access-control-allow-origin"] == "*"

    def test_shipped_schema_matches_runtime_schema(self):
        shipped = json.loads(
            (Path(__file__).parent.parent / "openapi.json").read_text())
        assert shipped == create_app().openapi()

"""Capture service responses into test fixtures.

Runs the real service in-process and snapshots the exact JSON the
explorer's tests replay, so every number asserted in the frontend suite
originated from the backend, never from a hand-written stub.  Re-run
after any service change:

    python3 scripts/capture_fixtures.py
"""

import json
import sys
from pathlib import Path

from fastapi.testclient import TestClient

from crt4.service import create_app

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def design_body(**overrides):
    body = {
        "dims": {"m": 3, "k": 3, "l": 36},
        "icc": {"alpha0": 0.05, "alpha1": 0.04, "alpha2": 0.03},
        "outcome": {"link": "logit", "variance_family": "binomial",
                    "mu_c": 0.785, "mu_t": 0.88, "phi": 1.0,
                    "kappa_c": None, "kappa_t": None},
        "n_clusters": None,
        "pi_c": 0.5,
        "rand_level": 4,
        "alpha_level": 0.05,
        "target_power": 0.8,
    }
    body.update(overrides)
    return body


def literacy_body(**overrides):
    body = design_body(
        dims={"m": 4, "k": 25, "l": 2},
        icc={"alpha0": 0.445, "alpha1": 0.104, "alpha2": 0.008},
        outcome={"link": "identity", "variance_family": "gaussian",
                 "mu_c": 0.0, "mu_t": 0.19, "phi": 1.0,
                 "kappa_c": None, "kappa_t": None},
    )
    body.update(overrides)
    return body


CAPTURES = [
    ("power.therapy", "/v1/power", design_body(n_clusters=22)),
    ("samplesize.therapy", "/v1/sample-size",
     {**design_body(), "real_valued": False}),
    ("samplesize.literacy", "/v1/sample-size",
     {**literacy_body(), "real_valued": False}),
    ("designeffect.therapy", "/v1/design-effect",
     {**design_body(), "unclustered_n": 562}),
    ("designeffect.zeroicc", "/v1/design-effect",
     {**design_body(icc={"alpha0": 0.0, "alpha1": 0.0, "alpha2": 0.0},
                    dims={"m": 2, "k": 3, "l": 5},
                    outcome={"link": "logit", "variance_family": "binomial",
                             "mu_c": 0.2, "mu_t": 0.5, "phi": 1.0,
                             "kappa_c": None, "kappa_t": None}),
      "unclustered_n": None}),
    ("allocation", "/v1/allocation",
     {"link": "logit", "variance_family": "binomial",
      "mu_c": 0.2, "mu_t": 0.5, "phi": 1.0,
      "kappa_c": None, "kappa_t": None}),
    ("icc.valid", "/v1/icc/validate",
     {"icc": {"alpha0": 0.05, "alpha1": 0.04, "alpha2": 0.03},
      "dims": {"m": 3, "k": 3, "l": 36}}),
    ("icc.invalid", "/v1/icc/validate",
     {"icc": {"alpha0": 0.01, "alpha1": 0.0, "alpha2": 0.3},
      "dims": {"m": 3, "k": 3, "l": 36}}),
    # default contour window of the therapy-education preset; the low
    # alpha1 / high alpha2 corner is not positive definite, which is the
    # masked-region case the contour tests need
    ("grid.therapy", "/v1/sensitivity-grid",
     {"base": design_body(n_clusters=22),
      "axis1": {"param": "alpha1", "lo": 0.0, "hi": 0.1, "steps": 41},
      "axis2": {"param": "alpha2", "lo": 0.0, "hi": 0.05, "steps": 41}}),
    ("grid.single", "/v1/sensitivity-grid",
     {"base": design_body(n_clusters=22),
      "axis1": {"param": "alpha1", "lo": 0.04, "hi": 0.04, "steps": 1},
      "axis2": {"param": "alpha2", "lo": 0.03, "hi": 0.03, "steps": 1}}),
    # error shapes the client maps onto ApiError
    ("error.malformed", "/v1/power",
     design_body(n_clusters=22, dims={"m": 3, "k": 3})),
    ("error.domain", "/v1/power",
     design_body(n_clusters=22,
                 icc={"alpha0": 0.01, "alpha1": 0.0, "alpha2": 0.3})),
]


def main() -> int:
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    with TestClient(create_app()) as client:
        for name, endpoint, body in CAPTURES:
            response = client.post(endpoint, json=body)
            fixture = {
                "endpoint": endpoint,
                "request": body,
                "status": response.status_code,
                "response": response.json(),
            }
            path = FIXTURE_DIR / f"{name}.json"
            path.write_text(json.dumps(fixture, indent=2, sort_keys=True)
                            + "\n")
            print(f"{path.name}: {response.status_code}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Monte Carlo scenario runner for four-level binary trial designs.

A Scenario bundles the generating truth (arm means, correlation triple,
layout geometry) with an analysis plan (working structures, variance
estimators, test level).  run_scenario simulates `replications`
independent trials, fits each with every requested working structure, and
aggregates Wald-test rejection rates over the converged fits;
non-convergent replications are excluded from both the numerator and the
denominator, and the convergence rate is reported alongside.  run_grid
executes many scenarios, optionally across processes, and renders a
fixed-column CSV report with a JSON mirror.

Seed discipline: every scenario owns one integer seed, given explicitly
or derived from a grid master seed as the first 8 bytes (big-endian) of
SHA-256("crt4-scenario:<master>:<index>").  Replication j draws its
layout and its outcomes from entropy (seed, j), so any single replication
can be reproduced in isolation and aggregate results are independent of
scheduling order or process count.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from hashlib import sha256

import tomli

from .correlation import BlockDims, CorrelationParams
from .datagen import PanelSizeModel, generate_binary, make_layout
from .design import DesignSpec, OutcomeModel, predicted_power
from .errors import ConvergenceError, DomainError
from .estimation import ESTIMATOR_NAMES, fit, wald_t_test

WORKING_NAMES = ("independence", "ene")

ICC_PRESETS = {
    "A1": CorrelationParams(0.4, 0.1, 0.03),
    "A2": CorrelationParams(0.15, 0.08, 0.02),
    "A3": CorrelationParams(0.1, 0.02, 0.01),
    "A4": CorrelationParams(0.05, 0.05, 0.02),
}

# Acceptance bands for a 5% test over 1000 replications: empirical size
# inside [0.036, 0.064]; empirical power within 0.026 of prediction.
SIZE_BOUNDS = (0.036, 0.064)
POWER_MARGIN = 0.026

REPORT_COLUMNS = (
    "scenario", "p0", "p1", "alpha0", "alpha1", "alpha2", "n_clusters",
    "m", "k", "l", "cv", "pi_c", "rand_level", "replications", "seed",
    "working", "estimator", "n_converged", "convergence_rate",
    "rejection_rate", "mc_se", "predicted_power", "diff_vs_predicted",
    "acceptable",
)


def size_acceptable(rate: float) -> bool:
    return SIZE_BOUNDS[0] <= rate <= SIZE_BOUNDS[1]


def power_acceptable(rate: float, predicted: float) -> bool:
    # closed band; the epsilon keeps exact-boundary differences inside
    # despite floating-point subtraction
    return abs(rate - predicted) <= POWER_MARGIN + 1e-12


def scenario_seed(master_seed: int, index: int) -> int:
    """Derive the seed of scenario `index` from a grid master seed."""
    digest = sha256(f"crt4-scenario:{master_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class Scenario:
    """One simulation cell: generating truth plus analysis plan.

    corr accepts a CorrelationParams, a bare (a0, a1, a2) triple, or one
    of the preset labels A1-A4.  dims gives the balanced geometry; with
    cv > 0 the patients-per-provider counts are gamma-distributed around
    dims.l instead (redrawn each replication unless freeze_sizes holds
    the first draw fixed).  Outcomes are binary on the logit scale; the
    predicted power companion uses the same geometry at the mean panel
    size.  p1 = p0 declares a null scenario whose rejection rate is an
    empirical type I error.
    """

    p0: float
    p1: float
    corr: CorrelationParams
    n_clusters: int
    dims: BlockDims
    seed: int
    name: str = ""
    cv: float = 0.0
    pi_c: float = 0.5
    rand_level: int = 4
    replications: int = 1000
    workings: tuple = ("ene",)
    estimators: tuple = ESTIMATOR_NAMES
    alpha_level: float = 0.05
    freeze_sizes: bool = False
    max_iter: int = 200

    def __post_init__(self):
        corr = self.corr
        if isinstance(corr, str):
            if corr not in ICC_PRESETS:
                raise DomainError(
                    f"unknown correlation preset {corr!r}; "
                    f"choose one of {', '.join(sorted(ICC_PRESETS))}"
                )
            corr = ICC_PRESETS[corr]
        elif not isinstance(corr, CorrelationParams):
            corr = CorrelationParams(*corr)
        object.__setattr__(self, "corr", corr)
        dims = self.dims
        if not isinstance(dims, BlockDims):
            dims = BlockDims(*dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "workings", tuple(self.workings))
        object.__setattr__(self, "estimators", tuple(self.estimators))

        for mean in (self.p0, self.p1):
            if not 0.0 < mean < 1.0:
                raise DomainError(
                    f"arm means must lie strictly in (0, 1), got {mean!r}"
                )
        if self.replications < 1:
            raise DomainError(
                f"replications must be positive, got {self.replications!r}"
            )
        if not 0.0 < self.alpha_level < 1.0:
            raise DomainError(
                f"alpha_level must lie in (0, 1), got {self.alpha_level!r}"
            )
        if self.cv < 0.0:
            raise DomainError(f"cv must be nonnegative, got {self.cv!r}")
        for working in self.workings:
            if working not in WORKING_NAMES:
                raise DomainError(
                    f"unknown working structure {working!r}; "
                    f"choose from {', '.join(WORKING_NAMES)}"
                )
        for est in self.estimators:
            if est not in ESTIMATOR_NAMES:
                raise DomainError(
                    f"unknown variance estimator {est!r}; "
                    f"choose from {', '.join(ESTIMATOR_NAMES)}"
                )

    @property
    def is_null(self) -> bool:
        return self.p0 == self.p1

    def predicted_power(self) -> float | None:
        """Closed-form power companion; None for null scenarios."""
        if self.is_null:
            return None
        spec = DesignSpec(
            dims=self.dims,
            corr=self.corr,
            outcome=OutcomeModel("logit", "binomial", self.p0, self.p1),
            n_clusters=self.n_clusters,
            pi_c=self.pi_c,
            rand_level=self.rand_level,
            alpha_level=self.alpha_level,
        )
        return predicted_power(spec)


@dataclass(frozen=True)
class ScenarioResult:
    """Aggregated rejection counts for one scenario.

    rejections[working][estimator] counts rejecting replications among
    the n_converged[working] usable ones; rates, Monte Carlo standard
    errors and acceptance flags are derived views.
    """

    scenario: Scenario
    rejections: dict
    n_converged: dict
    predicted: float | None

    @property
    def convergence_rate(self) -> dict:
        reps = self.scenario.replications
        return {w: n / reps for w, n in self.n_converged.items()}

    def rate(self, working: str, estimator: str) -> float:
        return self.rejections[working][estimator] / self.n_converged[working]

    def mc_se(self, working: str, estimator: str) -> float:
        p = self.rate(working, estimator)
        return (p * (1.0 - p) / self.n_converged[working]) ** 0.5

    def acceptable(self, working: str, estimator: str) -> bool:
        """Size inside the nominal band, or power within the margin."""
        p = self.rate(working, estimator)
        if self.predicted is None:
            return size_acceptable(p)
        return power_acceptable(p, self.predicted)

    def to_record(self) -> dict:
        return {
            "scenario": self.scenario.name,
            "replications": self.scenario.replications,
            "seed": self.scenario.seed,
            "predicted_power": self.predicted,
            "n_converged": dict(self.n_converged),
            "rejections": {w: dict(c) for w, c in self.rejections.items()},
        }


def _rep_layout(scenario: Scenario, panel, rep: int):
    return make_layout(
        scenario.n_clusters,
        scenario.dims,
        pi_c=scenario.pi_c,
        rand_level=scenario.rand_level,
        panel_model=panel,
        seed=(scenario.seed, rep),
    )


def run_scenario(scenario: Scenario) -> ScenarioResult:
    """Simulate, fit, and aggregate one scenario.

    A replication enters a working structure's tally only when that fit
    converges and every requested Wald test is computable; otherwise it
    is dropped from numerator and denominator alike.  More than 50%
    unusable replications for any requested working structure aborts
    with ConvergenceError.
    """
    panel = (PanelSizeModel(scenario.dims.l, scenario.cv)
             if scenario.cv > 0 else None)
    frozen = _rep_layout(scenario, panel, 0) if scenario.freeze_sizes else None

    rejections = {w: dict.fromkeys(scenario.estimators, 0)
                  for w in scenario.workings}
    used = dict.fromkeys(scenario.workings, 0)
    for rep in range(scenario.replications):
        layout = frozen if frozen is not None else \
            _rep_layout(scenario, panel, rep)
        data = generate_binary(layout, scenario.corr, scenario.p0,
                               scenario.p1, seed=(scenario.seed, rep))
        for working in scenario.workings:
            try:
                res = fit(data, working=working, max_iter=scenario.max_iter)
                if not res.converged:
                    continue
                flags = {
                    est: wald_t_test(res, estimator=est,
                                     alpha_level=scenario.alpha_level).reject
                    for est in scenario.estimators
                }
            except (DomainError, ConvergenceError):
                continue
            used[working] += 1
            for est, flag in flags.items():
                rejections[working][est] += int(flag)

    for working in scenario.workings:
        if 2 * used[working] < scenario.replications:
            raise ConvergenceError(
                f"scenario {scenario.name!r}: only {used[working]} of "
                f"{scenario.replications} replications converged under "
                f"working {working!r}"
            )
    return ScenarioResult(scenario, rejections, used,
                          scenario.predicted_power())


def _result_rows(result: ScenarioResult) -> list:
    scenario = result.scenario
    rows = []
    for working in scenario.workings:
        for est in scenario.estimators:
            rate = result.rate(working, est)
            diff = None if result.predicted is None \
                else rate - result.predicted
            rows.append({
                "scenario": scenario.name,
                "p0": scenario.p0,
                "p1": scenario.p1,
                "alpha0": scenario.corr.alpha0,
                "alpha1": scenario.corr.alpha1,
                "alpha2": scenario.corr.alpha2,
                "n_clusters": scenario.n_clusters,
                "m": scenario.dims.m,
                "k": scenario.dims.k,
                "l": scenario.dims.l,
                "cv": scenario.cv,
                "pi_c": scenario.pi_c,
                "rand_level": scenario.rand_level,
                "replications": scenario.replications,
                "seed": scenario.seed,
                "working": working,
                "estimator": est,
                "n_converged": result.n_converged[working],
                "convergence_rate": result.convergence_rate[working],
                "rejection_rate": rate,
                "mc_se": result.mc_se(working, est),
                "predicted_power": result.predicted,
                "diff_vs_predicted": diff,
                "acceptable": result.acceptable(working, est),
            })
    return rows


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


@dataclass(frozen=True)
class GridReport:
    """Flat report: one row per (scenario, working, estimator).

    to_csv renders REPORT_COLUMNS in order with floats at six decimals;
    to_json mirrors the same rows at full precision plus the per-scenario
    error list.  Both renderings are byte-reproducible for a fixed grid
    and seed.
    """

    rows: tuple
    errors: tuple

    def to_csv(self) -> str:
        lines = [",".join(REPORT_COLUMNS)]
        lines.extend(
            ",".join(_csv_cell(row[col]) for col in REPORT_COLUMNS)
            for row in self.rows
        )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "columns": list(REPORT_COLUMNS),
            "rows": list(self.rows),
            "errors": list(self.errors),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _grid_entry(item):
    index, scenario = item
    try:
        return index, None, run_scenario(scenario)
    except Exception as exc:
        return index, f"{type(exc).__name__}: {exc}", None


def run_grid(scenarios, parallelism: int = 1) -> GridReport:
    """Run every scenario, capturing per-scenario failures.

    A failing scenario contributes an entry to the error list and the
    grid continues; row order follows the input order regardless of
    parallelism, so reports are reproducible across process counts.
    """
    scenarios = list(scenarios)
    if parallelism <= 1 or len(scenarios) <= 1:
        outcomes = [_grid_entry(item) for item in enumerate(scenarios)]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(_grid_entry, enumerate(scenarios)))

    rows, errors = [], []
    for index, error, result in outcomes:
        if error is not None:
            name = scenarios[index].name or f"scenario-{index}"
            errors.append({"scenario": name, "error": error})
        else:
            rows.extend(_result_rows(result))
    return GridReport(tuple(rows), tuple(errors))


_SCENARIO_KEYS = ("p0", "p1", "icc", "n", "dims")
_OPTION_KEYS = ("cv", "pi_c", "rand_level", "replications", "workings",
                "estimators", "alpha_level", "freeze_sizes", "max_iter")


def load_scenarios(path) -> list:
    """Parse a declarative scenario file.

    Format: an optional [grid] table holding master_seed plus defaults
    (replications, workings, estimators, cv, pi_c, rand_level,
    alpha_level, max_iter), then one [[scenario]] table per cell with
    p0, p1, icc (preset label or triple), n, dims = [m, k, l], and any
    per-scenario overrides.  Scenarios without an explicit seed get one
    derived from master_seed and their position.
    """
    with open(path, "rb") as handle:
        try:
            doc = tomli.load(handle)
        except tomli.TOMLDecodeError as exc:
            raise DomainError(f"malformed scenario file: {exc}") from exc

    grid = doc.get("grid", {})
    master = grid.get("master_seed")
    defaults = {key: grid[key] for key in _OPTION_KEYS if key in grid}

    scenarios = []
    for index, entry in enumerate(doc.get("scenario", [])):
        for key in _SCENARIO_KEYS:
            if key not in entry:
                raise DomainError(
                    f"scenario {index}: missing required field {key!r}"
                )
        if "seed" in entry:
            seed = entry["seed"]
        elif master is not None:
            seed = scenario_seed(master, index)
        else:
            raise DomainError(
                f"scenario {index}: no seed given and the grid has no "
                "master_seed to derive one from"
            )
        options = dict(defaults)
        options.update(
            {key: entry[key] for key in _OPTION_KEYS if key in entry}
        )
        scenarios.append(Scenario(
            name=entry.get("name", f"scenario-{index}"),
            p0=entry["p0"],
            p1=entry["p1"],
            corr=entry["icc"],
            n_clusters=entry["n"],
            dims=tuple(entry["dims"]),
            seed=seed,
            **options,
        ))
    return scenarios

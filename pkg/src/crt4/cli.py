"""Command-line front door for design calculations and simulation runs.

Thin flag-to-library mapping: ICC triples as comma triples, dimensions
as M,K,L, results as `key = value` lines at four decimals by default
(--precision overrides) or as JSON with --json.  Exit codes: 0 success,
1 usage error, 2 domain error (statistically invalid input), 3 runtime
failure.
"""

from __future__ import annotations

import json as _json
import sys

import click

from .correlation import BlockDims, CorrelationParams, is_valid
from .design import (
    DesignSpec,
    OutcomeModel,
    clusters_via_design_effect,
    design_effect,
    optimal_allocation,
    predicted_power,
    required_clusters,
    sensitivity_grid,
)
from .errors import DomainError


class _CommaTuple(click.ParamType):
    """Comma-separated fixed-arity numeric flag value."""

    def __init__(self, label: str, arity: int, cast):
        self.name = label
        self._arity = arity
        self._cast = cast

    def convert(self, value, param, ctx):
        if isinstance(value, tuple):
            return value
        parts = str(value).split(",")
        if len(parts) != self._arity:
            self.fail(
                f"{param.name} expects {self._arity} comma-separated "
                f"values ({self.name}), got {value!r}", param, ctx)
        try:
            return tuple(self._cast(part) for part in parts)
        except ValueError:
            self.fail(f"{param.name}: could not parse {value!r} as "
                      f"{self.name}", param, ctx)


ICC_TYPE = _CommaTuple("a0,a1,a2", 3, float)
DIMS_TYPE = _CommaTuple("M,K,L", 3, int)


class _AxisType(click.ParamType):
    name = "param,lo,hi,steps"

    def convert(self, value, param, ctx):
        if isinstance(value, tuple):
            return value
        parts = str(value).split(",")
        if len(parts) != 4:
            self.fail(f"{param.name} expects param,lo,hi,steps, got "
                      f"{value!r}", param, ctx)
        try:
            return (parts[0], (float(parts[1]), float(parts[2])),
                    int(parts[3]))
        except ValueError:
            self.fail(f"{param.name}: could not parse {value!r}",
                      param, ctx)


AXIS_TYPE = _AxisType()


def _outcome_options(command):
    for option in reversed([
        click.option("--link", default="logit", show_default=True,
                     help="link function: logit, identity, or log"),
        click.option("--family", "variance_family", default="binomial",
                     show_default=True,
                     help="variance family: binomial, gaussian, poisson, "
                          "or custom"),
        click.option("--p0", type=float, required=True,
                     help="control-arm mean"),
        click.option("--p1", type=float, required=True,
                     help="intervention-arm mean"),
        click.option("--phi", type=float, default=1.0, show_default=True,
                     help="dispersion (gaussian/custom families)"),
        click.option("--kappa-c", type=float, default=None,
                     help="control-arm CV (custom family)"),
        click.option("--kappa-t", type=float, default=None,
                     help="intervention-arm CV (custom family)"),
    ]):
        command = option(command)
    return command


def _design_options(command):
    for option in reversed([
        click.option("--icc", type=ICC_TYPE, required=True,
                     help="correlation triple a0,a1,a2"),
        click.option("--dims", type=DIMS_TYPE, required=True,
                     help="per-cluster unit counts M,K,L"),
        click.option("--pi-c", type=float, default=0.5, show_default=True,
                     help="control allocation fraction"),
        click.option("--rand-level", type=click.IntRange(1, 4), default=4,
                     show_default=True, help="randomization level"),
        click.option("--alpha-level", type=float, default=0.05,
                     show_default=True, help="two-sided test level"),
    ]):
        command = option(command)
    return _outcome_options(command)


def _output_options(command):
    for option in reversed([
        click.option("--json", "as_json", is_flag=True,
                     help="emit machine-readable JSON"),
        click.option("--precision", type=click.IntRange(0, 15), default=4,
                     show_default=True, help="decimals in text output"),
    ]):
        command = option(command)
    return command


def _make_outcome(link, variance_family, p0, p1, phi, kappa_c, kappa_t):
    return OutcomeModel(link, variance_family, p0, p1, phi=phi,
                        kappa_c=kappa_c, kappa_t=kappa_t)


def _make_spec(icc, dims, pi_c, rand_level, alpha_level, outcome,
               n_clusters=None, target_power=0.8):
    return DesignSpec(
        dims=BlockDims(*dims),
        corr=CorrelationParams(*icc),
        outcome=outcome,
        n_clusters=n_clusters,
        pi_c=pi_c,
        rand_level=rand_level,
        alpha_level=alpha_level,
        target_power=target_power,
    )


def _emit(payload: dict, as_json: bool, precision: int) -> None:
    if as_json:
        click.echo(_json.dumps(payload, sort_keys=True))
        return
    for key, value in payload.items():
        if isinstance(value, float):
            click.echo(f"{key} = {value:.{precision}f}")
        elif isinstance(value, (list, tuple)):
            for item in value:
                click.echo(f"{key}: {item}")
        else:
            click.echo(f"{key} = {value}")


@click.group()
def cli():
    """Design calculators and Monte Carlo validation for four-level
    cluster randomized trials."""


@cli.command()
@_design_options
@click.option("--n", "n_clusters", type=int, required=True,
              help="number of clusters")
@_output_options
def power(link, variance_family, p0, p1, phi, kappa_c, kappa_t, icc, dims,
          pi_c, rand_level, alpha_level, n_clusters, as_json, precision):
    """Predicted power of the effect test at a given cluster count."""
    outcome = _make_outcome(link, variance_family, p0, p1, phi,
                            kappa_c, kappa_t)
    spec = _make_spec(icc, dims, pi_c, rand_level, alpha_level, outcome,
                      n_clusters=n_clusters)
    _emit({"power": predicted_power(spec)}, as_json, precision)


@cli.command()
@_design_options
@click.option("--target-power", type=float, default=0.8, show_default=True,
              help="power the design must reach")
@click.option("--real-valued", is_flag=True,
              help="continuous cluster count (no integrality)")
@_output_options
def n(link, variance_family, p0, p1, phi, kappa_c, kappa_t, icc, dims,
      pi_c, rand_level, alpha_level, target_power, real_valued, as_json,
      precision):
    """Smallest cluster count reaching the target power."""
    outcome = _make_outcome(link, variance_family, p0, p1, phi,
                            kappa_c, kappa_t)
    spec = _make_spec(icc, dims, pi_c, rand_level, alpha_level, outcome,
                      target_power=target_power)
    count = required_clusters(spec, real_valued=real_valued)
    _emit({
        "n_clusters": count,
        "power": predicted_power(spec, n_clusters=count),
    }, as_json, precision)


@cli.command("design-effect")
@_design_options
@click.option("--unclustered", type=int, default=None,
              help="unclustered sample size to inflate into a cluster "
                   "count")
@_output_options
def design_effect_cmd(link, variance_family, p0, p1, phi, kappa_c, kappa_t,
                      icc, dims, pi_c, rand_level, alpha_level, unclustered,
                      as_json, precision):
    """Variance inflation relative to individual randomization."""
    outcome = _make_outcome(link, variance_family, p0, p1, phi,
                            kappa_c, kappa_t)
    spec = _make_spec(icc, dims, pi_c, rand_level, alpha_level, outcome)
    payload = {"design_effect": design_effect(spec)}
    if unclustered is not None:
        route = clusters_via_design_effect(spec, unclustered)
        payload["clustered_patients"] = route.clustered_patients
        payload["n_clusters"] = route.n_clusters
    _emit(payload, as_json, precision)


@cli.command()
@_outcome_options
@_output_options
def allocate(link, variance_family, p0, p1, phi, kappa_c, kappa_t, as_json,
             precision):
    """Control fraction minimizing the effect-estimate variance."""
    outcome = _make_outcome(link, variance_family, p0, p1, phi,
                            kappa_c, kappa_t)
    _emit({"pi_c": optimal_allocation(outcome)}, as_json, precision)


@cli.command("validate-icc")
@click.option("--icc", type=ICC_TYPE, required=True,
              help="correlation triple a0,a1,a2")
@click.option("--dims", type=DIMS_TYPE, required=True,
              help="per-cluster unit counts M,K,L")
@_output_options
def validate_icc(icc, dims, as_json, precision):
    """Positive-definiteness check with the eigenvalue spectrum."""
    report = is_valid(CorrelationParams(*icc), BlockDims(*dims))
    spectrum = report.spectrum
    values = {f"lambda{i}": getattr(spectrum, f"lambda{i}")
              for i in (1, 2, 3, 4)}
    if as_json:
        _emit({
            "valid": report.valid,
            "spectrum": values,
            "violations": list(report.violations),
        }, True, precision)
        return
    payload = {"status": "valid" if report.valid else "invalid"}
    payload.update(values)
    if report.violations:
        payload["violation"] = list(report.violations)
    _emit(payload, False, precision)


@cli.command()
@_design_options
@click.option("--n", "n_clusters", type=int, required=True,
              help="number of clusters")
@click.option("--axis1", type=AXIS_TYPE, required=True,
              help="first sweep axis as param,lo,hi,steps")
@click.option("--axis2", type=AXIS_TYPE, required=True,
              help="second sweep axis as param,lo,hi,steps")
@click.option("--output", type=click.Path(dir_okay=False), default=None,
              help="write CSV here instead of stdout")
def grid(link, variance_family, p0, p1, phi, kappa_c, kappa_t, icc, dims,
         pi_c, rand_level, alpha_level, n_clusters, axis1, axis2, output):
    """Two-parameter power surface as long-format CSV for contouring.

    Columns: axis1 value, axis2 value, power (blank when the node is
    invalid), valid.  Values render at six decimals.
    """
    outcome = _make_outcome(link, variance_family, p0, p1, phi,
                            kappa_c, kappa_t)
    spec = _make_spec(icc, dims, pi_c, rand_level, alpha_level, outcome,
                      n_clusters=n_clusters)
    surface = sensitivity_grid(spec, axis1, axis2)
    lines = [f"{surface.param1},{surface.param2},power,valid"]
    for v1, v2, value, ok in surface.rows():
        cell = f"{value:.6f}" if ok else ""
        flag = "true" if ok else "false"
        lines.append(f"{v1:.6f},{v2:.6f},{cell},{flag}")
    text = "\n".join(lines) + "\n"
    if output is None:
        click.echo(text, nl=False)
    else:
        with open(output, "w") as handle:
            handle.write(text)


@cli.command()
@click.option("--scenarios", "scenario_path", envvar="CRT4_SCENARIOS",
              required=True, type=click.Path(exists=True, dir_okay=False),
              help="scenario file (also read from $CRT4_SCENARIOS)")
@click.option("--threads", type=click.IntRange(1, 64), default=1,
              show_default=True, help="parallel scenario workers")
@click.option("--json", "as_json", is_flag=True,
              help="emit the JSON report instead of CSV")
@click.option("--output", type=click.Path(dir_okay=False), default=None,
              help="write the report here instead of stdout")
def simulate(scenario_path, threads, as_json, output):
    """Run the Monte Carlo scenarios of a file and emit the report.

    Per-scenario failures are warnings on stderr; they appear in the
    JSON report's error list and do not stop the grid.
    """
    from .harness import load_scenarios, run_grid

    report = run_grid(load_scenarios(scenario_path), parallelism=threads)
    for failure in report.errors:
        click.echo(f"warning: scenario {failure['scenario']} failed: "
                   f"{failure['error']}", err=True)
    text = report.to_json() + "\n" if as_json else report.to_csv()
    if output is None:
        click.echo(text, nl=False)
    else:
        with open(output, "w") as handle:
            handle.write(text)


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except DomainError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except Exception as exc:  # convergence and other runtime failures
        click.echo(f"error: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Closed-form design calculators for four-level cluster randomized trials.

The Wald test of the treatment effect b (on the link scale) against a t
reference with N - 2 degrees of freedom has predicted power

    1 - gamma = F_t( t_{a/2, N-2} + |b| sqrt(N / sigma_b^2), N-2 )

where t_{a/2, N-2} is the lower-tail quantile (negative), so power collapses
to a/2 at b = 0.  The variance of the scaled effect estimate under
randomization at level r with control fraction pi_c is

    sigma_b^2 = (lambda_r / (m k l)) (rho_c^2 / pi_c + rho_t^2 / (1 - pi_c))
                + (lambda_4 - lambda_r) (rho_c - rho_t)^2 / (m k l)

with lambda_r the correlation eigenvalue matched to the randomization level
and rho = mu kappa g'(mu) the arm-specific variability coefficient.  The
second term vanishes identically for r = 4.  Required cluster counts solve
the power inequality iteratively because both sides depend on N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import special, stats

from .correlation import BlockDims, CorrelationParams, eigen_spectrum, require_valid
from .errors import DomainError, NoSolutionError
from .families import get_link, marginal_kappa

# Solver caps and defaults.
MAX_CLUSTERS = 10**6
MIN_CLUSTERS = 3          # t reference needs N - 2 >= 1

GRID_PARAMS = ("alpha0", "alpha1", "alpha2", "p0", "p1", "m", "k", "l", "n")
_INT_PARAMS = ("m", "k", "l", "n")


@dataclass(frozen=True)
class OutcomeModel:
    """Marginal outcome description: link, variance family, arm means.

    For the custom family the arm coefficients of variation kappa_c/kappa_t
    are supplied directly; otherwise they derive from the family.  binomial
    and poisson pin the dispersion phi at 1.
    """

    link: str
    variance_family: str
    mu_c: float
    mu_t: float
    phi: float = 1.0
    kappa_c: float | None = None
    kappa_t: float | None = None

    def __post_init__(self):
        link = get_link(self.link)
        if self.variance_family not in ("gaussian", "binomial", "poisson", "custom"):
            raise DomainError(
                f"unknown variance family {self.variance_family!r}"
            )
        if not (self.phi > 0 and math.isfinite(self.phi)):
            raise DomainError(f"phi must be positive, got {self.phi!r}")
        for arm, mu in (("control", self.mu_c), ("treatment", self.mu_t)):
            if not math.isfinite(mu):
                raise DomainError(f"{arm} mean must be finite, got {mu!r}")
            if not link.domain(mu):
                raise DomainError(
                    f"{arm} mean {mu} outside the domain of the {self.link} link"
                )
        if self.variance_family == "binomial":
            if not (0.0 < self.mu_c < 1.0 and 0.0 < self.mu_t < 1.0):
                raise DomainError("binomial means must lie strictly in (0, 1)")
            if self.phi != 1.0:
                raise DomainError("binomial dispersion is fixed at phi = 1")
        if self.variance_family == "poisson":
            if not (self.mu_c > 0 and self.mu_t > 0):
                raise DomainError("poisson means must be positive")
            if self.phi != 1.0:
                raise DomainError("poisson dispersion is fixed at phi = 1")
        if self.variance_family == "custom":
            if self.kappa_c is None or self.kappa_t is None:
                raise DomainError("custom variance family requires kappa_c and kappa_t")
            if not (self.kappa_c > 0 and self.kappa_t > 0):
                raise DomainError("kappa values must be positive")

    def kappa(self, arm: str) -> float:
        mu = self.mu_c if arm == "control" else self.mu_t
        if self.variance_family == "custom":
            return self.kappa_c if arm == "control" else self.kappa_t
        return marginal_kappa(self.variance_family, mu, self.phi)

    def rho(self, arm: str) -> float:
        """Arm variability coefficient rho = mu * kappa * g'(mu).

        For the gaussian family with identity link mu * kappa collapses to
        sqrt(phi), so that value is returned directly and a zero mean is not
        a singularity.
        """
        if self.variance_family == "gaussian" and self.link == "identity":
            return math.sqrt(self.phi)
        mu = self.mu_c if arm == "control" else self.mu_t
        value = mu * self.kappa(arm) * float(get_link(self.link).deriv(mu))
        if not (math.isfinite(value) and value > 0):
            raise DomainError(
                f"derived rho for the {arm} arm is not finite and positive "
                f"(got {value!r}); check means against link and family"
            )
        return value


@dataclass(frozen=True)
class EffectSize:
    """Treatment effect on the link scale with the mean-model components."""

    b: float
    beta1: float
    beta2: float


@dataclass(frozen=True)
class DesignSpec:
    """Complete design description for the calculators.

    n_clusters may be None while solving for the required count.  pi_c is
    the fraction allocated to the control arm; rand_level is the hierarchy
    level at which treatment is assigned (4 = whole clusters).
    """

    dims: BlockDims
    corr: CorrelationParams
    outcome: OutcomeModel
    n_clusters: int | None = None
    pi_c: float = 0.5
    rand_level: int = 4
    alpha_level: float = 0.05
    target_power: float = 0.80

    def __post_init__(self):
        if not (0.0 < self.pi_c < 1.0):
            raise DomainError(f"pi_c must be in (0, 1), got {self.pi_c!r}")
        if self.rand_level not in (1, 2, 3, 4):
            raise DomainError(f"rand_level must be 1..4, got {self.rand_level!r}")
        if not (0.0 < self.alpha_level < 1.0):
            raise DomainError(f"alpha_level must be in (0, 1), got {self.alpha_level!r}")
        if self.n_clusters is not None and self.n_clusters < MIN_CLUSTERS:
            raise DomainError(
                f"n_clusters must be >= {MIN_CLUSTERS} for a t reference with "
                f"N - 2 degrees of freedom, got {self.n_clusters}"
            )

    def with_(self, **changes) -> "DesignSpec":
        return replace(self, **changes)


def effect_size(outcome: OutcomeModel) -> EffectSize:
    """Effect b = g(mu_t) - g(mu_c) plus the implied (beta1, beta2)."""
    link = get_link(outcome.link)
    beta1 = float(link.value(outcome.mu_c))
    b = float(link.value(outcome.mu_t)) - beta1
    return EffectSize(b=b, beta1=beta1, beta2=b)


@lru_cache(maxsize=512)
def _t_lower_quantile(alpha_half: float, df: float) -> float:
    return float(special.stdtrit(df, alpha_half))


def variance_sigma_beta2(spec: DesignSpec) -> float:
    """Variance of the scaled effect estimate, sqrt(N) * beta2_hat."""
    report = require_valid(spec.corr, spec.dims)
    spectrum = report.spectrum
    lam_r = spectrum.for_level(spec.rand_level)
    n_obs = spec.dims.size
    rho_c = spec.outcome.rho("control")
    rho_t = spec.outcome.rho("treatment")
    value = lam_r / n_obs * (rho_c**2 / spec.pi_c + rho_t**2 / (1.0 - spec.pi_c))
    if spec.rand_level < 4:
        value += (spectrum.lambda4 - lam_r) * (rho_c - rho_t) ** 2 / n_obs
    return value


def predicted_power(spec: DesignSpec, n_clusters: int | None = None) -> float:
    """Power of the two-sided Wald t-test at the given cluster count."""
    n = spec.n_clusters if n_clusters is None else n_clusters
    if n is None:
        raise DomainError("predicted_power needs n_clusters on the spec or as an argument")
    if n < MIN_CLUSTERS:
        raise DomainError(f"n_clusters must be >= {MIN_CLUSTERS}, got {n}")
    sigma2 = variance_sigma_beta2(spec)
    b = effect_size(spec.outcome).b
    df = n - 2
    arg = _t_lower_quantile(spec.alpha_level / 2.0, df) + abs(b) * math.sqrt(n / sigma2)
    return float(special.stdtr(df, arg))


def _allocation_granularity(pi_c: float) -> int:
    """Cluster-count step that keeps pi_c * N integral.

    Applied at every randomization level: even with within-cluster
    allocation, reported designs keep the total split pi_c * N whole
    (N even for pi_c = 1/2).  Irrational-looking pi_c values fall back
    to granularity 1.
    """
    frac = Fraction(pi_c).limit_denominator(1000)
    if abs(float(frac) - pi_c) > 1e-9:
        return 1
    return frac.denominator


def required_clusters(spec: DesignSpec, *, real_valued: bool = False,
                      max_clusters: int = MAX_CLUSTERS) -> int | float:
    """Smallest allocation-feasible N whose predicted power meets the target.

    Solved iteratively: start from the normal-approximation count, round up
    to the allocation granularity, then walk until the smallest feasible N
    with predicted_power(N) >= target_power is isolated.  real_valued=True
    instead solves the continuous crossing point and returns a float.
    """
    if not (spec.alpha_level < spec.target_power < 1.0):
        raise DomainError(
            f"target_power must be in (alpha_level, 1), got {spec.target_power!r}"
        )
    b = effect_size(spec.outcome).b
    if b == 0.0:
        raise DomainError("effect size is zero; no cluster count reaches the target")
    sigma2 = variance_sigma_beta2(spec)

    def power(n: float) -> float:
        df = n - 2
        arg = _t_lower_quantile(spec.alpha_level / 2.0, df) + abs(b) * math.sqrt(n / sigma2)
        return float(special.stdtr(df, arg))

    if real_valued:
        from scipy.optimize import brentq

        lo = 2.0001
        if power(lo) >= spec.target_power:
            return lo
        hi = 4.0
        while power(hi) < spec.target_power:
            hi *= 2.0
            if hi > max_clusters:
                raise NoSolutionError(
                    f"no cluster count below {max_clusters} reaches the target power"
                )
        return float(brentq(lambda n: power(n) - spec.target_power, lo, hi, xtol=1e-9))

    step = _allocation_granularity(spec.pi_c)
    n_min = step * math.ceil(MIN_CLUSTERS / step)
    z_a = stats.norm.ppf(spec.alpha_level / 2.0)
    z_g = stats.norm.ppf(1.0 - spec.target_power)
    n0 = (abs(z_a) + abs(z_g)) ** 2 * sigma2 / b**2
    n = max(n_min, step * math.ceil(n0 / step))
    while power(n) < spec.target_power:
        n += step
        if n > max_clusters:
            raise NoSolutionError(
                f"no cluster count below {max_clusters} reaches the target power"
            )
    while n - step >= n_min and power(n - step) >= spec.target_power:
        n -= step
    return int(n)


def design_effect(spec: DesignSpec) -> float:
    """Variance inflation relative to an individually randomized trial.

    Equals lambda_r plus a term driven by the squared gap of the arm
    variability coefficients; reduces to lambda_4 exactly for r = 4 and to
    lambda_r exactly when rho_c = rho_t.
    """
    report = require_valid(spec.corr, spec.dims)
    spectrum = report.spectrum
    lam_r = spectrum.for_level(spec.rand_level)
    rho_c = spec.outcome.rho("control")
    rho_t = spec.outcome.rho("treatment")
    base = rho_c**2 / spec.pi_c + rho_t**2 / (1.0 - spec.pi_c)
    return lam_r + (spectrum.lambda4 - lam_r) * (rho_c - rho_t) ** 2 / base


@dataclass(frozen=True)
class DesignEffectRoute:
    """Cluster count reached by inflating an unclustered patient count."""

    design_effect: float
    clustered_patients: int
    n_clusters: int


def clusters_via_design_effect(spec: DesignSpec, n_unclustered: int) -> DesignEffectRoute:
    """Scale an individually randomized sample size by the design effect.

    The unclustered count is multiplied by the design effect, rounded up to
    whole patients, divided by the cluster size and rounded up to an
    allocation-feasible cluster count.
    """
    if n_unclustered < 1:
        raise DomainError(f"n_unclustered must be >= 1, got {n_unclustered}")
    de = design_effect(spec)
    patients = math.ceil(n_unclustered * de)
    step = _allocation_granularity(spec.pi_c)
    n = math.ceil(patients / spec.dims.size)
    n = step * math.ceil(n / step)
    return DesignEffectRoute(design_effect=de, clustered_patients=patients, n_clusters=n)


def optimal_allocation(outcome: OutcomeModel) -> float:
    """Control fraction minimizing the effect-estimate variance.

    The stationary points of rho_c^2 / pi + rho_t^2 / (1 - pi) are
    (rho_c^2 +- rho_c rho_t) / (rho_c^2 - rho_t^2); exactly one lies in
    (0, 1).  Independent of the ICC triple and the randomization level.
    """
    rho_c = outcome.rho("control")
    rho_t = outcome.rho("treatment")
    if rho_c == rho_t:
        return 0.5
    denom = rho_c**2 - rho_t**2
    for root in ((rho_c**2 + rho_c * rho_t) / denom, (rho_c**2 - rho_c * rho_t) / denom):
        if 0.0 < root < 1.0:
            return root
    raise DomainError("no allocation root in (0, 1); rho values are degenerate")


@dataclass(frozen=True)
class SensitivityGrid:
    """Power surface over two spec parameters with a validity mask.

    power holds NaN where the node is invalid (non positive definite ICC
    triple or a link-domain violation); valid is the matching boolean mask.
    """

    param1: str
    values1: tuple[float, ...]
    param2: str
    values2: tuple[float, ...]
    power: np.ndarray
    valid: np.ndarray

    def rows(self):
        """Flat (value1, value2, power-or-None, valid) rows, axis1-major."""
        for i, v1 in enumerate(self.values1):
            for j, v2 in enumerate(self.values2):
                p = float(self.power[i, j]) if self.valid[i, j] else None
                yield (v1, v2, p, bool(self.valid[i, j]))


def _axis_values(param: str, lo: float, hi: float, steps: int):
    if param not in GRID_PARAMS:
        raise DomainError(f"grid parameter must be one of {GRID_PARAMS}, got {param!r}")
    if steps < 1:
        raise DomainError(f"axis needs at least one step, got {steps}")
    raw = np.linspace(lo, hi, steps)
    if param in _INT_PARAMS:
        return tuple(int(round(v)) for v in raw)
    return tuple(float(v) for v in raw)


def _apply_axis(spec: DesignSpec, param: str, value) -> DesignSpec:
    if param in ("alpha0", "alpha1", "alpha2"):
        corr = replace(spec.corr, **{param: float(value)})
        return spec.with_(corr=corr)
    if param == "p0":
        return spec.with_(outcome=replace(spec.outcome, mu_c=float(value)))
    if param == "p1":
        return spec.with_(outcome=replace(spec.outcome, mu_t=float(value)))
    if param in ("m", "k", "l"):
        dims = replace(spec.dims, **{param: int(value)})
        return spec.with_(dims=dims)
    if param == "n":
        return spec.with_(n_clusters=int(value))
    raise DomainError(f"unsupported grid parameter {param!r}")


def sensitivity_grid(spec: DesignSpec, axis1, axis2) -> SensitivityGrid:
    """Evaluate predicted power over a two-parameter grid.

    Each axis is (param, (lo, hi), steps) with param drawn from GRID_PARAMS.
    Invalid nodes are masked rather than raised so that contour plots can
    render the feasible region.
    """
    p1, (lo1, hi1), s1 = axis1
    p2, (lo2, hi2), s2 = axis2
    values1 = _axis_values(p1, lo1, hi1, s1)
    values2 = _axis_values(p2, lo2, hi2, s2)
    power = np.full((len(values1), len(values2)), np.nan)
    valid = np.zeros((len(values1), len(values2)), dtype=bool)
    for i, v1 in enumerate(values1):
        for j, v2 in enumerate(values2):
            try:
                node = _apply_axis(_apply_axis(spec, p1, v1), p2, v2)
                power[i, j] = predicted_power(node)
                valid[i, j] = True
            except (DomainError, ValueError):
                # Node is outside the feasible region: mask, do not error.
                continue
    return SensitivityGrid(
        param1=p1, values1=values1, param2=p2, values2=values2,
        power=power, valid=valid,
    )

"""Link functions and variance families for the marginal mean model.

A link maps the mean mu to the linear predictor eta = g(mu); the variance
family gives var(Y) = phi * nu(mu).  Estimation needs g inverse and the mean
derivative d mu / d eta expressed in terms of mu; design needs g, g' and the
marginal coefficient of variation kappa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .errors import DomainError


@dataclass(frozen=True)
class Link:
    name: str
    value: Callable        # g(mu) -> eta
    inverse: Callable      # g^{-1}(eta) -> mu
    deriv: Callable        # dg/dmu at mu
    mu_eta: Callable       # dmu/deta expressed as a function of mu
    domain: Callable       # scalar mu -> bool


def _identity_domain(mu):
    return np.isfinite(mu)


def _logit_domain(mu):
    return 0.0 < mu < 1.0


def _log_domain(mu):
    return mu > 0.0


LINKS = {
    "identity": Link(
        name="identity",
        value=lambda mu: mu,
        inverse=lambda eta: eta,
        deriv=lambda mu: np.ones_like(np.asarray(mu, dtype=float)),
        mu_eta=lambda mu: np.ones_like(np.asarray(mu, dtype=float)),
        domain=_identity_domain,
    ),
    "logit": Link(
        name="logit",
        value=lambda mu: np.log(mu / (1.0 - mu)),
        inverse=lambda eta: special.expit(np.asarray(eta, dtype=float)),
        deriv=lambda mu: 1.0 / (mu * (1.0 - mu)),
        mu_eta=lambda mu: mu * (1.0 - mu),
        domain=_logit_domain,
    ),
    "log": Link(
        name="log",
        value=lambda mu: np.log(mu),
        inverse=lambda eta: np.exp(eta),
        deriv=lambda mu: 1.0 / mu,
        mu_eta=lambda mu: mu,
        domain=_log_domain,
    ),
}


@dataclass(frozen=True)
class VarianceFamily:
    name: str
    nu: Callable            # variance function nu(mu)
    fixed_phi: bool         # dispersion pinned at 1 (binomial, poisson)
    domain: Callable        # scalar mu -> bool


VARIANCE_FAMILIES = {
    "gaussian": VarianceFamily(
        name="gaussian",
        nu=lambda mu: np.ones_like(np.asarray(mu, dtype=float)),
        fixed_phi=False,
        domain=_identity_domain,
    ),
    "binomial": VarianceFamily(
        name="binomial",
        nu=lambda mu: mu * (1.0 - mu),
        fixed_phi=True,
        domain=_logit_domain,
    ),
    "poisson": VarianceFamily(
        name="poisson",
        nu=lambda mu: np.asarray(mu, dtype=float),
        fixed_phi=True,
        domain=_log_domain,
    ),
}


def get_link(name: str) -> Link:
    try:
        return LINKS[name]
    except KeyError:
        raise DomainError(f"unknown link {name!r}; choose from {sorted(LINKS)}") from None


def get_variance_family(name: str) -> VarianceFamily:
    if name == "custom":
        raise DomainError("custom variance family has no fitting support; "
                          "it is design-only via supplied kappa values")
    try:
        return VARIANCE_FAMILIES[name]
    except KeyError:
        raise DomainError(
            f"unknown variance family {name!r}; choose from "
            f"{sorted(VARIANCE_FAMILIES)}"
        ) from None


def marginal_kappa(variance_family: str, mu: float, phi: float) -> float:
    """Marginal coefficient of variation kappa = sqrt(phi * nu(mu)) / mu."""
    if variance_family == "binomial":
        return math.sqrt((1.0 - mu) / mu)
    if variance_family == "poisson":
        return math.sqrt(1.0 / mu)
    if variance_family == "gaussian":
        if mu == 0.0:
            raise DomainError("kappa for the gaussian family requires a nonzero mean")
        return math.sqrt(phi) / abs(mu)
    raise DomainError(f"kappa is undefined for variance family {variance_family!r}")

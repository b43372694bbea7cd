"""Shared fixtures: the two worked trial designs used across the suite."""

import pytest

from crt4.correlation import BlockDims, CorrelationParams
from crt4.design import DesignSpec, OutcomeModel


@pytest.fixture
def reshape_spec():
    """Therapy-education trial: binary outcome, logit link, 22 municipalities."""
    return DesignSpec(
        dims=BlockDims(3, 3, 36),
        corr=CorrelationParams(0.05, 0.04, 0.03),
        outcome=OutcomeModel(link="logit", variance_family="binomial",
                             mu_c=0.785, mu_t=0.88),
        n_clusters=22,
    )


@pytest.fixture
def hali_spec():
    """Literacy trial: continuous outcome on the identity link, 36 schools."""
    return DesignSpec(
        dims=BlockDims(4, 25, 2),
        corr=CorrelationParams(0.445, 0.104, 0.008),
        outcome=OutcomeModel(link="identity", variance_family="gaussian",
                             mu_c=0.0, mu_t=0.19, phi=1.0),
        n_clusters=36,
    )

"""Shared fixtures: small scenario sets and utilities sized for fast tests."""

import numpy as np
import pytest

from sysrisk.scenario import (
    CommonShockBeta,
    CorrelatedGaussian,
    DistributionSpec,
    FixedSum,
    ScenarioSet,
    generate,
)
from sysrisk.utility import PairedExponential

ALPHA3 = (1.0, 2.0, 4.0)


@pytest.fixture
def alpha3():
    return np.array(ALPHA3)


@pytest.fixture
def util3(alpha3):
    return PairedExponential(alpha3)


@pytest.fixture
def gauss3():
    """Small equicorrelated Gaussian set: 3 agents, 2000 scenarios."""
    spec = DistributionSpec(
        kind=CorrelatedGaussian(pairwise_correlation=0.2, stdev=0.5),
        n_agents=3,
        n_samples=2000,
        seed=7,
    )
    return generate(spec)


@pytest.fixture
def fixed3():
    """Fixed-sum set: every scenario totals 4.5."""
    spec = DistributionSpec(
        kind=FixedSum(base=CorrelatedGaussian(stdev=0.5), target_sum=4.5),
        n_agents=3,
        n_samples=500,
        seed=11,
    )
    return generate(spec)


@pytest.fixture
def beta3():
    spec = DistributionSpec(kind=CommonShockBeta(), n_agents=3, n_samples=1500, seed=13)
    return generate(spec)


@pytest.fixture
def const1():
    """One-agent deterministic set X = c with c = 0.8."""
    return ScenarioSet(data=np.full((64, 1), 0.8))

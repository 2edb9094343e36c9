"""
Types for the nwmclust library.
"""

from enum import Enum
from typing import Callable, Optional, Sequence, Tuple, Union
from pathlib import Path

import numpy as np

# general types
PathT = Union[str, Path]
OptString = Optional[str]
IndexT = Sequence[int]
Indices = Tuple[int, ...]

# numeric types
ArrayT = np.ndarray
WeightFuncT = Callable[[float, float], float]


class PenaltyFamily(str, Enum):
    """Non-concave penalty families for the sparse fit."""

    SCAD = 'scad'
    MCP = 'mcp'


class WeightFamily(str, Enum):
    """What the edge weights of an implicit network are computed from."""

    F_ON_BETA = 'beta'
    F_ON_RHO = 'rho'
    ANOVA_SS = 'anova'


class FunctionId(str, Enum):
    """Identifier of the symmetric edge-weight function."""

    F1 = 'f1'
    F2 = 'f2'
    CUSTOM = 'custom'


class RhoScale(str, Enum):
    """Scale on which partial correlations feed the weight function."""

    TRANSFORMED = 'transformed'
    RAW = 'raw'


class NwmKind(str, Enum):
    """Network-wide metric computed per vertex."""

    DEGREE = 'degree'
    CLUSTERING = 'clustering'


class CovTarget(str, Enum):
    """Quantity whose limiting covariance is estimated."""

    BETA = 'beta'
    RHO = 'rho'
    DEGREE = 'degree'
    CLUSTERING = 'clustering'


class CovMethod(str, Enum):
    """How a covariance estimate was obtained."""

    PLUGIN = 'plugin'
    BOOTSTRAP = 'bootstrap'
    MONTE_CARLO_ORACLE = 'monte_carlo_oracle'


class ExperimentId(str, Enum):
    """Simulation experiments reproducible with ``nwmclust reproduce``."""

    UNSUP_VS_SEQ = 'unsup-vs-seq'
    ICC_K = 'icc-k'
    SMALLP_SEQ = 'smallp-seq'
    NWM_BIAS = 'nwm-bias'
    WRONG_K = 'wrong-k'
    COV_TIMING = 'cov-timing'
    CONSISTENCY = 'consistency'


def nwm_target(kind: NwmKind) -> CovTarget:
    """Return the covariance target matching an NWM kind."""
    return CovTarget.DEGREE if kind is NwmKind.DEGREE else CovTarget.CLUSTERING

"""
Model-estimated post-selection resampling: bootstrap covariances of the
network-wide metrics with the selected support held fixed.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from joblib import Parallel, delayed

from nwmclust._types import ArrayT, CovMethod, CovTarget, FunctionId, NwmKind, RhoScale, WeightFamily, nwm_target
from nwmclust.asymptotics import CovarianceEstimate
from nwmclust.data_model import Dataset, RngStream
from nwmclust.errors import BootstrapError, NumericalError, ValidationError
from nwmclust.network_weights import WeightFunction, build_network, partial_correlations
from nwmclust.nwm import compute_nwm
from nwmclust.penalized_selection import least_squares

logger = logging.getLogger(__name__)

MAX_REDRAWS = 50


@dataclass(frozen=True)
class BootstrapConfig:
    """Number of bootstrap replicates, their random stream and parallelism."""

    B: int = 500
    rng: RngStream = RngStream(seed=0)
    n_jobs: int = 1

    def __post_init__(self):
        if self.B < 2:
            raise ValidationError(f'bootstrap needs B >= 2, got {self.B}', stage='config')


@dataclass(frozen=True)
class MetricSpec:
    """Everything needed to turn (y, X_S) into a metric vector."""

    family: WeightFamily
    f_id: Union[str, FunctionId, WeightFunction]
    kind: Optional[NwmKind] = None
    rho_scale: RhoScale = RhoScale.TRANSFORMED
    standardized: bool = False
    ordered_pairs: bool = True

    def estimates(self, y: ArrayT, X: ArrayT) -> ArrayT:
        """Vertex values: OLS coefficients or partial correlations."""
        if WeightFamily(self.family) is WeightFamily.F_ON_RHO:
            return partial_correlations(y, X).on_scale(self.rho_scale)
        if WeightFamily(self.family) is WeightFamily.F_ON_BETA:
            return least_squares(X, y)[0]
        raise ValidationError('ANOVA networks have no bootstrap covariance', stage='bootstrap')

    def evaluate(self, y: ArrayT, X: ArrayT) -> ArrayT:
        """Metric vector, or the vertex values themselves when kind is None."""
        values = self.estimates(y, X)
        if self.kind is None:
            return values
        net = build_network(values, self.f_id, self.family, rho_scale=self.rho_scale)
        return compute_nwm(net, self.kind, self.standardized, self.ordered_pairs).values

    @property
    def target(self) -> CovTarget:
        """Covariance target of the evaluated vector."""
        if self.kind is not None:
            return nwm_target(self.kind)
        return CovTarget.RHO if WeightFamily(self.family) is WeightFamily.F_ON_RHO else CovTarget.BETA


def _replicate(d2_rows: Dataset, spec: MetricSpec, rng: RngStream) -> ArrayT:
    """One bootstrap draw, redrawing singular resamples."""
    gen = rng.generator()
    m = d2_rows.n
    last_error: Optional[Exception] = None
    for _ in range(MAX_REDRAWS + 1):
        idx = gen.integers(0, m, size=m)
        try:
            return spec.evaluate(d2_rows.y[idx], d2_rows.X[idx])
        except NumericalError as err:
            logger.warning('singular bootstrap resample redrawn: %s', err)
            last_error = err
    msg = f'{MAX_REDRAWS} redraws of replicate {rng.path} were all singular: {last_error}'
    raise BootstrapError(msg, hint='increase the inference sample or shrink the active set')


def mepsrs_covariance(
    d2_rows: Dataset,
    kind: Optional[NwmKind],
    f_id: Union[str, FunctionId, WeightFunction],
    family: WeightFamily,
    cfg: BootstrapConfig,
    rho_scale: RhoScale = RhoScale.TRANSFORMED,
    standardized: bool = False,
    ordered_pairs: bool = True,
) -> CovarianceEstimate:
    """Bootstrap covariance of the metric vector on the inference half.

    Rows ``(y, x)`` are resampled jointly with replacement; replicate j uses
    the stream ``cfg.rng.child(j)`` and the draws are reduced in j order, so
    the result does not depend on `cfg.n_jobs`.

    :param d2_rows: inference half restricted to the active columns
    :param kind: NwmKind, or None for the covariance of the vertex values
    :return: CovarianceEstimate of ``sqrt(m)(metric - target)``, m = rows
    :raises: ValidationError with too few rows,
             BootstrapError when a replicate exhausts its redraws
    """
    spec = MetricSpec(family, f_id, kind, rho_scale, standardized, ordered_pairs)
    m, q = d2_rows.n, d2_rows.p
    if m < q + 2:
        raise ValidationError(f'{m} rows are too few to bootstrap {q} predictors', stage='bootstrap')

    rows = np.column_stack([d2_rows.y, d2_rows.X])
    if np.all(rows == rows[0]):
        logger.warning('all rows identical: bootstrap distribution is degenerate')
        return CovarianceEstimate(spec.target, np.zeros((q, q)), CovMethod.BOOTSTRAP, n_eff=m)

    draws = Parallel(n_jobs=cfg.n_jobs, prefer='threads')(
        delayed(_replicate)(d2_rows, spec, cfg.rng.child(j)) for j in range(cfg.B)
    )
    draws = np.vstack(draws)
    sigma = np.atleast_2d(np.cov(draws, rowvar=False, bias=True)) * m
    logger.info('bootstrap covariance from %d replicates on %d rows', cfg.B, m)
    return CovarianceEstimate(spec.target, sigma, CovMethod.BOOTSTRAP, n_eff=m)

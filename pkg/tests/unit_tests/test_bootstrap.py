"""
Unit tests for the .. module:: nwmclust.bootstrap module.
"""

import numpy as np
import pytest

from nwmclust._types import CovMethod, CovTarget, NwmKind, RhoScale, WeightFamily
from nwmclust.asymptotics import cov_nwm_rho, cov_rho, delta_S, elimination_matrix, grad_L_D
from nwmclust.bootstrap import BootstrapConfig, MetricSpec, mepsrs_covariance
from nwmclust.data_model import Dataset, RngStream
from nwmclust.errors import ValidationError
from nwmclust.network_weights import build_network, partial_correlations
from nwmclust.nwm import degree_centrality
from nwmclust.penalized_selection import ActiveSet, refit_ols
from nwmclust.simulation import SimDesign, generate
from . import (
    small_data,  # do not remove small_data - used via injection
)


def test_bootstrap_config_minimum():
    with pytest.raises(ValidationError):
        BootstrapConfig(B=1)


def test_metric_spec_targets():
    assert MetricSpec(WeightFamily.F_ON_RHO, 'f1').target is CovTarget.RHO
    assert MetricSpec(WeightFamily.F_ON_BETA, 'f1').target is CovTarget.BETA
    assert MetricSpec(WeightFamily.F_ON_RHO, 'f1', NwmKind.CLUSTERING).target is CovTarget.CLUSTERING


def test_metric_spec_rejects_anova(small_data: Dataset):
    with pytest.raises(ValidationError):
        MetricSpec(WeightFamily.ANOVA_SS, 'f1').estimates(small_data.y, small_data.X)


def test_mepsrs_reproducible_across_workers(small_data: Dataset):
    one = mepsrs_covariance(small_data, NwmKind.DEGREE, 'f1', WeightFamily.F_ON_RHO,
                            BootstrapConfig(B=50, rng=RngStream(seed=3), n_jobs=1))
    two = mepsrs_covariance(small_data, NwmKind.DEGREE, 'f1', WeightFamily.F_ON_RHO,
                            BootstrapConfig(B=50, rng=RngStream(seed=3), n_jobs=2))
    assert np.array_equal(one.sigma, two.sigma)
    assert one.method is CovMethod.BOOTSTRAP
    assert one.target is CovTarget.DEGREE
    assert one.n_eff == small_data.n


def test_mepsrs_seed_matters(small_data: Dataset):
    a = mepsrs_covariance(small_data, None, 'f1', WeightFamily.F_ON_RHO, BootstrapConfig(B=20, rng=RngStream(seed=1)))
    b = mepsrs_covariance(small_data, None, 'f1', WeightFamily.F_ON_RHO, BootstrapConfig(B=20, rng=RngStream(seed=2)))
    assert a.sigma.shape == (3, 3)
    assert not np.array_equal(a.sigma, b.sigma)


def test_mepsrs_beta_close_to_plugin(small_data: Dataset):
    cov = mepsrs_covariance(small_data, None, 'f1', WeightFamily.F_ON_BETA,
                            BootstrapConfig(B=400, rng=RngStream(seed=0)))
    fit = refit_ols(small_data, range(small_data.n), ActiveSet(indices=(0, 1, 2)))
    plugin = fit.sigma2_hat * fit.n_rows * np.diag(fit.xtx_inv)
    assert np.allclose(np.diag(cov.sigma), plugin, rtol=0.35)


def test_mepsrs_identical_rows():
    rows = np.tile([1.0, 2.0, 3.0], (6, 1))
    d = Dataset(y=rows[:, 0], X=rows[:, 1:], names=('a', 'b'))
    cov = mepsrs_covariance(d, NwmKind.DEGREE, 'f1', WeightFamily.F_ON_RHO, BootstrapConfig(B=10))
    assert np.array_equal(cov.sigma, np.zeros((2, 2)))


def test_mepsrs_too_few_rows():
    gen = np.random.default_rng(0)
    d = Dataset(y=gen.standard_normal(4), X=gen.standard_normal((4, 3)), names=('a', 'b', 'c'))
    with pytest.raises(ValidationError):
        mepsrs_covariance(d, None, 'f1', WeightFamily.F_ON_RHO, BootstrapConfig(B=10))


def test_mepsrs_raw_scale_is_twice_transformed(small_data: Dataset):
    cfg = BootstrapConfig(B=30, rng=RngStream(seed=4))
    raw = mepsrs_covariance(small_data, None, 'f1', WeightFamily.F_ON_RHO, cfg, rho_scale=RhoScale.RAW)
    transformed = mepsrs_covariance(small_data, None, 'f1', WeightFamily.F_ON_RHO, cfg)
    assert np.allclose(raw.sigma, 4 * transformed.sigma)


def _degrees(d: Dataset) -> np.ndarray:
    pc = partial_correlations(d.y, d.X)
    return degree_centrality(build_network(pc.rho, 'f1', WeightFamily.F_ON_RHO)).values


@pytest.mark.slow
def test_plugin_bootstrap_and_monte_carlo_agree():
    design = SimDesign(n=2000, p=3, beta=(1.0, -0.5, 2.0))
    rng = RngStream(seed=5)
    draws = np.array([_degrees(generate(design, rng.child(r))) for r in range(2000)])
    monte_carlo = np.cov(draws, rowvar=False) * design.n

    d = generate(design, RngStream(seed=6))
    pc = partial_correlations(d.y, d.X)
    covr = cov_rho(pc, delta_S(np.column_stack([d.y, d.X])), elimination_matrix(4), n_eff=d.n)
    plugin = cov_nwm_rho(covr, grad_L_D(pc.rho, 'f1'), NwmKind.DEGREE).sigma
    boot = mepsrs_covariance(d, NwmKind.DEGREE, 'f1', WeightFamily.F_ON_RHO,
                             BootstrapConfig(B=500, rng=RngStream(seed=7))).sigma

    def distance(a, b):
        return np.linalg.norm(a - b) / np.linalg.norm(b)

    assert distance(plugin, monte_carlo) <= 0.2
    assert distance(boot, monte_carlo) <= 0.2
    assert distance(boot, plugin) <= 0.2

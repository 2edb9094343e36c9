"""
Unit tests for the .. module:: nwmclust.asymptotics module.
"""

import numpy as np
import pytest

from nwmclust._types import CovMethod, CovTarget, NwmKind, PenaltyFamily, RhoScale, WeightFamily
from nwmclust.asymptotics import (
    CovarianceEstimate,
    check_plugin_dimension,
    cov_nwm_beta,
    cov_nwm_rho,
    cov_rho,
    delta_S,
    elimination_matrix,
    finite_difference_jacobian,
    gaussian_delta_S,
    grad_h,
    grad_L_C,
    grad_L_D,
    hessian_C,
    hessian_D,
    penalized_bias_diagnostics,
    vec,
    vech_index,
)
from nwmclust.data_model import Dataset
from nwmclust.errors import NumericalError, ValidationError
from nwmclust.network_weights import PartialCorrelations, build_network, rho_from_gamma
from nwmclust.nwm import compute_nwm
from nwmclust.penalized_selection import ActiveSet, PenaltyConfig, refit_ols
from . import (
    small_data,  # do not remove small_data - used via injection
    ORACLE_GAMMA,
    ORACLE_SIGMA,
)

VALUES = np.array([0.15, 0.35, 0.5, 0.72, 0.88])


def _metric(kind, weight, ordered_pairs=True):
    def fn(x):
        net = build_network(x, weight, WeightFamily.F_ON_RHO)
        return compute_nwm(net, kind, ordered_pairs=ordered_pairs).values
    return fn


def _rel_err(a, b):
    return np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))


def test_vec_stacks_columns():
    assert vec(np.array([[1, 2], [3, 4]])).tolist() == [1, 3, 2, 4]


def test_elimination_matrix_half_vectorizes():
    M = np.array([[1.0, 2.0, 4.0], [2.0, 3.0, 5.0], [4.0, 5.0, 6.0]])
    K = elimination_matrix(3)
    assert K.K.shape == (6, 9)
    assert K.vech(M).tolist() == [1.0, 2.0, 4.0, 3.0, 5.0, 6.0]
    assert vech_index(2, 1, 3) == 4


def test_elimination_matrix_bad_size():
    with pytest.raises(ValidationError):
        elimination_matrix(0)


@pytest.mark.parametrize('weight', ['f1', 'f2'])
def test_grad_L_D_matches_finite_differences(weight):
    numeric = finite_difference_jacobian(_metric(NwmKind.DEGREE, weight), VALUES)
    assert _rel_err(grad_L_D(VALUES, weight), numeric) < 1e-5


@pytest.mark.parametrize('weight', ['f1', 'f2'])
@pytest.mark.parametrize('ordered_pairs', [True, False])
def test_grad_L_C_matches_finite_differences(weight, ordered_pairs):
    numeric = finite_difference_jacobian(_metric(NwmKind.CLUSTERING, weight, ordered_pairs), VALUES)
    assert _rel_err(grad_L_C(VALUES, weight, ordered_pairs), numeric) < 1e-5


def test_grad_L_C_zero_diagonal():
    assert np.all(np.diag(grad_L_C(VALUES, 'f2')) == 0)


def test_grad_L_C_needs_three_vertices():
    with pytest.raises(ValidationError):
        grad_L_C([0.2, 0.4], 'f1')


@pytest.mark.parametrize('weight', ['f1', 'f2'])
def test_hessian_D_matches_finite_differences(weight):
    q = VALUES.size
    numeric = finite_difference_jacobian(lambda v: grad_L_D(v, weight).ravel(), VALUES).reshape(q, q, q)
    assert _rel_err(hessian_D(VALUES, weight), numeric) < 1e-4


@pytest.mark.parametrize('weight', ['f1', 'f2'])
def test_hessian_C_matches_finite_differences(weight):
    q = VALUES.size
    numeric = finite_difference_jacobian(lambda v: grad_L_C(v, weight).ravel(), VALUES).reshape(q, q, q)
    assert _rel_err(hessian_C(VALUES, weight), numeric) < 1e-4


@pytest.mark.parametrize('scale', list(RhoScale))
def test_grad_h_matches_finite_differences(scale):
    m = ORACLE_GAMMA.shape[0]
    pairs = [(i, j) for j in range(m) for i in range(j, m)]
    theta = np.array([ORACLE_GAMMA[i, j] for i, j in pairs])

    def rho_of(t):
        G = np.zeros((m, m))
        for value, (i, j) in zip(t, pairs):
            G[i, j] = G[j, i] = value
        raw = rho_from_gamma(G)
        return raw if scale is RhoScale.RAW else (1 + raw) / 2

    numeric = finite_difference_jacobian(rho_of, theta)
    assert _rel_err(grad_h(ORACLE_GAMMA, scale), numeric) < 1e-5


def test_grad_h_not_positive_definite():
    with pytest.raises(ValidationError):
        grad_h(-np.eye(3))


def test_delta_S_by_hand():
    gen = np.random.default_rng(2)
    samples = gen.standard_normal((7, 2))
    centered = samples - samples.mean(axis=0)
    S = centered.T @ centered / 7
    expected = np.mean([np.kron(np.outer(z, z), np.outer(z, z)) for z in centered], axis=0) - np.outer(vec(S), vec(S))
    assert np.allclose(delta_S(samples), expected)


def _rel_frobenius(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_delta_S_matches_isserlis_at_large_n():
    samples = np.random.default_rng(7).multivariate_normal(np.zeros(3), ORACLE_SIGMA, size=20000)
    assert _rel_frobenius(delta_S(samples), gaussian_delta_S(ORACLE_SIGMA)) < 0.1


@pytest.mark.slow
def test_delta_S_error_shrinks_with_n():
    truth = gaussian_delta_S(ORACLE_SIGMA)
    gen = np.random.default_rng(8)
    medians = [
        np.median([
            _rel_frobenius(delta_S(gen.multivariate_normal(np.zeros(3), ORACLE_SIGMA, size=n)), truth)
            for _ in range(50)
        ])
        for n in (500, 2000, 8000)
    ]
    assert medians[0] > medians[1] > medians[2]


def test_delta_S_too_few_rows():
    with pytest.raises(ValidationError):
        delta_S(np.ones((1, 3)))


def test_gaussian_delta_S_scalar():
    assert gaussian_delta_S(np.array([[2.0]])).tolist() == [[8.0]]


def test_check_plugin_dimension():
    check_plugin_dimension(25)
    with pytest.raises(ValidationError, match='bootstrap'):
        check_plugin_dimension(26)


def _oracle_pc():
    return PartialCorrelations(
        rho_raw=rho_from_gamma(ORACLE_GAMMA),
        rho=(1 + rho_from_gamma(ORACLE_GAMMA)) / 2,
        gamma=ORACLE_GAMMA,
        sigma=ORACLE_SIGMA,
    )


def test_cov_rho_gaussian_variance():
    # a Gaussian partial correlation has asymptotic variance (1 - rho^2)^2
    dS = gaussian_delta_S(ORACLE_SIGMA)
    raw = cov_rho(_oracle_pc(), dS, elimination_matrix(3), RhoScale.RAW, n_eff=50)
    assert np.allclose(np.diag(raw.sigma), 0.25)
    assert raw.target is CovTarget.RHO
    assert raw.n_eff == 50
    transformed = cov_rho(_oracle_pc(), dS, elimination_matrix(3), RhoScale.TRANSFORMED)
    assert np.allclose(transformed.sigma, raw.sigma / 4)


def test_cov_rho_dimension_mismatch():
    with pytest.raises(ValidationError):
        cov_rho(_oracle_pc(), np.eye(4), elimination_matrix(3))


def test_cov_nwm_rho_sandwich():
    dS = gaussian_delta_S(ORACLE_SIGMA)
    covr = cov_rho(_oracle_pc(), dS, elimination_matrix(3), n_eff=40)
    L = grad_L_D(_oracle_pc().rho, 'f2')
    cov = cov_nwm_rho(covr, L, NwmKind.DEGREE)
    assert np.allclose(cov.sigma, L @ covr.sigma @ L.T)
    assert cov.target is CovTarget.DEGREE
    assert cov.n_eff == 40


def test_cov_nwm_rho_clustering_needs_three():
    covr = CovarianceEstimate(CovTarget.RHO, np.eye(2), CovMethod.PLUGIN)
    with pytest.raises(ValidationError):
        cov_nwm_rho(covr, np.eye(2), NwmKind.CLUSTERING)


def test_cov_nwm_beta_identity_gradient(small_data: Dataset):
    fit = refit_ols(small_data, range(small_data.n), ActiveSet(indices=(0, 1, 2)))
    cov = cov_nwm_beta(fit, np.eye(3), CovTarget.BETA)
    assert np.allclose(cov.sigma, fit.sigma2_hat * fit.n_rows * fit.xtx_inv)
    assert np.allclose(cov.standard_errors(), fit.se)


def test_cov_nwm_beta_gradient_shape(small_data: Dataset):
    fit = refit_ols(small_data, range(small_data.n), ActiveSet(indices=(0, 1)))
    with pytest.raises(ValidationError):
        cov_nwm_beta(fit, np.eye(3), NwmKind.DEGREE)


def test_covariance_estimate_contract():
    with pytest.raises(NumericalError):
        CovarianceEstimate(CovTarget.BETA, [[1.0, 0.5], [0.0, 1.0]], CovMethod.PLUGIN)
    with pytest.raises(NumericalError):
        CovarianceEstimate(CovTarget.BETA, [[1.0, 2.0], [2.0, 1.0]], CovMethod.PLUGIN)
    with pytest.raises(ValidationError):
        CovarianceEstimate(CovTarget.BETA, np.ones((2, 3)), CovMethod.PLUGIN)


def test_covariance_estimate_standard_errors():
    cov = CovarianceEstimate(CovTarget.DEGREE, np.diag([4.0, 9.0]), CovMethod.BOOTSTRAP, n_eff=100)
    assert np.allclose(cov.standard_errors(), [0.2, 0.3])
    assert cov.to_dict()['method'] == 'bootstrap'
    with pytest.raises(ValidationError):
        CovarianceEstimate(CovTarget.DEGREE, np.eye(2), CovMethod.PLUGIN).standard_errors()


def test_penalized_bias_diagnostics_unpenalized_region():
    cfg = PenaltyConfig(family=PenaltyFamily.SCAD)
    beta = np.array([2.0, -3.0])
    V = np.array([[1.0, 0.2], [0.2, 1.0]])
    L = np.array([[1.0, 0.5], [0.0, 2.0]])
    bias, cov = penalized_bias_diagnostics(beta, cfg, 0.1, L, np.zeros((2, 2, 2)), V, 1.5)
    assert np.allclose(bias, 0)
    assert np.allclose(cov, 1.5 * L @ np.linalg.inv(V) @ L.T)

"""
Unit tests for the .. module:: nwmclust.network_weights module.
"""

import numpy as np
import pytest

from nwmclust._types import FunctionId, RhoScale, WeightFamily
from nwmclust.errors import DataError, SingularCovarianceError, ValidationError
from nwmclust.network_weights import (
    ImplicitNetwork,
    anova_weights,
    build_network,
    f1,
    f2,
    get_weight_function,
    partial_correlations,
    register_weight_function,
    rho_from_gamma,
)
from nwmclust.penalized_selection import ActiveSet
from . import ORACLE_GAMMA, ORACLE_SIGMA


def test_f1_values():
    assert f1(0.0, 0.0) == pytest.approx(2 * np.sqrt(2))
    assert f1(1.0, 1.0) == pytest.approx(0.0)
    assert f1(0.6, 0.8) == pytest.approx(np.sqrt(2 * 0.64) + np.sqrt(2 * 0.36))


def test_f1_outside_domain():
    with pytest.raises(ValidationError):
        f1(1.5, 0.2)
    with pytest.raises(ValidationError):
        f1(0.2, -0.1)


def test_f2_values():
    assert f2(3.0, 4.0) == pytest.approx(5.0)
    assert f2(-3.0, 4.0) == pytest.approx(5.0)


def test_f2_non_finite():
    with pytest.raises(ValidationError):
        f2(np.inf, 1.0)


def test_weight_matrix_symmetric_zero_diagonal():
    W = get_weight_function('f2').matrix([0.1, 0.5, 0.9])
    assert np.allclose(W, W.T)
    assert np.all(np.diag(W) == 0)
    assert W[0, 2] == pytest.approx(np.hypot(0.1, 0.9))


def test_get_weight_function_lookup():
    assert get_weight_function(FunctionId.F1).name == 'f1'
    weight = get_weight_function('f2')
    assert get_weight_function(weight) is weight


def test_get_weight_function_unknown():
    with pytest.raises(ValidationError, match='f9'):
        get_weight_function('f9')


def test_register_weight_function_squared_difference():
    weight = register_weight_function('sqdiff', lambda x, y: (x - y) ** 2)
    assert weight.f_id is FunctionId.CUSTOM
    assert float(weight.d1(0.7, 0.2)) == pytest.approx(1.0, rel=1e-5)
    assert float(weight.d11(0.7, 0.2)) == pytest.approx(2.0, rel=1e-3)
    assert float(weight.d12(0.7, 0.2)) == pytest.approx(-2.0, rel=1e-3)
    net = build_network([0.1, 0.4, 0.8], 'sqdiff', WeightFamily.F_ON_BETA)
    assert net.W[0, 2] == pytest.approx(0.49)
    assert net.weight_name == 'sqdiff'


def test_register_weight_function_asymmetric():
    with pytest.raises(ValidationError, match='symmetric'):
        register_weight_function('skew', lambda x, y: x + 2 * y)


def test_register_weight_function_nonzero_diagonal():
    with pytest.raises(ValidationError):
        register_weight_function('plus', lambda x, y: x + y)


def test_register_weight_function_builtin_name():
    with pytest.raises(ValidationError):
        register_weight_function('f1', lambda x, y: abs(x - y))


def test_rho_from_gamma_oracle():
    assert np.allclose(rho_from_gamma(ORACLE_GAMMA), 1 / np.sqrt(2))
    assert np.allclose(np.linalg.inv(ORACLE_SIGMA), ORACLE_GAMMA)


def test_partial_correlations_match_residual_correlations():
    gen = np.random.default_rng(8)
    X = gen.standard_normal((60, 3))
    y = X @ [1.0, -0.5, 0.0] + gen.standard_normal(60)
    pc = partial_correlations(y, X)
    for j in range(3):
        others = np.column_stack([np.ones(60), np.delete(X, j, axis=1)])
        ry = y - others @ np.linalg.lstsq(others, y, rcond=None)[0]
        rx = X[:, j] - others @ np.linalg.lstsq(others, X[:, j], rcond=None)[0]
        assert pc.rho_raw[j] == pytest.approx(np.corrcoef(ry, rx)[0, 1], abs=1e-10)
    assert np.allclose(pc.rho, (1 + pc.rho_raw) / 2)
    assert np.array_equal(pc.on_scale(RhoScale.RAW), pc.rho_raw)
    assert np.array_equal(pc.on_scale('transformed'), pc.rho)


def test_partial_correlations_singular():
    gen = np.random.default_rng(1)
    x = gen.standard_normal(30)
    with pytest.raises(SingularCovarianceError):
        partial_correlations(gen.standard_normal(30), np.column_stack([x, x]))


def test_partial_correlations_too_few_rows():
    with pytest.raises(ValidationError):
        partial_correlations([1.0, 2.0, 3.0], np.ones((3, 2)))


def test_build_network_defaults():
    net = build_network([0.2, 0.4, 0.6], 'f1', WeightFamily.F_ON_RHO)
    assert net.q == 3
    assert net.labels == ('X1', 'X2', 'X3')
    assert net.rho_scale is RhoScale.TRANSFORMED
    assert net.f_id is FunctionId.F1
    edges = net.edge_list()
    assert len(edges) == 3
    assert list(edges.columns) == ['i', 'j', 'weight']
    dense = net.to_dense()
    assert dense['vertices'] == ['X1', 'X2', 'X3']
    assert np.allclose(dense['W'], net.W)


def test_build_network_named_vertices():
    vertices = ActiveSet(indices=(2, 5), names=('age', 'dose'))
    net = build_network([1.0, 2.0], 'f2', WeightFamily.F_ON_BETA, vertices=vertices)
    assert net.labels == ('age', 'dose')
    assert net.rho_scale is None


def test_build_network_needs_two_vertices():
    with pytest.raises(ValidationError):
        build_network([0.3], 'f1', WeightFamily.F_ON_RHO)


def test_build_network_rejects_anova():
    with pytest.raises(ValidationError):
        build_network([0.3, 0.4], 'f1', WeightFamily.ANOVA_SS)


def test_build_network_vertex_count_mismatch():
    with pytest.raises(ValidationError):
        build_network([0.3, 0.4, 0.5], 'f1', WeightFamily.F_ON_RHO, vertices=ActiveSet(indices=(0, 1)))


@pytest.mark.parametrize('W', [
    [[0.0, 1.0], [2.0, 0.0]],
    [[1.0, 1.0], [1.0, 0.0]],
    [[0.0, -1.0], [-1.0, 0.0]],
])
def test_implicit_network_contract(W):
    with pytest.raises(ValidationError):
        ImplicitNetwork(W=np.array(W), vertices=ActiveSet(indices=(0, 1)), weight_family=WeightFamily.F_ON_BETA)


def test_anova_pure_interaction():
    cells = [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert anova_weights([1.0, -1.0, -1.0, 1.0], cells).W[0, 1] == pytest.approx(1.0)
    assert anova_weights([0.0, 1.0, 2.0, 3.0], cells).W[0, 1] == pytest.approx(0.0)


def test_anova_names_and_family():
    net = anova_weights([1.0, -1.0, -1.0, 1.0], [[0, 0], [0, 1], [1, 0], [1, 1]], names=['A', 'B'])
    assert net.labels == ('A', 'B')
    assert net.weight_family is WeightFamily.ANOVA_SS


def test_anova_unbalanced():
    with pytest.raises(DataError, match='unbalanced'):
        anova_weights([1.0, 2.0, 3.0, 4.0, 5.0], [[0, 0], [0, 1], [1, 0], [1, 1], [1, 1]])


def test_anova_single_level():
    with pytest.raises(DataError):
        anova_weights([1.0, 2.0], [[0, 0], [0, 1]])


def test_anova_constant_response():
    with pytest.raises(DataError):
        anova_weights([1.0] * 4, [[0, 0], [0, 1], [1, 0], [1, 1]])

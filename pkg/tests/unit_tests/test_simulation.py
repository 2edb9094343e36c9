"""
Unit tests for the .. module:: nwmclust.simulation module.
"""

import numpy as np
import pandas as pd
import pytest

from nwmclust._types import ExperimentId, NwmKind
from nwmclust.clustering import ClusterResult
from nwmclust.data_model import RngStream
from nwmclust.errors import ValidationError
from nwmclust.simulation import (
    ICC_GROUPS,
    PRESETS,
    McReport,
    SimDesign,
    bias_targets,
    default_pipeline,
    design_frame,
    detected,
    detected_in_order,
    experiment_id,
    generate,
    ks_normality,
    population_cluster_order,
    population_nwm,
    population_partial_correlations,
    preset_design,
    run_table,
    wilson_interval,
)


@pytest.mark.parametrize('kwargs', [
    dict(n=50, p=3, beta=(1.0, 2.0)),
    dict(n=50, p=3, beta=(1.0, 2.0, 3.0), group_map=((0, 1), (1, 2))),
    dict(n=50, p=3, beta=(1.0, 2.0, 3.0), group_map=((0, 5),)),
    dict(n=50, p=3, beta=(1.0, 2.0, 3.0), sigma2=-1.0),
    dict(n=50, p=6, beta=(1.0,) * 6, r_w=0.5, r_b=0.9, group_map=((0, 1, 2), (3, 4, 5))),
])
def test_design_contract(kwargs):
    with pytest.raises(ValidationError):
        SimDesign(**kwargs)


def test_design_covariance_blocks():
    design = SimDesign(n=10, p=4, beta=(1.0,) * 4, r_w=0.6, r_b=0.1, group_map=((0, 2),))
    sigma = design.covariance()
    assert sigma[0, 2] == 0.6
    assert sigma[0, 1] == 0.1
    assert sigma[1, 3] == 0.1
    assert np.all(np.diag(sigma) == 1.0)


def test_generate_deterministic():
    design = preset_design('unsup', n=40)
    a = generate(design, RngStream(seed=4))
    b = generate(design, RngStream(seed=4))
    c = generate(design, RngStream(seed=5))
    assert np.array_equal(a.X, b.X)
    assert np.array_equal(a.y, b.y)
    assert not np.array_equal(a.X, c.X)
    assert a.names[0] == 'X1'
    assert a.X.shape == (40, 9)


def test_generate_noise_free():
    design = SimDesign(n=20, p=2, beta=(2.0, -1.0), sigma2=0.0)
    d = generate(design, RngStream(seed=0))
    assert np.allclose(d.y, d.X @ [2.0, -1.0])


def test_population_partial_correlations_independent_predictors():
    beta = np.array([1.0, -2.0, 0.5])
    pc = population_partial_correlations(SimDesign(n=10, p=3, beta=tuple(beta)))
    assert np.allclose(pc.rho_raw, beta / np.sqrt(beta ** 2 + 1))
    assert np.allclose(pc.rho, (1 + pc.rho_raw) / 2)


def test_bias_targets():
    D, C = bias_targets()
    assert D == pytest.approx(9.7477, abs=1e-3)
    assert C == pytest.approx(0.5415, abs=1e-3)


def test_population_nwm_on_beta():
    design = SimDesign(n=10, p=3, beta=(3.0, 4.0, 0.0))
    values = population_nwm(design, NwmKind.DEGREE, 'f2', family='beta')
    assert values[2] == pytest.approx(3.0 + 4.0)
    assert values[0] == pytest.approx(5.0 + 3.0)


def test_population_cluster_order_is_permutation():
    order = population_cluster_order(preset_design('icc-strong'), ICC_GROUPS, default_pipeline())
    assert sorted(order) == sorted(ICC_GROUPS)


def test_wilson_interval():
    lower, upper = wilson_interval(45, 50)
    assert lower < 0.9 < upper
    assert wilson_interval(0, 10)[0] == pytest.approx(0.0, abs=1e-12)
    assert wilson_interval(10, 10)[1] == pytest.approx(1.0, abs=1e-12)


def test_mc_report_invalid_rates():
    rates = pd.DataFrame({'row': ['a'], 'column': ['b'], 'successes': [3], 'rate': [1.5],
                          'lower': [0.0], 'upper': [1.0]})
    with pytest.raises(ValidationError):
        McReport(ExperimentId.WRONG_K, 2, pd.DataFrame(), rates)


def test_mc_report_interval_must_cover_rate():
    rates = pd.DataFrame({'row': ['a'], 'column': ['b'], 'successes': [1], 'rate': [0.5],
                          'lower': [0.6], 'upper': [0.9]})
    with pytest.raises(ValidationError):
        McReport(ExperimentId.WRONG_K, 2, pd.DataFrame(), rates)


def test_detected_by_set_membership():
    result = ClusterResult(clusters=((2, 1), (0,), ()), unassigned=(3,), anchors=(2, 0, None))
    assert detected(result, [(1, 2), (0, 3)]) == [True, False]
    assert detected_in_order(result, [(1, 2), (0,), (3,)]) == [True, True, False]
    assert detected_in_order(result, [(0,), (1, 2)]) == [False, False]


def test_experiment_id():
    assert experiment_id('nwm-bias') is ExperimentId.NWM_BIAS
    with pytest.raises(ValidationError, match='cov-timing'):
        experiment_id('table-9')


def test_run_table_bad_replicates():
    with pytest.raises(ValidationError):
        run_table('nwm-bias', replicates=0)


def test_run_table_nwm_bias():
    report = run_table('nwm-bias', replicates=3, rng=RngStream(seed=1))
    assert report.experiment is ExperimentId.NWM_BIAS
    assert report.table['n'].tolist() == [100, 300]
    assert {'D_mean', 'D_bias', 'D_sd', 'D_ks_pvalue', 'C_mean', 'C_bias'} <= set(report.table.columns)
    assert np.allclose(report.table['D_bias'], report.table['D_mean'] - report.table['D_target'])
    assert 'D_target_published' in report.comparison().columns
    summary = report.to_dict()
    assert summary['experiment'] == 'nwm-bias'
    assert summary['replicates'] == 3
    assert summary['wall_clock'] >= 0


def test_run_table_independent_of_workers():
    one = run_table('nwm-bias', replicates=3, rng=RngStream(seed=2), n_jobs=1)
    two = run_table('nwm-bias', replicates=3, rng=RngStream(seed=2), n_jobs=2)
    pd.testing.assert_frame_equal(one.table, two.table)


def test_run_table_cov_timing():
    report = run_table('cov-timing', replicates=2, rng=RngStream(seed=0))
    assert report.table['method'].tolist() == ['plugin', 'bootstrap']
    assert set(report.timings) == {'plugin_seconds', 'bootstrap_seconds'}
    assert (report.table['mean_rel_frobenius'] >= 0).all()


def test_preset_design():
    design = preset_design('smallp-20', seed=7)
    assert design.p == 20
    assert design.seed == 7
    assert sum(b != 0 for b in design.beta) == 9
    assert preset_design('icc-weak', n=60).n == 60
    assert set(PRESETS) >= {'unsup', 'icc-strong', 'bias'}
    with pytest.raises(ValidationError):
        preset_design('nope')


def test_design_frame():
    d = generate(preset_design('icc-strong', n=30), RngStream(seed=0))
    frame = design_frame(d)
    assert list(frame.columns) == ['y'] + [f'X{j}' for j in range(1, 10)]
    assert np.array_equal(frame['y'].to_numpy(), d.y)


def test_ks_normality():
    gen = np.random.default_rng(0)
    assert ks_normality(gen.exponential(size=2000)) < 1e-6
    assert ks_normality(gen.standard_normal(500)) > 1e-3
    assert np.isnan(ks_normality([1.0, 2.0]))
    assert np.isnan(ks_normality([3.0] * 10))


def test_run_table_consistency():
    report = run_table('consistency', replicates=2, rng=RngStream(seed=3))
    assert report.experiment is ExperimentId.CONSISTENCY
    assert report.table['n'].tolist() == [100, 200, 400]
    assert {'selection', 'clusters'} <= set(report.table.columns)
    assert len(report.rates) == 6
    assert report.table[['selection', 'clusters']].isin([0.0, 0.5, 1.0]).all().all()


@pytest.mark.slow
def test_nwm_bias_matches_published_targets():
    report = run_table('nwm-bias', replicates=500, rng=RngStream(seed=0), n_jobs=2)
    large = report.table.set_index('n').loc[300]
    assert large['D_mean'] == pytest.approx(9.748, abs=0.06)
    assert large['C_mean'] == pytest.approx(0.545, abs=0.01)
    assert large['D_ks_pvalue'] >= 0.01
    assert large['C_ks_pvalue'] >= 0.01


@pytest.mark.slow
def test_unsupervised_vs_sequential_rates():
    report = run_table('unsup-vs-seq', replicates=500, rng=RngStream(seed=0), n_jobs=2)
    table = report.table.set_index('r_b')
    assert table.loc[0.0, 'sequential'] == pytest.approx(0.9104, abs=0.05)
    assert table.loc[0.5, 'sequential'] == pytest.approx(0.8574, abs=0.05)
    assert table.loc[0.0, 'kmeans'] == pytest.approx(0.8624, abs=0.06)
    assert table.loc[0.5, 'kmeans'] <= 0.02
    assert table.loc[0.0, 'spectral'] >= 0.99
    assert table.loc[0.5, 'spectral'] <= 0.02


@pytest.mark.slow
def test_icc_chooses_three_clusters():
    report = run_table('icc-k', replicates=500, rng=RngStream(seed=0), n_jobs=2)
    table = report.table.set_index('signal')
    assert table.loc['strong', 'K=3'] >= 0.90
    assert table.loc['weak', 'K=3'] >= 0.75


@pytest.mark.slow
def test_sequential_recovery_with_many_predictors():
    report = run_table('smallp-seq', replicates=500, rng=RngStream(seed=0), n_jobs=2)
    combined = report.table.set_index(['p', 'alpha', 'metric'])['combined']
    assert combined.loc[(20, 0.05, 'degree')] >= 0.90
    assert combined.loc[(50, 0.05, 'degree')] >= 0.89
    assert combined.loc[(20, 0.05, 'clustering')] >= 0.90
    assert combined.loc[(50, 0.05, 'clustering')] >= 0.90


@pytest.mark.slow
def test_selection_and_clustering_improve_with_n():
    report = run_table('consistency', replicates=500, rng=RngStream(seed=0), n_jobs=2)
    for column in ('selection', 'clusters'):
        rates = report.table[column].to_numpy()
        assert np.all(np.diff(rates) >= -0.03), column

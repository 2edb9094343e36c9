"""
Synthetic designs and the Monte Carlo harness behind ``nwmclust reproduce``.

Every replicate draws from its own stream ``rng.child(r)`` and replicates
are reduced in index order, so a table only depends on the seed, never on
the number of workers.
"""

import logging
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats
from statsmodels.stats.proportion import proportion_confint

from nwmclust._types import ArrayT, CovMethod, ExperimentId, Indices, NwmKind, RhoScale, WeightFamily
from nwmclust.asymptotics import (
    cov_nwm_rho,
    cov_rho,
    delta_S,
    elimination_matrix,
    gaussian_delta_S,
    grad_L_D,
)
from nwmclust.bootstrap import BootstrapConfig, mepsrs_covariance
from nwmclust.clustering import (
    ClusterResult,
    PipelineConfig,
    cluster_active,
    cluster_single_split,
    modified_kmeans,
    modified_spectral,
)
from nwmclust.data_model import Dataset, RngStream, split_half, standardize
from nwmclust.errors import NwmClustError, ValidationError
from nwmclust.network_weights import PartialCorrelations, build_network, partial_correlations, rho_from_gamma
from nwmclust.nwm import compute_nwm
from nwmclust.penalized_selection import two_step_select

logger = logging.getLogger(__name__)

DESK_REPLICATES = 500
FULL_REPLICATES = 5000
CONFIDENCE = 0.95

UNSUP_BETA = (1.0, -1.0, 3.0, 1.0, 1.0, 2.0, -1.0, 2.0, -1.0)
UNSUP_GROUPS = ((0, 3, 4), (1, 6, 8), (2, 5, 7))
UNSUP_N = 200
UNSUP_RB = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)

ICC_STRONG_BETA = (1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 2.0, 2.0, 2.0)
ICC_WEAK_BETA = (0.4, 0.4, 0.4, -0.2, -0.2, -0.2, 0.8, 0.8, 0.8)
ICC_GROUPS = ((0, 1, 2), (3, 4, 5), (6, 7, 8))
ICC_N = 100
ICC_K_MAX = 8

SMALLP_N = 200
SMALLP_P = (20, 50)
SMALLP_ALPHA = (0.05, 0.1)

BIAS_BETA = (1.0,) * 7 + (2.0,) * 3
BIAS_N = (100, 300)

WRONG_K = (2, 4)
TIMING_N = 100
TIMING_B = 500

CONSISTENCY_N = (100, 200, 400)
CONSISTENCY_P = 20


@dataclass(frozen=True)
class SimDesign:
    """Gaussian linear-model design with block-correlated predictors.

    Predictors in the same group correlate at `r_w`, predictors in different
    groups at `r_b`; a predictor in no group forms a group of its own.
    """

    n: int
    p: int
    beta: Tuple[float, ...]
    sigma2: float = 1.0
    r_w: float = 0.0
    r_b: float = 0.0
    group_map: Tuple[Indices, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'beta', tuple(float(b) for b in self.beta))
        object.__setattr__(self, 'group_map', tuple(tuple(int(j) for j in g) for g in self.group_map))
        if self.n < 2 or self.p < 1:
            raise ValidationError(f'need n >= 2 and p >= 1, got n={self.n}, p={self.p}', stage='design')
        if len(self.beta) != self.p:
            raise ValidationError(f'{len(self.beta)} coefficients for p={self.p}', stage='design')
        if self.sigma2 < 0:
            raise ValidationError(f'noise variance must be >= 0, got {self.sigma2}', stage='design')
        members = [j for g in self.group_map for j in g]
        if len(set(members)) != len(members) or any(not 0 <= j < self.p for j in members):
            raise ValidationError(f'group map {self.group_map} is not a partition of predictors', stage='design')
        try:
            np.linalg.cholesky(self.covariance())
        except np.linalg.LinAlgError:
            msg = f'predictor covariance with r_w={self.r_w}, r_b={self.r_b} is not positive definite'
            raise ValidationError(msg, stage='design') from None

    def groups(self) -> ArrayT:
        """Group label of every predictor."""
        labels = np.arange(self.p) + len(self.group_map)
        for g, members in enumerate(self.group_map):
            labels[list(members)] = g
        return labels

    def covariance(self) -> ArrayT:
        """Population covariance of the predictors."""
        labels = self.groups()
        same = labels[:, None] == labels[None, :]
        sigma = np.where(same, self.r_w, self.r_b)
        np.fill_diagonal(sigma, 1.0)
        return sigma

    def joint_covariance(self) -> ArrayT:
        """Population covariance of (y, X)."""
        sigma = self.covariance()
        beta = np.asarray(self.beta)
        cross = sigma @ beta
        joint = np.empty((self.p + 1, self.p + 1))
        joint[0, 0] = beta @ cross + self.sigma2
        joint[0, 1:] = joint[1:, 0] = cross
        joint[1:, 1:] = sigma
        return joint


def generate(design: SimDesign, rng: RngStream) -> Dataset:
    """Draw ``X ~ N(0, Sigma)`` through its Cholesky factor and
    ``y = X beta + eps`` with ``eps ~ N(0, sigma2)``."""
    gen = rng.generator()
    chol = np.linalg.cholesky(design.covariance())
    X = gen.standard_normal((design.n, design.p)) @ chol.T
    y = X @ np.asarray(design.beta)
    if design.sigma2 > 0:
        y = y + np.sqrt(design.sigma2) * gen.standard_normal(design.n)
    return Dataset(y=y, X=X, names=tuple(f'X{j + 1}' for j in range(design.p)))


def _padded(beta: Tuple[float, ...], p: int) -> Tuple[float, ...]:
    return beta + (0.0,) * (p - len(beta))


# name -> (default n, design factory taking (n, r_b))
PRESETS: Dict[str, Tuple[int, Callable[[int, float], 'SimDesign']]] = {
    'unsup': (UNSUP_N, lambda n, r_b: SimDesign(n=n, p=len(UNSUP_BETA), beta=UNSUP_BETA, r_w=0.5, r_b=r_b,
                                                  group_map=UNSUP_GROUPS)),
    'icc-strong': (ICC_N, lambda n, r_b: SimDesign(n=n, p=len(ICC_STRONG_BETA), beta=ICC_STRONG_BETA)),
    'icc-weak': (ICC_N, lambda n, r_b: SimDesign(n=n, p=len(ICC_WEAK_BETA), beta=ICC_WEAK_BETA)),
    'smallp-20': (SMALLP_N, lambda n, r_b: SimDesign(n=n, p=20, beta=_padded(ICC_STRONG_BETA, 20))),
    'smallp-50': (SMALLP_N, lambda n, r_b: SimDesign(n=n, p=50, beta=_padded(ICC_STRONG_BETA, 50))),
    'bias': (BIAS_N[0], lambda n, r_b: SimDesign(n=n, p=len(BIAS_BETA), beta=BIAS_BETA)),
}


def preset_design(name: str, n: Optional[int] = None, r_b: float = 0.0, seed: int = 0) -> SimDesign:
    """Design of a named simulation preset.

    :raises: ValidationError on an unknown preset or an invalid design
    """
    if name not in PRESETS:
        raise ValidationError(f'unknown preset {name!r}; valid: {", ".join(PRESETS)}', stage='design')
    default_n, factory = PRESETS[name]
    return replace(factory(default_n if n is None else n, r_b), seed=seed)


def design_frame(d: Dataset) -> pd.DataFrame:
    """The dataset as a table with the response in column ``y``."""
    frame = pd.DataFrame(d.X, columns=list(d.names))
    frame.insert(0, 'y', d.y)
    return frame


def population_partial_correlations(design: SimDesign, active: Optional[Sequence[int]] = None) -> PartialCorrelations:
    """Partial correlations of y with the `active` predictors (default all)
    under the population covariance."""
    cols = list(range(design.p)) if active is None else list(active)
    joint = design.joint_covariance()[np.ix_([0] + [c + 1 for c in cols], [0] + [c + 1 for c in cols])]
    gamma = np.linalg.inv(joint)
    gamma = (gamma + gamma.T) / 2
    rho_raw = rho_from_gamma(gamma)
    return PartialCorrelations(rho_raw=rho_raw, rho=(1 + rho_raw) / 2, gamma=gamma, sigma=joint)


def population_nwm(
    design: SimDesign,
    kind: NwmKind,
    weight: Any = 'f1',
    family: WeightFamily = WeightFamily.F_ON_RHO,
    rho_scale: RhoScale = RhoScale.TRANSFORMED,
    ordered_pairs: bool = True,
    active: Optional[Sequence[int]] = None,
) -> ArrayT:
    """Metric values of the population network over the `active` predictors."""
    if WeightFamily(family) is WeightFamily.F_ON_BETA:
        beta = np.asarray(design.beta)
        values = beta if active is None else beta[list(active)]
    else:
        values = population_partial_correlations(design, active).on_scale(rho_scale)
    net = build_network(values, weight, family, rho_scale=rho_scale)
    return compute_nwm(net, kind, ordered_pairs=ordered_pairs).values


def population_cluster_order(design: SimDesign, groups: Sequence[Indices], pipeline: PipelineConfig) -> List[Indices]:
    """True clusters sorted by descending mean population metric, so that
    position k is the cluster the sequential procedure should form k-th."""
    active = sorted(j for g in groups for j in g)
    values = population_nwm(design, pipeline.seq.nwm_kind, pipeline.weight, pipeline.family,
                            pipeline.rho_scale, pipeline.ordered_pairs, active)
    position = {j: i for i, j in enumerate(active)}
    return sorted(groups, key=lambda g: -np.mean([values[position[j]] for j in g]))


@dataclass(frozen=True, eq=False)
class McReport:
    """Result of one Monte Carlo experiment.

    `table` mirrors the layout of the published table; `rates` holds one
    row per success-rate cell with its Wilson interval.
    """

    experiment: ExperimentId
    replicates: int
    table: pd.DataFrame
    rates: pd.DataFrame = field(default_factory=pd.DataFrame)
    reference: pd.DataFrame = field(default_factory=pd.DataFrame)
    wall_clock: float = 0.0
    failures: Dict[str, int] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.rates.empty:
            return
        rate = self.rates['rate']
        if ((rate < 0) | (rate > 1)).any():
            raise ValidationError('success rates must lie in [0, 1]', stage='simulation')
        if ((self.rates['lower'] > rate + 1e-12) | (self.rates['upper'] < rate - 1e-12)).any():
            raise ValidationError('confidence interval does not contain its rate', stage='simulation')

    def comparison(self) -> pd.DataFrame:
        """The reproduced table next to the published numbers."""
        if self.reference.empty:
            return self.table.copy()
        keys = [c for c in self.reference.columns if c in self.table.columns and not c.endswith('_published')]
        return self.table.merge(self.reference, on=keys, how='left')

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready summary (timings included)."""
        return {
            'experiment': self.experiment.value,
            'replicates': self.replicates,
            'wall_clock': self.wall_clock,
            'failures': dict(self.failures),
            'timings': dict(self.timings),
        }


def wilson_interval(successes: int, trials: int, confidence: float = CONFIDENCE) -> Tuple[float, float]:
    """Wilson score interval of a binomial proportion."""
    lower, upper = proportion_confint(successes, trials, alpha=1 - confidence, method='wilson')
    return float(lower), float(upper)


def _rates_frame(cells: Dict[Tuple[str, str], int], trials: int) -> pd.DataFrame:
    rows = []
    for (row, column), successes in cells.items():
        lower, upper = wilson_interval(successes, trials)
        rows.append({
            'row': row, 'column': column, 'successes': successes,
            'rate': successes / trials, 'lower': lower, 'upper': upper,
        })
    return pd.DataFrame(rows)


def _stage_of(err: NwmClustError) -> str:
    return err.stage or type(err).__name__


def _prepared(d: Dataset, pipeline: PipelineConfig) -> Dataset:
    return standardize(d) if pipeline.standardize else d


def detected(result: ClusterResult, truth: Sequence[Indices]) -> List[bool]:
    """Whether each true cluster appears, as a set, among the detected ones."""
    found = {frozenset(c) for c in result.clusters if c}
    return [frozenset(g) in found for g in truth]


def detected_in_order(result: ClusterResult, truth: Sequence[Indices]) -> List[bool]:
    """Whether true cluster k is exactly detected cluster k."""
    return [
        k < result.K and frozenset(result.clusters[k]) == frozenset(g)
        for k, g in enumerate(truth)
    ]


def _unsup_replicate(r_b: float, pipeline: PipelineConfig, rng: RngStream) -> Tuple[Dict[str, bool], List[str]]:
    design = SimDesign(n=UNSUP_N, p=len(UNSUP_BETA), beta=UNSUP_BETA, r_w=0.5, r_b=r_b, group_map=UNSUP_GROUPS)
    d = generate(design, rng.child(0))
    outcome, failures = {}, []
    for method, run in (
        ('kmeans', lambda: modified_kmeans(d, 3, rng.child(1))),
        ('spectral', lambda: modified_spectral(d, 3, rng.child(2))),
        ('sequential', lambda: cluster_single_split(
            _prepared(d, pipeline), split_half(d.n, rng.child(3)), pipeline, rng.child(4)).result),
    ):
        try:
            outcome[method] = all(detected(run(), UNSUP_GROUPS))
        except NwmClustError as err:
            failures.append(f'{method}:{_stage_of(err)}')
            outcome[method] = False
    return outcome, failures


def _icc_replicate(beta: Tuple[float, ...], pipeline: PipelineConfig, rng: RngStream) -> Tuple[Dict[str, int], List[str]]:
    design = SimDesign(n=ICC_N, p=len(beta), beta=beta)
    d = _prepared(generate(design, rng.child(0)), pipeline)
    try:
        result = cluster_single_split(d, split_half(d.n, rng.child(1)), pipeline, rng.child(2)).result
    except NwmClustError as err:
        return {'K': 0}, [_stage_of(err)]
    return {'K': result.K}, []


def _smallp_replicate(p: int, configs: Sequence[Tuple[str, PipelineConfig]], truths: Dict[str, List[Indices]],
                      rng: RngStream) -> Tuple[Dict[str, List[bool]], List[str]]:
    beta = ICC_STRONG_BETA + (0.0,) * (p - len(ICC_STRONG_BETA))
    base = configs[0][1]
    d = _prepared(generate(SimDesign(n=SMALLP_N, p=p, beta=beta), rng.child(0)), base)
    split = split_half(d.n, rng.child(1))
    miss = {key: [False, False, False, False] for key, _ in configs}
    try:
        active = two_step_select(d, split, base.penalty, base.alpha_n, rng.child(2),
                                 bonferroni=base.selection_bonferroni)
    except NwmClustError as err:
        return miss, [_stage_of(err)]
    outcome, failures = {}, []
    for key, pipeline in configs:
        try:
            result = cluster_active(d, split, active, pipeline, rng.child(3)).result
        except NwmClustError as err:
            failures.append(f'{key}:{_stage_of(err)}')
            outcome[key] = miss[key]
            continue
        hits = detected(result, truths[key])
        outcome[key] = hits + [all(hits)]
    return outcome, failures


def _bias_replicate(n: int, rng: RngStream) -> Tuple[Dict[str, float], List[str]]:
    design = SimDesign(n=n, p=len(BIAS_BETA), beta=BIAS_BETA)
    d = generate(design, rng)
    try:
        pc = partial_correlations(d.y, d.X)
    except NwmClustError as err:
        return {'D': np.nan, 'C': np.nan}, [_stage_of(err)]
    net = build_network(pc.rho_raw, 'f2', WeightFamily.F_ON_RHO, rho_scale=RhoScale.RAW)
    D = compute_nwm(net, NwmKind.DEGREE).values.mean()
    C = compute_nwm(net, NwmKind.CLUSTERING, ordered_pairs=False).values.mean()
    return {'D': float(D), 'C': float(C)}, []


def _wrong_k_replicate(pipelines: Dict[int, PipelineConfig], truth: List[Indices],
                       rng: RngStream) -> Tuple[Dict[int, List[bool]], List[str]]:
    design = SimDesign(n=UNSUP_N, p=len(UNSUP_BETA), beta=UNSUP_BETA, r_w=0.5, r_b=0.0, group_map=UNSUP_GROUPS)
    base = next(iter(pipelines.values()))
    d = _prepared(generate(design, rng.child(0)), base)
    split = split_half(d.n, rng.child(1))
    outcome = {K: [False] * 4 for K in pipelines}
    try:
        active = two_step_select(d, split, base.penalty, base.alpha_n, rng.child(2),
                                 bonferroni=base.selection_bonferroni)
    except NwmClustError as err:
        return outcome, [_stage_of(err)]
    failures = []
    for K, pipeline in pipelines.items():
        try:
            result = cluster_active(d, split, active, pipeline, rng.child(3)).result
        except NwmClustError as err:
            failures.append(f'K={K}:{_stage_of(err)}')
            continue
        if K < len(truth):
            hits = detected_in_order(result, truth[:K])
            outcome[K] = hits + [False] * (3 - K) + [all(hits)]
        else:
            hits = detected(result, truth)
            outcome[K] = hits + [all(hits) and not any(result.clusters[len(truth):])]
    return outcome, failures


def _timing_replicate(truth: ArrayT, weight: str, rng: RngStream) -> Tuple[Dict[str, float], List[str]]:
    design = SimDesign(n=TIMING_N, p=len(BIAS_BETA), beta=BIAS_BETA)
    d = generate(design, rng.child(0))
    try:
        start = time.perf_counter()
        pc = partial_correlations(d.y, d.X)
        covr = cov_rho(pc, delta_S(np.column_stack([d.y, d.X])), elimination_matrix(d.p + 1), n_eff=d.n)
        plugin = cov_nwm_rho(covr, grad_L_D(pc.rho, weight), NwmKind.DEGREE)
        mid = time.perf_counter()
        boot = mepsrs_covariance(d, NwmKind.DEGREE, weight, WeightFamily.F_ON_RHO,
                                 BootstrapConfig(B=TIMING_B, rng=rng.child(1)))
        end = time.perf_counter()
    except NwmClustError as err:
        return {}, [_stage_of(err)]
    scale = np.linalg.norm(truth)
    return {
        'plugin': float(np.linalg.norm(plugin.sigma - truth) / scale),
        'bootstrap': float(np.linalg.norm(boot.sigma - truth) / scale),
        'plugin_seconds': mid - start,
        'bootstrap_seconds': end - mid,
    }, []


def _run(worker: Callable, args: Tuple, replicates: int, rng: RngStream, n_jobs: int) -> Tuple[List[Any], Dict[str, int]]:
    """Run `worker(*args, rng.child(r))` for every replicate, in order."""
    results = Parallel(n_jobs=n_jobs)(
        delayed(worker)(*args, rng.child(r)) for r in range(replicates)
    )
    failures: Dict[str, int] = {}
    outcomes = []
    for outcome, failed in results:
        outcomes.append(outcome)
        for stage in failed:
            failures[stage] = failures.get(stage, 0) + 1
    return outcomes, failures


def _merge(into: Dict[str, int], other: Dict[str, int], prefix: str) -> None:
    for key, count in other.items():
        into[f'{prefix}:{key}'] = into.get(f'{prefix}:{key}', 0) + count


def default_pipeline(**overrides: Any) -> PipelineConfig:
    """Pipeline settings of the simulation studies: f1 on transformed
    partial correlations, plug-in covariances and one split."""
    return replace(PipelineConfig(), **overrides)


REFERENCE: Dict[ExperimentId, pd.DataFrame] = {
    ExperimentId.UNSUP_VS_SEQ: pd.DataFrame({
        'r_b': [0.0, 0.5],
        'kmeans_published': [0.8624, 0.0012],
        'spectral_published': [1.0, 0.0004],
        'sequential_published': [0.9104, 0.8574],
    }),
    ExperimentId.ICC_K: pd.DataFrame({
        'signal': ['strong', 'weak'],
        'K=3_published': [0.965, 0.8416],
    }),
    ExperimentId.SMALLP_SEQ: pd.DataFrame({
        'p': [20, 50, 20, 50],
        'alpha': [0.05, 0.05, 0.05, 0.05],
        'metric': ['degree', 'degree', 'clustering', 'clustering'],
        'combined_published': [0.938, 0.932, 0.944, 0.938],
    }),
    ExperimentId.NWM_BIAS: pd.DataFrame({
        'n': [100, 300],
        'D_target_published': [9.748, 9.748],
        'C_target_published': [0.545, 0.545],
    }),
}


def _unsup_vs_seq(replicates: int, rng: RngStream, n_jobs: int) -> McReport:
    pipeline = default_pipeline()
    rows, cells, failures = [], {}, {}
    for i, r_b in enumerate(UNSUP_RB):
        outcomes, failed = _run(_unsup_replicate, (r_b, pipeline), replicates, rng.child(i), n_jobs)
        _merge(failures, failed, f'r_b={r_b}')
        row = {'r_b': r_b}
        for method in ('kmeans', 'spectral', 'sequential'):
            successes = sum(o[method] for o in outcomes)
            cells[(f'r_b={r_b}', method)] = successes
            row[method] = successes / replicates
        rows.append(row)
    return McReport(ExperimentId.UNSUP_VS_SEQ, replicates, pd.DataFrame(rows), _rates_frame(cells, replicates),
                    REFERENCE[ExperimentId.UNSUP_VS_SEQ], failures=failures)


def _icc_k(replicates: int, rng: RngStream, n_jobs: int) -> McReport:
    pipeline = default_pipeline(auto_k=True, k_max=ICC_K_MAX)
    rows, cells, failures = [], {}, {}
    for i, (signal, beta) in enumerate((('strong', ICC_STRONG_BETA), ('weak', ICC_WEAK_BETA))):
        outcomes, failed = _run(_icc_replicate, (beta, pipeline), replicates, rng.child(i), n_jobs)
        _merge(failures, failed, signal)
        chosen = Counter(o['K'] for o in outcomes)
        row = {'signal': signal}
        for K in range(2, ICC_K_MAX + 1):
            row[f'K={K}'] = chosen.get(K, 0) / replicates
        cells[(signal, 'K=3')] = chosen.get(3, 0)
        rows.append(row)
    return McReport(ExperimentId.ICC_K, replicates, pd.DataFrame(rows), _rates_frame(cells, replicates),
                    REFERENCE[ExperimentId.ICC_K], failures=failures)


def _smallp_seq(replicates: int, rng: RngStream, n_jobs: int) -> McReport:
    base = default_pipeline()
    configs = []
    truths = {}
    for kind in (NwmKind.DEGREE, NwmKind.CLUSTERING):
        for alpha in SMALLP_ALPHA:
            key = f'{kind.value}:{alpha}'
            pipeline = replace(base, seq=replace(base.seq, alpha=alpha, nwm_kind=kind))
            configs.append((key, pipeline))
            design = SimDesign(n=SMALLP_N, p=len(ICC_STRONG_BETA), beta=ICC_STRONG_BETA)
            truths[key] = population_cluster_order(design, ICC_GROUPS, pipeline)

    rows, cells, failures = [], {}, {}
    columns = ('cluster_1', 'cluster_2', 'cluster_3', 'combined')
    for i, p in enumerate(SMALLP_P):
        outcomes, failed = _run(_smallp_replicate, (p, configs, truths), replicates, rng.child(i), n_jobs)
        _merge(failures, failed, f'p={p}')
        for key, pipeline in configs:
            row = {'p': p, 'alpha': pipeline.seq.alpha, 'metric': pipeline.seq.nwm_kind.value}
            for c, column in enumerate(columns):
                successes = sum(o[key][c] for o in outcomes)
                row[column] = successes / replicates
                cells[(f'p={p}:{key}', column)] = successes
            rows.append(row)
    return McReport(ExperimentId.SMALLP_SEQ, replicates, pd.DataFrame(rows), _rates_frame(cells, replicates),
                    REFERENCE[ExperimentId.SMALLP_SEQ], failures=failures)


def bias_targets() -> Tuple[float, float]:
    """Population vertex-mean degree and unordered clustering coefficient of
    the bias-study design."""
    design = SimDesign(n=BIAS_N[0], p=len(BIAS_BETA), beta=BIAS_BETA)
    D = population_nwm(design, NwmKind.DEGREE, 'f2', rho_scale=RhoScale.RAW).mean()
    C = population_nwm(design, NwmKind.CLUSTERING, 'f2', rho_scale=RhoScale.RAW, ordered_pairs=False).mean()
    return float(D), float(C)


def ks_normality(samples: Sequence[float]) -> float:
    """p-value of a Kolmogorov-Smirnov test of the standardized samples
    against the standard normal."""
    x = np.asarray([s for s in samples if np.isfinite(s)], dtype=float)
    if x.size < 3:
        return float('nan')
    sd = x.std(ddof=1)
    if sd == 0:
        return float('nan')
    return float(stats.kstest((x - x.mean()) / sd, 'norm').pvalue)


def _nwm_bias(replicates: int, rng: RngStream, n_jobs: int) -> McReport:
    D_target, C_target = bias_targets()
    rows, failures = [], {}
    for i, n in enumerate(BIAS_N):
        outcomes, failed = _run(_bias_replicate, (n,), replicates, rng.child(i), n_jobs)
        _merge(failures, failed, f'n={n}')
        D = np.array([o['D'] for o in outcomes])
        C = np.array([o['C'] for o in outcomes])
        rows.append({
            'n': n,
            'D_mean': np.nanmean(D), 'D_bias': np.nanmean(D) - D_target, 'D_sd': np.nanstd(D, ddof=1),
            'D_ks_pvalue': ks_normality(D),
            'C_mean': np.nanmean(C), 'C_bias': np.nanmean(C) - C_target, 'C_sd': np.nanstd(C, ddof=1),
            'C_ks_pvalue': ks_normality(C),
            'D_target': D_target, 'C_target': C_target,
        })
    return McReport(ExperimentId.NWM_BIAS, replicates, pd.DataFrame(rows),
                    reference=REFERENCE[ExperimentId.NWM_BIAS], failures=failures)


def _wrong_k(replicates: int, rng: RngStream, n_jobs: int) -> McReport:
    base = default_pipeline()
    pipelines = {K: replace(base, seq=replace(base.seq, K=K)) for K in WRONG_K}
    design = SimDesign(n=UNSUP_N, p=len(UNSUP_BETA), beta=UNSUP_BETA, r_w=0.5, group_map=UNSUP_GROUPS)
    truth = population_cluster_order(design, UNSUP_GROUPS, base)
    outcomes, failures = _run(_wrong_k_replicate, (pipelines, truth), replicates, rng, n_jobs)
    rows, cells = [], {}
    columns = ('cluster_1', 'cluster_2', 'cluster_3', 'correct')
    for K in WRONG_K:
        row = {'K': K}
        for c, column in enumerate(columns):
            if K < len(truth) and c >= K and column != 'correct':
                row[column] = np.nan
                continue
            successes = sum(o[K][c] for o in outcomes)
            row[column] = successes / replicates
            cells[(f'K={K}', column)] = successes
        rows.append(row)
    return McReport(ExperimentId.WRONG_K, replicates, pd.DataFrame(rows), _rates_frame(cells, replicates),
                    failures=failures)


def population_degree_covariance(design: SimDesign, weight: str = 'f1',
                                 scale: RhoScale = RhoScale.TRANSFORMED) -> ArrayT:
    """Limiting covariance of the degree centralities of a Gaussian design,
    from the population fourth moments."""
    pc = population_partial_correlations(design)
    dS = gaussian_delta_S(pc.sigma)
    covr = cov_rho(pc, dS, elimination_matrix(design.p + 1), scale)
    return cov_nwm_rho(covr, grad_L_D(pc.on_scale(scale), weight), NwmKind.DEGREE).sigma


def _cov_timing(replicates: int, rng: RngStream, n_jobs: int) -> McReport:
    design = SimDesign(n=TIMING_N, p=len(BIAS_BETA), beta=BIAS_BETA)
    truth = population_degree_covariance(design)
    outcomes, failures = _run(_timing_replicate, (truth, 'f1'), replicates, rng, n_jobs)
    outcomes = [o for o in outcomes if o]
    rows, timings = [], {}
    for method in (CovMethod.PLUGIN, CovMethod.BOOTSTRAP):
        errors = np.array([o[method.value] for o in outcomes])
        rows.append({
            'method': method.value,
            'mean_rel_frobenius': errors.mean() if errors.size else np.nan,
            'median_rel_frobenius': np.median(errors) if errors.size else np.nan,
        })
        timings[f'{method.value}_seconds'] = float(np.mean([o[f'{method.value}_seconds'] for o in outcomes])) \
            if outcomes else float('nan')
    return McReport(ExperimentId.COV_TIMING, replicates, pd.DataFrame(rows), failures=failures, timings=timings)


def _trend_replicate(n: int, pipeline: PipelineConfig, rng: RngStream) -> Tuple[Dict[str, bool], List[str]]:
    beta = _padded(UNSUP_BETA, CONSISTENCY_P)
    design = SimDesign(n=n, p=CONSISTENCY_P, beta=beta, r_w=0.5, group_map=UNSUP_GROUPS)
    d = _prepared(generate(design, rng.child(0)), pipeline)
    split = split_half(d.n, rng.child(1))
    try:
        active = two_step_select(d, split, pipeline.penalty, pipeline.alpha_n, rng.child(2),
                                 bonferroni=pipeline.selection_bonferroni)
        result = cluster_active(d, split, active, pipeline, rng.child(3)).result
    except NwmClustError as err:
        return {'selection': False, 'clusters': False}, [_stage_of(err)]
    truth = set(range(len(UNSUP_BETA)))
    return {'selection': set(active.indices) == truth, 'clusters': all(detected(result, UNSUP_GROUPS))}, []


def _consistency(replicates: int, rng: RngStream, n_jobs: int) -> McReport:
    """Exact-selection and all-clusters-detected rates for growing n."""
    pipeline = default_pipeline()
    rows, cells, failures = [], {}, {}
    for i, n in enumerate(CONSISTENCY_N):
        outcomes, failed = _run(_trend_replicate, (n, pipeline), replicates, rng.child(i), n_jobs)
        _merge(failures, failed, f'n={n}')
        row = {'n': n}
        for column in ('selection', 'clusters'):
            successes = sum(o[column] for o in outcomes)
            row[column] = successes / replicates
            cells[(f'n={n}', column)] = successes
        rows.append(row)
    return McReport(ExperimentId.CONSISTENCY, replicates, pd.DataFrame(rows), _rates_frame(cells, replicates),
                    failures=failures)


_EXPERIMENTS: Dict[ExperimentId, Callable[[int, RngStream, int], McReport]] = {
    ExperimentId.UNSUP_VS_SEQ: _unsup_vs_seq,
    ExperimentId.ICC_K: _icc_k,
    ExperimentId.SMALLP_SEQ: _smallp_seq,
    ExperimentId.NWM_BIAS: _nwm_bias,
    ExperimentId.WRONG_K: _wrong_k,
    ExperimentId.COV_TIMING: _cov_timing,
    ExperimentId.CONSISTENCY: _consistency,
}


def experiment_id(name: Any) -> ExperimentId:
    """Parse an experiment name.

    :raises: ValidationError listing the valid ids
    """
    try:
        return ExperimentId(name)
    except ValueError:
        valid = ', '.join(e.value for e in ExperimentId)
        raise ValidationError(f'unknown experiment {name!r}; valid ids: {valid}', stage='simulation') from None


def run_table(
    experiment: Any,
    replicates: Optional[int] = None,
    rng: RngStream = RngStream(seed=0),
    n_jobs: int = 1,
    full: bool = False,
) -> McReport:
    """Run one experiment and return its table.

    :param experiment: ExperimentId or its name
    :param replicates: replicates per cell (default 500, 5000 with `full`)
    :param rng: RngStream - base stream; cell i, replicate r use child(i).child(r)
    :param n_jobs: joblib worker count, does not affect the numbers
    :raises: ValidationError on an unknown id or replicates < 1
    """
    exp = experiment_id(experiment)
    if replicates is None:
        replicates = FULL_REPLICATES if full else DESK_REPLICATES
    if replicates < 1:
        raise ValidationError(f'replicates must be >= 1, got {replicates}', stage='simulation')
    logger.info('running %s with %d replicates (seed %d)', exp.value, replicates, rng.seed)
    start = time.perf_counter()
    report = _EXPERIMENTS[exp](replicates, rng, n_jobs)
    report = replace(report, wall_clock=time.perf_counter() - start)
    logger.info('%s finished in %.1fs, failures: %s', exp.value, report.wall_clock, report.failures or 'none')
    return report

"""
Supervised clustering of predictors by their network-wide metrics.

The headline procedure anchors a cluster at the largest remaining metric
value and tests every other remaining vertex for a difference to the
anchor; vertices whose difference is not significant join the cluster.
Modified K-means and spectral clustering of the predictors serve as
unsupervised baselines.
"""

import logging
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import linalg, optimize, stats
from sklearn.cluster import KMeans

from nwmclust._types import ArrayT, CovMethod, Indices, NwmKind, RhoScale, WeightFamily
from nwmclust.asymptotics import (
    CovarianceEstimate,
    PSD_TOL,
    check_plugin_dimension,
    cov_nwm_beta,
    cov_nwm_rho,
    cov_rho,
    delta_S,
    elimination_matrix,
    grad_L_C,
    grad_L_D,
)
from nwmclust.bootstrap import BootstrapConfig, mepsrs_covariance
from nwmclust.data_model import Dataset, RngStream, SplitPair, split_half, standardize
from nwmclust.errors import NumericalError, NwmClustError, SelectionError, ValidationError
from nwmclust.network_weights import (
    ImplicitNetwork,
    PartialCorrelations,
    WeightFunction,
    build_network,
    get_weight_function,
    partial_correlations,
)
from nwmclust.nwm import NwmVector, compute_nwm
from nwmclust.penalized_selection import (
    ActiveSet,
    PenaltyConfig,
    PostSelectionFit,
    refit_ols,
    two_step_select,
)

logger = logging.getLogger(__name__)

KMEANS_RESTARTS = 25
KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class SeqTestConfig:
    """Settings of the sequential testing procedure."""

    K: int = 3
    tau: float = 0.0
    alpha: float = 0.05
    bonferroni: bool = True
    nwm_kind: NwmKind = NwmKind.DEGREE
    cov_method: CovMethod = CovMethod.PLUGIN

    def __post_init__(self):
        object.__setattr__(self, 'nwm_kind', NwmKind(self.nwm_kind))
        object.__setattr__(self, 'cov_method', CovMethod(self.cov_method))
        if self.K < 1:
            raise ValidationError(f'K must be >= 1, got {self.K}', stage='config')
        if self.tau < 0:
            raise ValidationError(f'tau must be >= 0, got {self.tau}', stage='config')
        if not 0 < self.alpha < 1:
            raise ValidationError(f'alpha must be in (0, 1), got {self.alpha}', stage='config')
        if self.cov_method is CovMethod.MONTE_CARLO_ORACLE:
            raise ValidationError('clustering needs a plugin or bootstrap covariance', stage='config')


@dataclass(frozen=True)
class TestRecord:
    """One pairwise test of a vertex against a cluster anchor."""

    cluster: int
    anchor: int
    vertex: int
    difference: float
    statistic: float
    threshold: float
    level: float
    reject: bool
    split: Optional[int] = None


@dataclass(frozen=True, eq=False)
class ClusterResult:
    """Ordered clusters of variable indices plus the variables left over."""

    clusters: Tuple[Indices, ...]
    unassigned: Indices
    anchors: Tuple[Optional[int], ...]
    decisions: Tuple[TestRecord, ...] = ()
    names: Tuple[str, ...] = ()
    votes: Optional[pd.DataFrame] = None
    failures: Tuple[str, ...] = ()

    def __post_init__(self):
        seen: set = set()
        for members in self.clusters:
            if seen & set(members):
                raise ValidationError('clusters overlap', stage='clustering')
            seen |= set(members)
        if seen & set(self.unassigned):
            raise ValidationError('a clustered variable is also unassigned', stage='clustering')
        if len(self.anchors) != len(self.clusters):
            raise ValidationError('one anchor per cluster expected', stage='clustering')
        for members, anchor in zip(self.clusters, self.anchors):
            if (anchor is None) != (not members) or (anchor is not None and anchor not in members):
                raise ValidationError(f'anchor {anchor} is not in its cluster', stage='clustering')

    @property
    def K(self) -> int:
        """Number of cluster slots (some may be empty)."""
        return len(self.clusters)

    def name(self, index: int) -> str:
        """Display name of a variable index."""
        return self.names[index] if self.names else f'X{index + 1}'

    def cluster_of(self, index: int) -> Optional[int]:
        """1-based cluster rank of a variable, None when not clustered."""
        for rank, members in enumerate(self.clusters, start=1):
            if index in members:
                return rank
        return None

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            'clusters': [
                {
                    'rank': rank,
                    'members': [self.name(j) for j in members],
                    'indices': list(members),
                    'anchor': None if anchor is None else self.name(anchor),
                }
                for rank, (members, anchor) in enumerate(zip(self.clusters, self.anchors), start=1)
            ],
            'unassigned': [self.name(j) for j in self.unassigned],
            'decisions': [
                {**asdict(record), 'anchor': self.name(record.anchor), 'vertex': self.name(record.vertex)}
                for record in self.decisions
            ],
            'failures': list(self.failures),
        }

    def to_frame(self) -> pd.DataFrame:
        """Return one (variable, cluster, votes) row per clustered or
        unassigned variable; cluster 0 means unassigned."""
        indices = sorted({j for members in self.clusters for j in members} | set(self.unassigned))
        frame = pd.DataFrame({
            'variable': [self.name(j) for j in indices],
            'cluster': [self.cluster_of(j) or 0 for j in indices],
        })
        if self.votes is not None:
            votes = self.votes.set_index('variable')['votes']
            frame['votes'] = [int(votes.get(self.name(j), 0)) for j in indices]
        return frame


def critical_value(level: float, tau: float, sigma_p: float) -> float:
    """Critical value c of ``(|d| - tau)/sigma_p`` at the null boundary
    ``|delta| = tau``: the root of ``P(Z > c) + P(Z < -c - 2 tau/sigma_p)``
    equal to `level`.
    """
    if tau == 0 or sigma_p == 0:
        return float(stats.norm.isf(level / 2)) if tau == 0 else float(stats.norm.isf(level))
    shift = 2 * tau / sigma_p

    def excess(c: float) -> float:
        return stats.norm.sf(c) + stats.norm.cdf(-c - shift) - level

    low, high = float(stats.norm.isf(level)), float(stats.norm.isf(level / 2))
    if excess(low) <= 0:
        return low
    return float(optimize.brentq(excess, low, high, xtol=1e-12))


def sequential_cluster(nwm: NwmVector, cov: CovarianceEstimate, cfg: SeqTestConfig, n_eff: int) -> ClusterResult:
    """Cluster the vertices by sequential testing.

    For k = 1..K the remaining vertex with the largest metric (lowest index
    on ties) anchors cluster k; each other remaining vertex is tested for a
    difference to the anchor and joins when the test does not reject.

    :param nwm: NwmVector of estimated metrics
    :param cov: CovarianceEstimate of ``sqrt(n_eff)(metric - target)``
    :param cfg: SeqTestConfig
    :param n_eff: int - rows of the inference half
    :return: ClusterResult with K cluster slots, empty after exhaustion
    :raises: ValidationError on mismatched dimensions,
             NumericalError on a covariance that is not PSD
    """
    q = nwm.q
    S = cov.sigma
    if S.shape != (q, q):
        raise ValidationError(f'covariance of shape {S.shape} for {q} metrics', stage='clustering')
    if n_eff < 1:
        raise ValidationError(f'n_eff must be positive, got {n_eff}', stage='clustering')
    if q and np.min(np.linalg.eigvalsh(S)) < -PSD_TOL * max(1.0, float(np.max(np.abs(S)))):
        raise NumericalError('covariance is not positive semi-definite', stage='clustering')

    values = nwm.values
    labels = nwm.network.vertices.indices
    remaining = list(range(q))
    clusters: List[Indices] = []
    anchors: List[Optional[int]] = []
    records: List[TestRecord] = []

    for k in range(1, cfg.K + 1):
        if not remaining:
            clusters.append(())
            anchors.append(None)
            continue
        anchor = max(remaining, key=lambda i: (values[i], -i))
        others = [j for j in remaining if j != anchor]
        level = cfg.alpha / len(others) if cfg.bonferroni and others else cfg.alpha
        members = [anchor]
        for j in others:
            diff = abs(values[anchor] - values[j])
            var = S[anchor, anchor] + S[j, j] - 2 * S[anchor, j]
            sigma_p = float(np.sqrt(max(var, 0.0) / n_eff))
            threshold = critical_value(level, cfg.tau, sigma_p)
            if sigma_p > 0:
                statistic = (diff - cfg.tau) / sigma_p
                reject = statistic > threshold
            else:
                statistic = np.inf if diff > cfg.tau else -np.inf
                reject = diff > cfg.tau
            records.append(TestRecord(
                cluster=k, anchor=labels[anchor], vertex=labels[j], difference=float(diff),
                statistic=float(statistic), threshold=threshold, level=level, reject=bool(reject),
            ))
            if not reject:
                members.append(j)
        remaining = [j for j in remaining if j not in members]
        clusters.append(tuple(sorted(labels[j] for j in members)))
        anchors.append(labels[anchor])
        logger.debug('cluster %d anchored at %d: %s', k, labels[anchor], clusters[-1])

    names = _names_of(nwm.network)
    return ClusterResult(
        clusters=tuple(clusters),
        unassigned=tuple(sorted(labels[j] for j in remaining)),
        anchors=tuple(anchors),
        decisions=tuple(records),
        names=names,
    )


def _names_of(net: ImplicitNetwork) -> Tuple[str, ...]:
    """Names indexed by variable index, when the vertices carry names."""
    vertices = net.vertices
    if not vertices.names or not vertices.indices:
        return ()
    names = [f'X{j + 1}' for j in range(max(vertices.indices) + 1)]
    for j, name in zip(vertices.indices, vertices.names):
        names[j] = name
    return tuple(names)


def icc(values: Sequence[float], groups: Sequence[Sequence[int]]) -> float:
    """One-way ANOVA intra-cluster correlation of `values` grouped by
    `groups` (positions into values); -inf when it is undefined."""
    values = np.asarray(values, dtype=float)
    groups = [list(g) for g in groups if len(g)]
    n_groups = len(groups)
    total = sum(len(g) for g in groups)
    if n_groups < 2 or total - n_groups < 1:
        return -np.inf
    pooled = values[[i for g in groups for i in g]]
    grand = pooled.mean()
    ssb = sum(len(g) * (values[g].mean() - grand) ** 2 for g in groups)
    ssw = sum(float(np.sum((values[g] - values[g].mean()) ** 2)) for g in groups)
    msb = ssb / (n_groups - 1)
    msw = ssw / (total - n_groups)
    if msw == 0:
        return 1.0 if msb > 0 else -np.inf
    mean_size = total / n_groups
    return float((msb - msw) / (msb + (mean_size - 1) * msw))


def icc_scores(nwm: NwmVector, cov: CovarianceEstimate, cfg: SeqTestConfig, k_max: int,
               n_eff: Optional[int] = None) -> Dict[int, float]:
    """ICC of the sequential partition for every K in 2..k_max.

    Vertices left over after K clusters are pooled into the K-th group so
    that every vertex is scored.
    """
    q = nwm.q
    if not 2 <= k_max <= q - 1:
        raise ValidationError(f'k_max must be in [2, {q - 1}], got {k_max}', stage='icc')
    n_eff = n_eff or cov.n_eff
    if not n_eff:
        raise ValidationError('n_eff is required to choose K', stage='icc')
    position = {label: i for i, label in enumerate(nwm.network.vertices.indices)}
    scores = {}
    for K in range(2, k_max + 1):
        result = sequential_cluster(nwm, cov, replace(cfg, K=K), n_eff)
        groups = [[position[j] for j in members] for members in result.clusters[:-1]]
        groups.append([position[j] for j in result.clusters[-1] + result.unassigned])
        scores[K] = icc(nwm.values, groups)
    logger.debug('ICC by K: %s', scores)
    return scores


def choose_k_icc(nwm: NwmVector, cov: CovarianceEstimate, cfg: SeqTestConfig, k_max: int,
                 n_eff: Optional[int] = None) -> int:
    """Return the K in 2..k_max with the largest ICC, the smaller K on ties.

    :raises: NumericalError when no K yields two usable clusters
    """
    scores = icc_scores(nwm, cov, cfg, k_max, n_eff)
    best = max(scores.values())
    if not np.isfinite(best):
        raise NumericalError('no grouping structure: every K scores -inf', stage='icc')
    return min(K for K, score in scores.items() if score == best)


@dataclass(frozen=True)
class PipelineConfig:
    """Settings of one pass of select, refit, network, metric and cluster."""

    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    alpha_n: float = 0.05
    selection_bonferroni: bool = True
    family: WeightFamily = WeightFamily.F_ON_RHO
    weight: Union[str, WeightFunction] = 'f1'
    rho_scale: RhoScale = RhoScale.TRANSFORMED
    seq: SeqTestConfig = field(default_factory=SeqTestConfig)
    auto_k: bool = False
    k_max: int = 8
    standardized_degree: bool = False
    ordered_pairs: bool = True
    bootstrap_B: int = 500
    max_plugin_dim: int = 25
    standardize: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'family', WeightFamily(self.family))
        object.__setattr__(self, 'rho_scale', RhoScale(self.rho_scale))
        if self.family is WeightFamily.ANOVA_SS:
            raise ValidationError('the clustering pipeline needs a beta or rho network', stage='config')
        if self.auto_k and self.k_max < 2:
            raise ValidationError(f'k_max must be >= 2, got {self.k_max}', stage='config')
        if self.bootstrap_B < 2:
            raise ValidationError(f'bootstrap_B must be >= 2, got {self.bootstrap_B}', stage='config')


@dataclass(frozen=True, eq=False)
class SplitOutcome:
    """Everything one pipeline pass produced."""

    split: SplitPair
    active: ActiveSet
    fit: PostSelectionFit
    network: ImplicitNetwork
    nwm: NwmVector
    cov: CovarianceEstimate
    result: ClusterResult
    pc: Optional[PartialCorrelations] = None


def metric_gradient(values: ArrayT, pipeline: PipelineConfig) -> ArrayT:
    """Jacobian of the configured metric with respect to the vertex values."""
    weight = pipeline.weight
    if pipeline.seq.nwm_kind is NwmKind.DEGREE:
        L = grad_L_D(values, weight)
        return L / (values.size - 1) if pipeline.standardized_degree else L
    return grad_L_C(values, weight, pipeline.ordered_pairs)


def metric_covariance(
    sub: Dataset,
    fit: PostSelectionFit,
    values: ArrayT,
    pc: Optional[PartialCorrelations],
    pipeline: PipelineConfig,
    rng: RngStream,
) -> CovarianceEstimate:
    """Plug-in or bootstrap covariance of the metric vector on the inference
    half `sub` (active columns only)."""
    kind = pipeline.seq.nwm_kind
    if pipeline.seq.cov_method is CovMethod.BOOTSTRAP:
        cfg = BootstrapConfig(B=pipeline.bootstrap_B, rng=rng, n_jobs=1)
        return mepsrs_covariance(
            sub, kind, pipeline.weight, pipeline.family, cfg,
            rho_scale=pipeline.rho_scale,
            standardized=pipeline.standardized_degree,
            ordered_pairs=pipeline.ordered_pairs,
        )
    L = metric_gradient(values, pipeline)
    if pipeline.family is WeightFamily.F_ON_BETA:
        return cov_nwm_beta(fit, L, kind)
    check_plugin_dimension(sub.p, pipeline.max_plugin_dim)
    dS = delta_S(np.column_stack([sub.y, sub.X]))
    K = elimination_matrix(sub.p + 1)
    covr = cov_rho(pc, dS, K, pipeline.rho_scale, n_eff=sub.n, max_dim=pipeline.max_plugin_dim)
    return cov_nwm_rho(covr, L, kind)


def cluster_active(
    d: Dataset, split: SplitPair, active: ActiveSet, pipeline: PipelineConfig, rng: RngStream
) -> SplitOutcome:
    """Refit, build the network, estimate the metrics with their covariance
    and cluster them for an already selected active set.

    :raises: SelectionError when the active set is too small for the metric
    """
    need = 3 if pipeline.seq.nwm_kind is NwmKind.CLUSTERING else 2
    if active.q_hat < need:
        msg = f'{active.q_hat} selected variables, the {pipeline.seq.nwm_kind.value} network needs {need}'
        raise SelectionError(msg, hint='relax alpha_n or the penalty')

    fit = refit_ols(d, split.d2, active)
    sub = d.subset(split.d2, active.indices)
    pc = None
    if pipeline.family is WeightFamily.F_ON_BETA:
        values = fit.beta_hat
    else:
        pc = partial_correlations(sub.y, sub.X)
        values = pc.on_scale(pipeline.rho_scale)

    net = build_network(values, pipeline.weight, pipeline.family, vertices=active, rho_scale=pipeline.rho_scale)
    nwm = compute_nwm(net, pipeline.seq.nwm_kind, pipeline.standardized_degree, pipeline.ordered_pairs)
    cov = metric_covariance(sub, fit, values, pc, pipeline, rng)

    seq = pipeline.seq
    if pipeline.auto_k:
        k_max = min(pipeline.k_max, active.q_hat - 1)
        if k_max >= 2:
            seq = replace(seq, K=choose_k_icc(nwm, cov, seq, k_max, len(split.d2)))
        else:
            seq = replace(seq, K=1)
    result = sequential_cluster(nwm, cov, seq, len(split.d2))
    result = replace(result, names=d.names)
    logger.info('split clustered %d variables into %s', active.q_hat, [len(c) for c in result.clusters])
    return SplitOutcome(split, active, fit, net, nwm, cov, result, pc)


def cluster_single_split(d: Dataset, split: SplitPair, pipeline: PipelineConfig, rng: RngStream) -> SplitOutcome:
    """Run one pass of the pipeline on a given split: two-step selection on
    the first half, everything else on the second.

    :raises: SelectionError when too few variables survive selection, and
             any sub-stage error
    """
    active = two_step_select(d, split, pipeline.penalty, pipeline.alpha_n, rng.child(0),
                             bonferroni=pipeline.selection_bonferroni)
    return cluster_active(d, split, active, pipeline, rng.child(1))


def _run_split(d: Dataset, pipeline: PipelineConfig, rng: RngStream) -> Union[SplitOutcome, str]:
    """One split of the multiple-splitting loop; failures come back as text."""
    try:
        split = split_half(d.n, rng.child(0))
        return cluster_single_split(d, split, pipeline, rng.child(1))
    except NwmClustError as err:
        return str(err)


def _aggregate_votes(
    results: Sequence[ClusterResult], M: int, vote_threshold: float, names: Tuple[str, ...]
) -> ClusterResult:
    """Assign each variable to its most frequent cluster rank when the count
    clears the vote threshold."""
    n_ranks = max(result.K for result in results)
    counts: Dict[int, Counter] = defaultdict(Counter)
    anchored: Dict[int, Counter] = defaultdict(Counter)
    seen: set = set()
    for result in results:
        seen |= set(result.unassigned)
        for rank, (members, anchor) in enumerate(zip(result.clusters, result.anchors), start=1):
            seen |= set(members)
            for j in members:
                counts[j][rank] += 1
            if anchor is not None:
                anchored[rank][anchor] += 1

    assigned: Dict[int, List[int]] = defaultdict(list)
    rows = []
    for j in sorted(seen):
        rank, votes = min(counts[j].items(), key=lambda item: (-item[1], item[0])) if counts[j] else (0, 0)
        if votes and (votes > vote_threshold * M or votes == M):
            assigned[rank].append(j)
        else:
            rank = 0
        row = {'variable': names[j] if names else f'X{j + 1}', 'cluster': rank, 'votes': votes}
        row.update({f'cluster_{r}': counts[j][r] for r in range(1, n_ranks + 1)})
        rows.append(row)

    clusters, anchors = [], []
    for rank in range(1, n_ranks + 1):
        members = tuple(sorted(assigned[rank]))
        clusters.append(members)
        if members:
            anchors.append(min(members, key=lambda j: (-anchored[rank][j], -counts[j][rank], j)))
        else:
            anchors.append(None)
    clustered = {j for members in clusters for j in members}
    return ClusterResult(
        clusters=tuple(clusters),
        unassigned=tuple(j for j in sorted(seen) if j not in clustered),
        anchors=tuple(anchors),
        names=names,
        votes=pd.DataFrame(rows),
    )


def multiple_split_analysis(
    d: Dataset, M: int, vote_threshold: float, pipeline: PipelineConfig, rng: RngStream
) -> Tuple[ClusterResult, List[SplitOutcome]]:
    """Repeat the pipeline on M independent splits and assign variables by
    vote share.

    A variable goes to the cluster rank it reached most often when that
    count exceeds ``vote_threshold * M`` (or equals M). Failing splits are
    logged, skipped and listed in the result. Split m uses the stream
    ``rng.child(m)``.

    :return: (aggregated ClusterResult, outcomes of the successful splits)
    :raises: ValidationError on bad M or threshold,
             SelectionError when every split failed
    """
    if M < 1:
        raise ValidationError(f'M must be >= 1, got {M}', stage='multiple-split')
    if not 0 < vote_threshold <= 1:
        raise ValidationError(f'vote_threshold must be in (0, 1], got {vote_threshold}', stage='multiple-split')
    if pipeline.standardize and not d.standardized:
        d = standardize(d)
    pipeline = replace(pipeline, weight=get_weight_function(pipeline.weight))

    outcomes = Parallel(n_jobs=pipeline.n_jobs)(
        delayed(_run_split)(d, pipeline, rng.child(m)) for m in range(M)
    )
    failures = []
    succeeded: List[SplitOutcome] = []
    decisions: List[TestRecord] = []
    for m, outcome in enumerate(outcomes):
        if isinstance(outcome, str):
            logger.warning('split %d skipped: %s', m, outcome)
            failures.append(f'split {m}: {outcome}')
            continue
        succeeded.append(outcome)
        decisions.extend(replace(record, split=m) for record in outcome.result.decisions)
    if not succeeded:
        raise SelectionError(f'all {M} splits failed: {failures[0]}', stage='multiple-split')
    logger.info('%d of %d splits clustered', len(succeeded), M)

    if M == 1:
        result = succeeded[0].result
        indices = sorted(set(result.unassigned).union(*result.clusters))
        votes = pd.DataFrame({
            'variable': [result.name(j) for j in indices],
            'cluster': [result.cluster_of(j) or 0 for j in indices],
            'votes': [int(result.cluster_of(j) is not None) for j in indices],
        })
        return replace(result, votes=votes), succeeded

    aggregated = _aggregate_votes([o.result for o in succeeded], M, vote_threshold, d.names)
    return replace(aggregated, decisions=tuple(decisions), failures=tuple(failures)), succeeded


def multiple_split_cluster(
    d: Dataset, M: int, vote_threshold: float, pipeline: PipelineConfig, rng: RngStream
) -> ClusterResult:
    """Aggregated clusters of :func:`multiple_split_analysis`."""
    return multiple_split_analysis(d, M, vote_threshold, pipeline, rng)[0]


def estimates_table(outcomes: Sequence[SplitOutcome]) -> pd.DataFrame:
    """Metric estimates with standard errors, one row per split and vertex."""
    frames = []
    for m, outcome in enumerate(outcomes):
        frame = outcome.nwm.to_frame()
        frame.insert(0, 'split', m)
        frame['se'] = outcome.cov.standard_errors() if outcome.cov.n_eff else np.nan
        frames.append(frame)
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def _association_order(d: Dataset, labels: ArrayT, k: int) -> ClusterResult:
    """Turn cluster labels over the predictors into a ClusterResult ordered
    by descending mean |correlation with y|."""
    assoc = np.abs([np.corrcoef(d.X[:, j], d.y)[0, 1] for j in range(d.p)])
    assoc = np.nan_to_num(assoc)
    groups = [np.flatnonzero(labels == c) for c in range(k)]
    groups = [g for g in groups if g.size]
    groups.sort(key=lambda g: (-assoc[g].mean(), int(g[0])))
    return ClusterResult(
        clusters=tuple(tuple(int(j) for j in g) for g in groups),
        unassigned=(),
        anchors=tuple(int(g[np.argmax(assoc[g])]) for g in groups),
        names=d.names,
    )


def _kmeans_labels(points: ArrayT, k: int, rng: RngStream) -> ArrayT:
    seed = int(rng.generator().integers(0, 2 ** 31 - 1))
    model = KMeans(
        n_clusters=k,
        init='k-means++',
        n_init=KMEANS_RESTARTS,
        max_iter=KMEANS_MAX_ITER,
        algorithm='lloyd',
        random_state=seed,
    )
    return model.fit_predict(points)


def modified_kmeans(d: Dataset, k: int, rng: RngStream) -> ClusterResult:
    """K-means on the predictors: each column of X is one point in R^n.

    :raises: ValidationError if k > p
    """
    if not 1 <= k <= d.p:
        raise ValidationError(f'k must be in [1, {d.p}], got {k}', stage='kmeans')
    labels = _kmeans_labels(d.X.T, k, rng)
    return _association_order(d, labels, k)


def modified_spectral(d: Dataset, k: int, rng: RngStream) -> ClusterResult:
    """Spectral clustering of the predictors on the |correlation| similarity
    with the unnormalized Laplacian ``G - M``.

    :raises: ValidationError if k > p, NumericalError if the eigensolver fails
    """
    if not 1 <= k <= d.p:
        raise ValidationError(f'k must be in [1, {d.p}], got {k}', stage='spectral')
    similarity = np.abs(np.corrcoef(d.X, rowvar=False))
    similarity = np.nan_to_num(np.atleast_2d(similarity))
    np.fill_diagonal(similarity, 0.0)
    laplacian = np.diag(similarity.sum(axis=1)) - similarity
    try:
        _, vectors = linalg.eigh(laplacian)
    except linalg.LinAlgError as err:
        raise NumericalError(f'eigen-decomposition failed: {err}', stage='spectral') from None
    labels = _kmeans_labels(vectors[:, :k], k, rng)
    return _association_order(d, labels, k)

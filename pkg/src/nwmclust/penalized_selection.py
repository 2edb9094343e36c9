"""
Sparse model estimation with the SCAD and MCP penalties.

The penalized fit minimizes ``RSS/(2m) + sum_j p_lambda(|beta_j|)`` over the
``m`` fitting rows by cyclic coordinate descent. Every coordinate update is
the exact minimizer of the univariate problem, so the objective can only go
down from one sweep to the next.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from nwmclust._types import ArrayT, Indices, IndexT, PenaltyFamily
from nwmclust.data_model import Dataset, RngStream, SplitPair
from nwmclust.errors import (
    ConvergenceError,
    KinkError,
    NumericalError,
    RankDeficiencyError,
    SelectionError,
    ValidationError,
)

logger = logging.getLogger(__name__)

DEFAULT_A = {PenaltyFamily.SCAD: 3.7, PenaltyFamily.MCP: 3.0}
RANK_TOL = 1e-10


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty family, its shape parameter and the tuning grid.

    With ``lambda_grid=None`` the grid is derived from the fitting rows:
    `n_lambda` log-spaced values from ``max|X'y|/m`` down to
    ``lambda_min_ratio`` times that value.
    """

    family: PenaltyFamily = PenaltyFamily.SCAD
    a: Optional[float] = None
    lambda_grid: Optional[Tuple[float, ...]] = None
    cv_folds: int = 5
    n_lambda: int = 50
    lambda_min_ratio: float = 1e-3
    tol: float = 1e-8
    max_sweeps: int = 10000

    def __post_init__(self):
        object.__setattr__(self, 'family', PenaltyFamily(self.family))
        if self.a is None:
            object.__setattr__(self, 'a', DEFAULT_A[self.family])
        check_shape_parameter(self.family, self.a)
        if self.lambda_grid is not None:
            grid = tuple(float(lam) for lam in self.lambda_grid)
            object.__setattr__(self, 'lambda_grid', grid)
            if not grid or min(grid) <= 0:
                raise ValidationError('lambda_grid must hold positive values', stage='config')
            if any(later >= earlier for earlier, later in zip(grid, grid[1:])):
                raise ValidationError('lambda_grid must be strictly decreasing', stage='config')
        if self.cv_folds < 2:
            raise ValidationError(f'cv_folds must be >= 2, got {self.cv_folds}', stage='config')
        if self.n_lambda < 1 or not 0 < self.lambda_min_ratio < 1:
            raise ValidationError('need n_lambda >= 1 and lambda_min_ratio in (0, 1)', stage='config')


@dataclass(frozen=True, eq=False)
class PenalizedFit:
    """Result of :func:`fit_penalized`."""

    beta: ArrayT
    lambda_star: float
    lambdas: ArrayT
    cv_error: Optional[ArrayT] = None

    def __iter__(self):
        # unpacks as (beta, lambda_star)
        return iter((self.beta, self.lambda_star))

    @property
    def support(self) -> Indices:
        """Indices of the nonzero coefficients."""
        return tuple(int(j) for j in np.flatnonzero(self.beta))


@dataclass(frozen=True)
class ActiveSet:
    """Sorted indices of the selected predictors and where they came from."""

    indices: Indices
    source_split: Optional[SplitPair] = None
    names: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        indices = tuple(int(j) for j in self.indices)
        object.__setattr__(self, 'indices', indices)
        if len(set(indices)) != len(indices) or list(indices) != sorted(indices):
            raise ValidationError(f'active indices must be sorted and distinct: {indices}')
        if indices and indices[0] < 0:
            raise ValidationError(f'negative active index in {indices}')
        if self.names and len(self.names) != len(indices):
            raise ValidationError('one name per active index expected')

    @property
    def q_hat(self) -> int:
        """Number of selected predictors."""
        return len(self.indices)

    @property
    def is_empty(self) -> bool:
        """Whether nothing was selected."""
        return not self.indices

    def label(self, position: int) -> str:
        """Return a display name for the vertex at `position`."""
        if self.names:
            return self.names[position]
        return f'X{self.indices[position] + 1}'


@dataclass(frozen=True, eq=False)
class PostSelectionFit:
    """Least-squares refit on the inference half restricted to the active set."""

    beta_hat: ArrayT
    sigma2_hat: float
    se: ArrayT
    xtx_inv: ArrayT
    n_rows: int
    active: ActiveSet

    @property
    def v_hat(self) -> ArrayT:
        """Per-row Gram matrix estimate ``X'X/m`` of the restricted design."""
        return np.linalg.inv(self.xtx_inv) / self.n_rows


def check_shape_parameter(family: PenaltyFamily, a: float) -> None:
    """Validate the penalty shape parameter.

    :raises: ValidationError unless a > 2 (SCAD) or a > 1 (MCP)
    """
    bound = 2.0 if PenaltyFamily(family) is PenaltyFamily.SCAD else 1.0
    if not a > bound:
        msg = f'{PenaltyFamily(family).name} requires a > {bound:g}, got {a}'
        raise ValidationError(msg, stage='config')


def _check_theta(theta: float, lam: float) -> None:
    if theta < 0:
        raise ValidationError(f'theta must be nonnegative, got {theta}', stage='penalty')
    if lam <= 0:
        raise ValidationError(f'lambda must be positive, got {lam}', stage='penalty')


def penalty_value(family: PenaltyFamily, theta: float, lam: float, a: float) -> float:
    """Return the penalty p_lambda(theta) for theta >= 0."""
    check_shape_parameter(family, a)
    _check_theta(theta, lam)
    if PenaltyFamily(family) is PenaltyFamily.SCAD:
        if theta <= lam:
            return lam * theta
        if theta <= a * lam:
            return (2 * a * lam * theta - theta ** 2 - lam ** 2) / (2 * (a - 1))
        return lam ** 2 * (a + 1) / 2
    if theta <= a * lam:
        return lam * theta - theta ** 2 / (2 * a)
    return a * lam ** 2 / 2


def penalty_derivative(family: PenaltyFamily, theta: float, lam: float, a: float) -> float:
    """Return p'_lambda(theta) for theta >= 0.

    :param family: PenaltyFamily - SCAD or MCP
    :param theta: float - nonnegative argument
    :param lam: float - positive tuning parameter
    :param a: float - shape parameter
    :return: float - the (right) derivative, equal to lambda at 0
    :raises: ValidationError on a negative theta or an invalid shape parameter
    """
    check_shape_parameter(family, a)
    _check_theta(theta, lam)
    if PenaltyFamily(family) is PenaltyFamily.SCAD:
        if theta <= lam:
            return lam
        return max(a * lam - theta, 0.0) / (a - 1)
    return max(a * lam - theta, 0.0) / a


def penalty_second_derivative(family: PenaltyFamily, theta: float, lam: float, a: float) -> float:
    """Return p''_lambda(theta) away from the penalty's kinks.

    :raises: KinkError when theta sits exactly on a kink (lambda or a*lambda
             for SCAD, a*lambda for MCP)
    """
    check_shape_parameter(family, a)
    _check_theta(theta, lam)
    scad = PenaltyFamily(family) is PenaltyFamily.SCAD
    kinks = (lam, a * lam) if scad else (a * lam,)
    if any(np.isclose(theta, kink, rtol=1e-12, atol=1e-15) for kink in kinks):
        msg = f'penalty is not twice differentiable at theta={theta} (lambda={lam}, a={a})'
        raise KinkError(msg, hint='perturb lambda slightly')
    if scad:
        return -1.0 / (a - 1) if lam < theta < a * lam else 0.0
    return -1.0 / a if theta < a * lam else 0.0


def _soft(u: float, thresh: float) -> float:
    return np.sign(u) * max(abs(u) - thresh, 0.0)


def _univariate_solution(family: PenaltyFamily, u: float, v: float, lam: float, a: float) -> float:
    """Minimize ``v/2 b^2 - u b + p_lambda(|b|)`` exactly."""
    if family is PenaltyFamily.SCAD:
        if abs(u) <= lam * (1 + v):
            return _soft(u, lam) / v
        if abs(u) <= a * lam * v:
            return _soft(u, a * lam / (a - 1)) / (v - 1 / (a - 1))
        return u / v
    if abs(u) <= a * lam * v:
        return _soft(u, lam) / (v - 1 / a)
    return u / v


def _penalty_sum(beta: ArrayT, lam: float, cfg: PenaltyConfig) -> float:
    """Vectorized sum of p_lambda(|beta_j|)."""
    theta, a = np.abs(beta), cfg.a
    if cfg.family is PenaltyFamily.SCAD:
        values = np.where(
            theta <= lam,
            lam * theta,
            np.where(
                theta <= a * lam,
                (2 * a * lam * theta - theta ** 2 - lam ** 2) / (2 * (a - 1)),
                lam ** 2 * (a + 1) / 2,
            ),
        )
    else:
        values = np.where(theta <= a * lam, lam * theta - theta ** 2 / (2 * a), a * lam ** 2 / 2)
    return float(values.sum())


def _objective(X: ArrayT, y: ArrayT, beta: ArrayT, lam: float, cfg: PenaltyConfig) -> float:
    resid = y - X @ beta
    return float(resid @ resid / (2 * len(y)) + _penalty_sum(beta, lam, cfg))


def _coordinate_descent(
    X: ArrayT, y: ArrayT, lam: float, cfg: PenaltyConfig, beta0: ArrayT
) -> ArrayT:
    """Run cyclic coordinate descent at a single lambda from `beta0`.

    :raises: ConvergenceError after cfg.max_sweeps sweeps,
             NumericalError if the objective ever increases
    """
    m = len(y)
    col_sq = np.einsum('ij,ij->j', X, X) / m
    floor = 1 / (cfg.a - 1) if cfg.family is PenaltyFamily.SCAD else 1 / cfg.a
    if np.any(col_sq <= floor):
        msg = f'column scale too small for the {cfg.family.name} coordinate problem'
        raise NumericalError(msg, stage='penalized-fit', hint='standardize the predictors')

    beta = beta0.copy()
    resid = y - X @ beta
    previous = _objective(X, y, beta, lam, cfg)
    delta = np.inf
    for sweep in range(1, cfg.max_sweeps + 1):
        delta = 0.0
        for j in range(X.shape[1]):
            old = beta[j]
            u = X[:, j] @ resid / m + col_sq[j] * old
            new = _univariate_solution(cfg.family, u, col_sq[j], lam, cfg.a)
            if new != old:
                resid -= X[:, j] * (new - old)
                beta[j] = new
                delta = max(delta, abs(new - old))
        current = _objective(X, y, beta, lam, cfg)
        if current > previous + 1e-10 * max(1.0, abs(previous)):
            msg = f'objective increased from {previous} to {current} at lambda={lam}'
            raise NumericalError(msg, stage='penalized-fit')
        previous = current
        if delta < cfg.tol:
            logger.debug('lambda=%.6g converged after %d sweeps', lam, sweep)
            return beta

    msg = f'no convergence at lambda={lam} after {cfg.max_sweeps} sweeps (last delta {delta:.3g})'
    raise ConvergenceError(msg, hint='increase max_sweeps or coarsen the lambda grid')


def lambda_grid(X: ArrayT, y: ArrayT, cfg: PenaltyConfig) -> ArrayT:
    """Return the descending tuning grid used for the given rows."""
    if cfg.lambda_grid is not None:
        return np.asarray(cfg.lambda_grid)
    lam_max = float(np.max(np.abs(X.T @ y)) / len(y))
    if lam_max <= 0:
        lam_max = 1.0  # y orthogonal to every column: any grid gives beta = 0
    return np.geomspace(lam_max, lam_max * cfg.lambda_min_ratio, cfg.n_lambda)


def solution_path(X: ArrayT, y: ArrayT, lambdas: Sequence[float], cfg: PenaltyConfig) -> ArrayT:
    """Fit the whole grid with warm starts; row ``l`` holds beta at lambdas[l]."""
    path = np.zeros((len(lambdas), X.shape[1]))
    beta = np.zeros(X.shape[1])
    for idx, lam in enumerate(lambdas):
        beta = _coordinate_descent(X, y, lam, cfg, beta)
        path[idx] = beta
    return path


def fit_penalized(d: Dataset, rows: IndexT, cfg: PenaltyConfig, rng: RngStream) -> PenalizedFit:
    """Fit the penalized least-squares model on `rows`, tuning lambda by
    K-fold cross-validated prediction error.

    Ties in CV error go to the larger lambda.

    :param d: Dataset - (standardized) data
    :param rows: row indices to fit on
    :param cfg: PenaltyConfig
    :param rng: RngStream - fold assignment
    :return: PenalizedFit with beta of length p and the chosen lambda
    :raises: ValidationError if rows is empty or smaller than cv_folds,
             ConvergenceError from the coordinate descent
    """
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        raise ValidationError('no rows to fit on', stage='penalized-fit')
    X, y = d.X[rows], d.y[rows]
    lambdas = lambda_grid(X, y, cfg)

    if len(lambdas) == 1:
        beta = solution_path(X, y, lambdas, cfg)[0]
        return PenalizedFit(beta=beta, lambda_star=float(lambdas[0]), lambdas=lambdas)

    if len(rows) < cfg.cv_folds:
        msg = f'{len(rows)} rows cannot be split into {cfg.cv_folds} folds'
        raise ValidationError(msg, stage='penalized-fit')

    folds = np.array_split(rng.generator().permutation(len(rows)), cfg.cv_folds)
    errors = np.zeros((cfg.cv_folds, len(lambdas)))
    for k, test in enumerate(folds):
        train = np.setdiff1d(np.arange(len(rows)), test)
        path = solution_path(X[train], y[train], lambdas, cfg)
        resid = y[test][:, None] - X[test] @ path.T
        errors[k] = np.mean(resid ** 2, axis=0)

    cv_error = errors.mean(axis=0)
    best = int(np.flatnonzero(cv_error <= cv_error.min())[0])
    logger.debug('CV errors: %s', np.array2string(cv_error, precision=4))
    beta = solution_path(X, y, lambdas[: best + 1], cfg)[-1]
    logger.info('lambda*=%.4g selects %d of %d predictors', lambdas[best], np.count_nonzero(beta), d.p)
    return PenalizedFit(beta=beta, lambda_star=float(lambdas[best]), lambdas=lambdas, cv_error=cv_error)


def least_squares(X: ArrayT, y: ArrayT) -> Tuple[ArrayT, float, ArrayT]:
    """Return (beta, sigma2, xtx_inv) of the no-intercept OLS fit.

    :raises: RankDeficiencyError reporting the smallest singular value
    """
    m, q = X.shape
    u_mat, sing, vt = np.linalg.svd(X, full_matrices=False)
    if sing[-1] <= RANK_TOL * max(sing[0], 1.0):
        msg = f'restricted design is rank deficient (smallest singular value {sing[-1]:.3g})'
        raise RankDeficiencyError(msg, hint='drop collinear predictors')
    beta = vt.T @ ((u_mat.T @ y) / sing)
    xtx_inv = (vt.T / sing ** 2) @ vt
    xtx_inv = (xtx_inv + xtx_inv.T) / 2
    resid = y - X @ beta
    sigma2 = float(resid @ resid / (m - q))
    return beta, sigma2, xtx_inv


def two_step_select(
    d: Dataset,
    split: SplitPair,
    cfg: PenaltyConfig,
    alpha_n: float,
    rng: RngStream,
    bonferroni: bool = True,
) -> ActiveSet:
    """Select predictors on the first half: penalized support, then keep the
    coefficients whose OLS t-statistic on the same half is significant.

    ``alpha_n = 1`` disables the t-test screen.

    :return: ActiveSet, empty when the penalized fit selects nothing
    :raises: ValidationError on alpha_n outside (0, 1],
             SelectionError if the support is too large to refit
    """
    if not 0 < alpha_n <= 1:
        raise ValidationError(f'alpha_n must be in (0, 1], got {alpha_n}', stage='selection')

    rows = np.asarray(split.d1, dtype=int)
    support = fit_penalized(d, rows, cfg, rng).support
    if not support:
        logger.warning('penalized fit selected no predictors')
        return ActiveSet(indices=(), source_split=split)
    if len(support) >= len(rows):
        msg = f'{len(support)} selected predictors cannot be tested on {len(rows)} rows'
        raise SelectionError(msg, hint='use a larger sample or a stronger penalty')
    if alpha_n >= 1:
        kept = support
    else:
        X = d.X[np.ix_(rows, support)]
        beta, sigma2, xtx_inv = least_squares(X, d.y[rows])
        se = np.sqrt(sigma2 * np.diag(xtx_inv))
        with np.errstate(divide='ignore', invalid='ignore'):
            t_stat = np.where(se > 0, np.abs(beta) / se, np.where(beta != 0, np.inf, 0.0))
        level = alpha_n / len(support) if bonferroni else alpha_n
        critical = stats.t.ppf(1 - level / 2, len(rows) - len(support))
        kept = tuple(j for j, t in zip(support, t_stat) if t > critical)
        logger.debug('t-statistics %s against critical value %.3f', np.round(t_stat, 3), critical)

    logger.info('two-step selection kept %d of %d penalized picks', len(kept), len(support))
    return ActiveSet(
        indices=kept,
        source_split=split,
        names=tuple(d.names[j] for j in kept),
    )


def dimension_match(truth: Sequence[float], active: ActiveSet) -> ArrayT:
    """Return the entries of `truth` at the active indices (false positives
    map to whatever `truth` holds there, 0 for a sparse population vector).
    """
    truth = np.asarray(truth, dtype=float)
    if active.indices and active.indices[-1] >= len(truth):
        raise ValidationError(f'active index {active.indices[-1]} outside truth of length {len(truth)}')
    return truth[list(active.indices)]


def refit_ols(d: Dataset, rows: IndexT, active: ActiveSet) -> PostSelectionFit:
    """Least-squares refit on `rows` restricted to the active columns.

    :raises: ValidationError when there are too few rows,
             RankDeficiencyError on a singular restricted design
    """
    rows = np.asarray(rows, dtype=int)
    q_hat = active.q_hat
    if q_hat < 1:
        raise SelectionError('cannot refit an empty active set', stage='refit')
    if len(rows) <= q_hat + 1:
        msg = f'refit needs more than {q_hat + 1} rows, got {len(rows)}'
        raise ValidationError(msg, stage='refit')
    X = d.X[np.ix_(rows, list(active.indices))]
    beta, sigma2, xtx_inv = least_squares(X, d.y[rows])
    return PostSelectionFit(
        beta_hat=beta,
        sigma2_hat=sigma2,
        se=np.sqrt(sigma2 * np.diag(xtx_inv)),
        xtx_inv=xtx_inv,
        n_rows=len(rows),
        active=active,
    )

"""
Plug-in limiting covariances of refitted coefficients, partial correlations
and the network-wide metrics built on them.

Conventions:

* Gradient matrices are Jacobians: row ``i`` holds the derivatives of metric
  ``i`` with respect to every input. A covariance ``S`` of the inputs maps to
  ``J S J'`` for the metrics.
* Every :class:`CovarianceEstimate` describes ``sqrt(m)(theta_hat - theta)``
  where ``m`` (`n_eff`) is the number of rows of the inference half.
* ``vec`` stacks columns; ``vech`` stacks the lower triangle column by column.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from nwmclust._types import (
    ArrayT,
    CovMethod,
    CovTarget,
    FunctionId,
    NwmKind,
    RhoScale,
)
from nwmclust.errors import NumericalError, ValidationError
from nwmclust.network_weights import (
    RHO_CLAMP,
    PartialCorrelations,
    WeightFunction,
    fd_step,
    get_weight_function,
)
from nwmclust.nwm import clustering_norm
from nwmclust.penalized_selection import (
    PenaltyConfig,
    PostSelectionFit,
    penalty_derivative,
    penalty_second_derivative,
)

logger = logging.getLogger(__name__)

PSD_TOL = 1e-8
MAX_PLUGIN_DIM = 25
SCALE_NOTE = 'covariance of sqrt(n_eff) * (estimate - target)'

WeightT = Union[str, FunctionId, WeightFunction]


@dataclass(frozen=True, eq=False)
class EliminationMatrix:
    """Binary matrix mapping vec(M) to vech(M) for symmetric m x m M."""

    K: ArrayT
    m: int

    def vech(self, M: ArrayT) -> ArrayT:
        """Half-vectorize a symmetric matrix."""
        return self.K @ vec(M)


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """A symmetric PSD covariance estimate with its provenance."""

    target: CovTarget
    sigma: ArrayT
    method: CovMethod
    n_eff: Optional[int] = None
    scale: str = SCALE_NOTE

    def __post_init__(self):
        sigma = np.atleast_2d(np.array(self.sigma, dtype=float, copy=True))
        if sigma.shape[0] != sigma.shape[1]:
            raise ValidationError(f'covariance must be square, got {sigma.shape}', stage='covariance')
        top = max(1.0, float(np.max(np.abs(sigma)))) if sigma.size else 1.0
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-8 * top):
            raise NumericalError('covariance estimate is not symmetric', stage='covariance')
        sigma = (sigma + sigma.T) / 2
        if sigma.size and np.min(np.linalg.eigvalsh(sigma)) < -PSD_TOL * top:
            raise NumericalError('covariance estimate is not positive semi-definite', stage='covariance')
        sigma.setflags(write=False)
        object.__setattr__(self, 'sigma', sigma)
        object.__setattr__(self, 'target', CovTarget(self.target))
        object.__setattr__(self, 'method', CovMethod(self.method))

    @property
    def q(self) -> int:
        """Dimension of the estimate."""
        return self.sigma.shape[0]

    def standard_errors(self) -> ArrayT:
        """Standard errors of the estimates themselves (not of the scaled
        quantity)."""
        if not self.n_eff:
            raise ValidationError('n_eff unknown, cannot scale standard errors', stage='covariance')
        return np.sqrt(np.clip(np.diag(self.sigma), 0.0, None) / self.n_eff)

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            'target': self.target.value,
            'method': self.method.value,
            'n_eff': self.n_eff,
            'scale': self.scale,
            'sigma': self.sigma.tolist(),
        }


def vec(M: ArrayT) -> ArrayT:
    """Stack the columns of `M`."""
    return np.asarray(M).flatten(order='F')


def vech_index(i: int, j: int, m: int) -> int:
    """Position of entry (i, j), i >= j, inside vech of an m x m matrix."""
    return j * m + i - j * (j + 1) // 2


def elimination_matrix(m: int) -> EliminationMatrix:
    """Build the ``m(m+1)/2 x m^2`` elimination matrix.

    :raises: ValidationError if m < 1
    """
    if m < 1:
        raise ValidationError(f'elimination matrix needs m >= 1, got {m}', stage='asymptotics')
    K = np.zeros((m * (m + 1) // 2, m * m))
    for j in range(m):
        for i in range(j, m):
            K[vech_index(i, j, m), j * m + i] = 1.0
    return EliminationMatrix(K=K, m=m)


def _coerce_target(kind: Union[str, NwmKind, CovTarget]) -> CovTarget:
    return CovTarget(getattr(kind, 'value', kind))


def finite_difference_jacobian(fn: Callable[[ArrayT], ArrayT], x: Sequence[float]) -> ArrayT:
    """Central-difference Jacobian of a vector map, one column per input."""
    x = np.asarray(x, dtype=float)
    columns = []
    for k in range(x.size):
        h = fd_step(x[k])
        up, down = x.copy(), x.copy()
        up[k] += h
        down[k] -= h
        columns.append((np.ravel(fn(up)) - np.ravel(fn(down))) / (2 * h))
    return np.column_stack(columns)


def _pairwise(func: Callable, values: ArrayT) -> ArrayT:
    """Evaluate ``func(v_a, v_b)`` for all a != b; zero on the diagonal."""
    q = values.size
    rows, cols = np.where(~np.eye(q, dtype=bool))
    out = np.zeros((q, q))
    if rows.size:
        out[rows, cols] = func(values[rows], values[cols])
    return out


def _prepare(values: Sequence[float], f_id: WeightT) -> Tuple[ArrayT, WeightFunction]:
    vals = np.asarray(values, dtype=float)
    weight = get_weight_function(f_id)
    if weight.f_id is FunctionId.F1 and np.any(vals > RHO_CLAMP):
        logger.warning('partial correlations at 1 clamped to %.9f for f1 derivatives', RHO_CLAMP)
    return vals, weight


def grad_L_D(values: Sequence[float], f_id: WeightT) -> ArrayT:
    """Jacobian of the degree centralities with respect to the vertex values.

    Diagonal: ``sum_{r != j} d f(v_j, v_r) / d v_j``;
    off-diagonal (j, k): ``d f(v_j, v_k) / d v_k``.
    """
    vals, weight = _prepare(values, f_id)
    D1 = _pairwise(weight.d1, vals)
    J = D1.T.copy()
    np.fill_diagonal(J, D1.sum(axis=1))
    return J


def grad_L_C(values: Sequence[float], f_id: WeightT, ordered_pairs: bool = True) -> ArrayT:
    """Jacobian of the clustering coefficients with respect to the vertex
    values.

    A vertex value never enters its own coefficient, so the diagonal is 0.
    With ordered pairs both orientations of an edge carry the derivative.
    """
    vals, weight = _prepare(values, f_id)
    q = vals.size
    if q < 3:
        raise ValidationError('clustering gradient needs at least 3 vertices', stage='asymptotics')
    D1 = _pairwise(weight.d1, vals)
    factor = (2.0 if ordered_pairs else 1.0) / clustering_norm(q)
    J = factor * (D1.sum(axis=1)[None, :] - D1.T)
    np.fill_diagonal(J, 0.0)
    return J


def hessian_D(values: Sequence[float], f_id: WeightT) -> ArrayT:
    """Second derivatives of the degree centralities; ``H[i, j, k]`` is
    ``d^2 D_i / d v_j d v_k``."""
    vals, weight = _prepare(values, f_id)
    q = vals.size
    D11 = _pairwise(weight.d11, vals)
    D12 = _pairwise(weight.d12, vals)
    H = np.zeros((q, q, q))
    for i in range(q):
        H[i, i, :] = D12[i]
        H[i, :, i] = D12[i]
        H[i][np.diag_indices(q)] = D11[:, i]
        H[i, i, i] = D11[i].sum()
    return H


def hessian_C(values: Sequence[float], f_id: WeightT, ordered_pairs: bool = True) -> ArrayT:
    """Second derivatives of the clustering coefficients; ``H[i, j, k]`` is
    ``d^2 C_i / d v_j d v_k``."""
    vals, weight = _prepare(values, f_id)
    q = vals.size
    if q < 3:
        raise ValidationError('clustering Hessian needs at least 3 vertices', stage='asymptotics')
    D11 = _pairwise(weight.d11, vals)
    D12 = _pairwise(weight.d12, vals)
    factor = (2.0 if ordered_pairs else 1.0) / clustering_norm(q)
    H = np.zeros((q, q, q))
    for i in range(q):
        block = D12.copy()
        np.fill_diagonal(block, D11.sum(axis=1) - D11[:, i])
        block[i, :] = 0.0
        block[:, i] = 0.0
        H[i] = factor * block
    return H


def grad_h(gamma: ArrayT, scale: RhoScale = RhoScale.TRANSFORMED) -> ArrayT:
    """Jacobian of the partial correlations with respect to vech(gamma).

    Row i depends on gamma_00, gamma_{i+1,0} and gamma_{i+1,i+1} only. The
    transformed scale ``(1 + rho)/2`` halves every entry.

    :raises: ValidationError if gamma is not symmetric positive definite
    """
    gamma = np.asarray(gamma, dtype=float)
    m = gamma.shape[0]
    try:
        np.linalg.cholesky(gamma)
    except np.linalg.LinAlgError:
        raise ValidationError('precision matrix is not positive definite', stage='asymptotics') from None
    if not np.allclose(gamma, gamma.T):
        raise ValidationError('precision matrix is not symmetric', stage='asymptotics')

    factor = 0.5 if RhoScale(scale) is RhoScale.TRANSFORMED else 1.0
    g00 = gamma[0, 0]
    grad = np.zeros((m - 1, m * (m + 1) // 2))
    for i in range(m - 1):
        a = i + 1
        gaa, ga0 = gamma[a, a], gamma[a, 0]
        grad[i, vech_index(a, 0, m)] = -1.0 / np.sqrt(g00 * gaa)
        grad[i, vech_index(0, 0, m)] = ga0 / (2 * g00 ** 1.5 * np.sqrt(gaa))
        grad[i, vech_index(a, a, m)] = ga0 / (2 * np.sqrt(g00) * gaa ** 1.5)
    return factor * grad


def delta_S(samples: ArrayT) -> ArrayT:
    """Fourth-moment matrix of the rows: the average of
    ``(y_i y_i') kron (y_i y_i')`` over centered rows minus
    ``vec(S) vec(S)'`` with S the 1/n sample covariance.

    :raises: ValidationError with fewer than 2 rows
    """
    samples = np.asarray(samples, dtype=float)
    n, m = samples.shape
    if n < 2:
        raise ValidationError('fourth-moment matrix needs at least 2 rows', stage='asymptotics')
    centered = samples - samples.mean(axis=0)
    Z = np.einsum('ni,nj->nij', centered, centered).reshape(n, m * m)
    mean = Z.mean(axis=0)
    delta = Z.T @ Z / n - np.outer(mean, mean)
    return (delta + delta.T) / 2


def gaussian_delta_S(sigma: ArrayT) -> ArrayT:
    """Population fourth-moment matrix of a centered Gaussian vector with
    covariance `sigma`: ``S_ik S_jl + S_il S_jk``."""
    sigma = np.asarray(sigma, dtype=float)
    m = sigma.shape[0]
    T = np.einsum('ik,jl->ijkl', sigma, sigma) + np.einsum('il,jk->ijkl', sigma, sigma)
    return T.reshape(m * m, m * m)


def check_plugin_dimension(q: int, max_dim: int = MAX_PLUGIN_DIM) -> None:
    """Refuse plug-in covariances whose Kronecker products get too large.

    :raises: ValidationError if q > max_dim
    """
    if q > max_dim:
        msg = f'plug-in covariance refused for {q} active predictors (limit {max_dim})'
        raise ValidationError(msg, stage='covariance', hint='use the bootstrap covariance method')


def cov_rho(
    pc: PartialCorrelations,
    dS: ArrayT,
    K: EliminationMatrix,
    scale: RhoScale = RhoScale.TRANSFORMED,
    n_eff: Optional[int] = None,
    max_dim: int = MAX_PLUGIN_DIM,
) -> CovarianceEstimate:
    """Plug-in covariance of the partial correlations: ``G dS G'`` with
    ``G = grad_h K L`` and ``L = -(gamma kron gamma)``.

    :raises: ValidationError on mismatched dimensions or q > max_dim
    """
    q = pc.rho.size
    m = q + 1
    check_plugin_dimension(q, max_dim)
    if dS.shape != (m * m, m * m) or K.m != m:
        msg = f'dimension mismatch: q={q}, delta_S {dS.shape}, elimination m={K.m}'
        raise ValidationError(msg, stage='covariance')
    L = -np.kron(pc.gamma, pc.gamma)
    G = grad_h(pc.gamma, scale) @ K.K @ L
    return CovarianceEstimate(CovTarget.RHO, G @ dS @ G.T, CovMethod.PLUGIN, n_eff=n_eff)


def _check_gradient(L: ArrayT, q: int, target: CovTarget) -> None:
    if L.shape != (q, q):
        raise ValidationError(f'gradient of shape {L.shape} for {q} estimates', stage='covariance')
    if target is CovTarget.CLUSTERING and q < 3:
        raise ValidationError('clustering covariance needs at least 3 vertices', stage='covariance')


def cov_nwm_beta(
    fit: PostSelectionFit, L: ArrayT, kind: Union[NwmKind, CovTarget]
) -> CovarianceEstimate:
    """Plug-in covariance of metrics built on refitted coefficients:
    ``sigma2 J (m (X'X)^-1) J'``.
    """
    target = _coerce_target(kind)
    L = np.atleast_2d(np.asarray(L, dtype=float))
    _check_gradient(L, fit.beta_hat.size, target)
    sigma = fit.sigma2_hat * L @ (fit.n_rows * fit.xtx_inv) @ L.T
    return CovarianceEstimate(target, sigma, CovMethod.PLUGIN, n_eff=fit.n_rows)


def cov_nwm_rho(
    covRho: CovarianceEstimate, L: ArrayT, kind: Union[NwmKind, CovTarget]
) -> CovarianceEstimate:
    """Plug-in covariance of metrics built on partial correlations:
    ``J cov_rho J'``."""
    target = _coerce_target(kind)
    L = np.atleast_2d(np.asarray(L, dtype=float))
    _check_gradient(L, covRho.q, target)
    sigma = L @ covRho.sigma @ L.T
    return CovarianceEstimate(target, sigma, CovMethod.PLUGIN, n_eff=covRho.n_eff)


def penalized_bias_diagnostics(
    beta_hat: Sequence[float],
    cfg: PenaltyConfig,
    lam: float,
    L: ArrayT,
    H: ArrayT,
    xtx: ArrayT,
    sigma2: float,
) -> Tuple[ArrayT, ArrayT]:
    """Approximate bias and covariance of metrics computed from penalized
    (not refitted) coefficients.

    With ``b_j = p'(|beta_j|) sgn(beta_j)``, ``S = diag(p''(|beta_j|))`` and
    ``c = (V + S)^-1 b``, the bias of metric i is ``-(J c)_i - c' H_i c``
    and the covariance is ``sigma2 G A V A G'`` with ``A = (V + S)^-1`` and
    ``G = J + H c``. Derivatives are evaluated at `beta_hat`, so both are
    approximations.

    :param xtx: per-row Gram matrix V of the active predictors
    :raises: KinkError if some |beta_j| sits on a kink of the penalty
    """
    beta = np.asarray(beta_hat, dtype=float)
    theta = np.abs(beta)
    b = np.array([penalty_derivative(cfg.family, t, lam, cfg.a) for t in theta]) * np.sign(beta)
    second = np.array([penalty_second_derivative(cfg.family, t, lam, cfg.a) for t in theta])
    V = np.asarray(xtx, dtype=float)
    A = np.linalg.inv(V + np.diag(second))
    c = A @ b
    L = np.asarray(L, dtype=float)
    H = np.asarray(H, dtype=float)
    bias = -(L @ c + np.einsum('ijk,j,k->i', H, c, c))
    G = L + np.einsum('ijk,k->ij', H, c)
    cov = sigma2 * G @ A @ V @ A @ G.T
    logger.debug('bias diagnostics evaluated at beta_hat (approximate)')
    return bias, (cov + cov.T) / 2

"""
Implicit weighted networks over the selected predictors.

Edge weights are a symmetric function f of per-vertex quantities (refitted
coefficients or partial correlations with the response), or the share of
the response's total sum of squares explained by a two-way interaction of
categorical factors.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from nwmclust._types import ArrayT, FunctionId, RhoScale, WeightFamily, WeightFuncT
from nwmclust.errors import DataError, NumericalError, SingularCovarianceError, ValidationError
from nwmclust.penalized_selection import ActiveSet

logger = logging.getLogger(__name__)

F1_DOMAIN_TOL = 1e-12
RHO_CLAMP = 1 - 1e-9
COND_LIMIT = 1e12
SYMMETRY_TOL = 1e-12


def fd_step(x: Union[float, ArrayT]) -> Union[float, ArrayT]:
    """Central finite-difference step used throughout the library."""
    return np.maximum(1e-6, 1e-6 * np.abs(x))


def _check_f1_domain(*args: Any) -> None:
    for arg in args:
        arr = np.asarray(arg, dtype=float)
        if np.any(arr < -F1_DOMAIN_TOL) or np.any(arr > 1 + F1_DOMAIN_TOL):
            raise ValidationError('f1 is defined on [0, 1] only', stage='network')


def f1(x, y):
    """``sqrt(2(1 - x^2)) + sqrt(2(1 - y^2))`` for x, y in [0, 1]."""
    _check_f1_domain(x, y)
    x = np.clip(x, 0.0, 1.0)
    y = np.clip(y, 0.0, 1.0)
    return np.sqrt(2 * (1 - x ** 2)) + np.sqrt(2 * (1 - y ** 2))


def f2(x, y):
    """Euclidean norm of the pair (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError('f2 needs finite inputs', stage='network')
    return np.hypot(x, y)


def _f1_d1(x, y):
    x = np.minimum(x, RHO_CLAMP)
    return -np.sqrt(2) * x / np.sqrt(1 - x ** 2)


def _f1_d11(x, y):
    x = np.minimum(x, RHO_CLAMP)
    return -np.sqrt(2) / (1 - x ** 2) ** 1.5


def _f1_d12(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def _f2_norm(x, y):
    norm = np.hypot(x, y)
    if np.any(norm == 0):
        raise NumericalError('f2 is not differentiable at (0, 0)', stage='gradient')
    return norm


def _f2_d1(x, y):
    return x / _f2_norm(x, y)


def _f2_d11(x, y):
    return y ** 2 / _f2_norm(x, y) ** 3


def _f2_d12(x, y):
    return -x * y / _f2_norm(x, y) ** 3


@dataclass(frozen=True)
class WeightFunction:
    """A symmetric edge-weight function with its partial derivatives.

    ``d1`` is the derivative in the first argument, ``d11`` the second
    derivative in the first argument and ``d12`` the mixed one; derivatives
    in the second argument follow from symmetry. A `unit_domain` function
    only accepts inputs in [0, 1].
    """

    name: str
    f_id: FunctionId
    fn: Callable
    d1: Callable
    d11: Callable
    d12: Callable
    vectorized: bool = True
    unit_domain: bool = False

    def __call__(self, x, y):
        return self.fn(x, y)

    def matrix(self, values: Sequence[float]) -> ArrayT:
        """Return ``f(v_i, v_j)`` for all pairs, diagonal set to zero."""
        vals = np.asarray(values, dtype=float)
        if self.vectorized:
            W = np.asarray(self.fn(vals[:, None], vals[None, :]), dtype=float)
        else:
            W = np.array([[self.fn(a, b) for b in vals] for a in vals], dtype=float)
        W = (W + W.T) / 2
        np.fill_diagonal(W, 0.0)
        return W


_REGISTRY: Dict[str, WeightFunction] = {
    'f1': WeightFunction('f1', FunctionId.F1, f1, _f1_d1, _f1_d11, _f1_d12, unit_domain=True),
    'f2': WeightFunction('f2', FunctionId.F2, f2, _f2_d1, _f2_d11, _f2_d12),
}


def _numeric_partials(fn: WeightFuncT) -> Tuple[Callable, Callable, Callable]:
    """Central-difference first and second partials of a scalar function."""

    def d1(x, y):
        h = fd_step(x)
        return (fn(x + h, y) - fn(x - h, y)) / (2 * h)

    def d11(x, y):
        h = 1e3 * fd_step(x)
        return (fn(x + h, y) - 2 * fn(x, y) + fn(x - h, y)) / h ** 2

    def d12(x, y):
        hx, hy = 1e3 * fd_step(x), 1e3 * fd_step(y)
        return (
            fn(x + hx, y + hy) - fn(x + hx, y - hy) - fn(x - hx, y + hy) + fn(x - hx, y - hy)
        ) / (4 * hx * hy)

    return np.vectorize(d1), np.vectorize(d11), np.vectorize(d12)


def register_weight_function(
    name: str,
    fn: WeightFuncT,
    domain: Tuple[float, float] = (0.0, 1.0),
    probes: int = 25,
) -> WeightFunction:
    """Register a custom weight function after probing its contract.

    The function must be symmetric, nonnegative, vanish exactly on the
    diagonal and have smooth second differences on `domain`.

    :param name: str - registry key (must not shadow f1/f2)
    :param fn: callable f(x, y) -> float
    :param domain: (low, high) - interval the probes are drawn from
    :param probes: int - number of probe points
    :return: WeightFunction with finite-difference derivatives
    :raises: ValidationError if any probe fails
    """
    if name in ('f1', 'f2'):
        raise ValidationError(f'{name!r} is a built-in weight function', stage='network')
    low, high = domain
    grid = np.linspace(low, high, probes + 2)[1:-1]
    pairs = [(x, y) for x in grid[::3] for y in grid[1::3]]
    for x, y in pairs:
        fxy, fyx = float(fn(x, y)), float(fn(y, x))
        if not (np.isfinite(fxy) and fxy >= 0):
            raise ValidationError(f'{name}: f({x:.3g}, {y:.3g}) = {fxy} is not >= 0', stage='network')
        if abs(fxy - fyx) > 1e-12 * max(1.0, abs(fxy)):
            raise ValidationError(f'{name}: f is not symmetric at ({x:.3g}, {y:.3g})', stage='network')
        if x != y and fxy <= 0:
            raise ValidationError(f'{name}: f vanishes off the diagonal at ({x:.3g}, {y:.3g})', stage='network')
    for x in grid:
        if abs(float(fn(x, x))) > 1e-12:
            raise ValidationError(f'{name}: f({x:.3g}, {x:.3g}) must be 0', stage='network')

    d1, d11, d12 = _numeric_partials(fn)
    for x, y in pairs:
        coarse = float(d11(x, y))
        h = 2e3 * fd_step(x)
        wide = (fn(x + h, y) - 2 * fn(x, y) + fn(x - h, y)) / h ** 2
        if not np.isfinite(coarse) or abs(coarse - wide) > 1e-2 * max(1.0, abs(coarse)):
            raise ValidationError(f'{name}: f is not smooth near ({x:.3g}, {y:.3g})', stage='network')

    weight = WeightFunction(name, FunctionId.CUSTOM, fn, d1, d11, d12, vectorized=False)
    _REGISTRY[name] = weight
    logger.info('Registered custom weight function %r', name)
    return weight


def get_weight_function(weight: Union[str, FunctionId, WeightFunction]) -> WeightFunction:
    """Look up a weight function by name or id."""
    if isinstance(weight, WeightFunction):
        return weight
    key = weight.value if isinstance(weight, FunctionId) else str(weight)
    try:
        return _REGISTRY[key]
    except KeyError:
        msg = f'unknown weight function {key!r}; registered: {sorted(_REGISTRY)}'
        raise ValidationError(msg, stage='network') from None


@dataclass(frozen=True, eq=False)
class PartialCorrelations:
    """Partial correlations of the response with each active predictor."""

    rho_raw: ArrayT
    rho: ArrayT
    gamma: ArrayT
    sigma: ArrayT

    def on_scale(self, scale: RhoScale) -> ArrayT:
        """Return the raw or the transformed partial correlations."""
        return self.rho if RhoScale(scale) is RhoScale.TRANSFORMED else self.rho_raw


def sample_covariance(samples: ArrayT) -> ArrayT:
    """Covariance of the rows of `samples` with 1/n scaling."""
    centered = samples - samples.mean(axis=0)
    return centered.T @ centered / samples.shape[0]


def rho_from_gamma(gamma: ArrayT) -> ArrayT:
    """Raw partial correlations of variable 0 with the others, read off a
    precision matrix."""
    diag = np.diag(gamma)
    return -gamma[0, 1:] / np.sqrt(diag[0] * diag[1:])


def partial_correlations(y: Sequence[float], Xs: ArrayT) -> PartialCorrelations:
    """Partial correlations of `y` with each column of `Xs` given the rest.

    :param y: response values
    :param Xs: matrix of the active predictor columns
    :return: PartialCorrelations
    :raises: ValidationError with too few rows,
             SingularCovarianceError if the joint covariance is singular
    """
    Xs = np.asarray(Xs, dtype=float)
    if Xs.ndim == 1:
        Xs = Xs.reshape(-1, 1)
    samples = np.column_stack([np.asarray(y, dtype=float), Xs])
    q = Xs.shape[1]
    if samples.shape[0] < q + 2:
        msg = f'{samples.shape[0]} rows are too few for {q} active predictors'
        raise ValidationError(msg, stage='partial-correlations')

    sigma = sample_covariance(samples)
    cond = np.linalg.cond(sigma)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        msg = f'joint covariance of (y, X_S) is singular (condition number {cond:.3g})'
        raise SingularCovarianceError(msg, hint='drop collinear predictors')
    gamma = np.linalg.inv(sigma)
    gamma = (gamma + gamma.T) / 2
    rho_raw = np.clip(rho_from_gamma(gamma), -1.0, 1.0)
    return PartialCorrelations(rho_raw=rho_raw, rho=(1 + rho_raw) / 2, gamma=gamma, sigma=sigma)


@dataclass(frozen=True, eq=False)
class ImplicitNetwork:
    """Fully connected weighted network over the active predictors."""

    W: ArrayT
    vertices: ActiveSet
    weight_family: WeightFamily
    f_id: Optional[FunctionId] = None
    weight_name: Optional[str] = None
    values: Optional[ArrayT] = None
    rho_scale: Optional[RhoScale] = None

    def __post_init__(self):
        W = np.array(self.W, dtype=float, copy=True)
        W.setflags(write=False)
        object.__setattr__(self, 'W', W)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValidationError(f'weight matrix must be square, got {W.shape}', stage='network')
        if self.vertices.q_hat != W.shape[0]:
            msg = f'{self.vertices.q_hat} vertices but a {W.shape[0]}x{W.shape[0]} weight matrix'
            raise ValidationError(msg, stage='network')
        scale = max(1.0, float(np.max(np.abs(W)))) if W.size else 1.0
        if not np.allclose(W, W.T, rtol=0, atol=SYMMETRY_TOL * scale):
            raise ValidationError('weight matrix is not symmetric', stage='network')
        if np.any(np.diag(W) != 0):
            raise ValidationError('weight matrix must have a zero diagonal', stage='network')
        if np.any(W < 0):
            raise ValidationError('edge weights must be nonnegative', stage='network')
        if self.weight_family is WeightFamily.ANOVA_SS and np.any(W > 1):
            raise ValidationError('ANOVA weights must not exceed 1', stage='network')

    @property
    def q(self) -> int:
        """Number of vertices."""
        return self.W.shape[0]

    @property
    def labels(self) -> Tuple[str, ...]:
        """Display names of the vertices."""
        return tuple(self.vertices.label(i) for i in range(self.q))

    def edge_list(self) -> pd.DataFrame:
        """Return the upper-triangle edges as a (i, j, weight) table."""
        rows, cols = np.triu_indices(self.q, k=1)
        labels = self.labels
        return pd.DataFrame({
            'i': [labels[i] for i in rows],
            'j': [labels[j] for j in cols],
            'weight': self.W[rows, cols],
        })

    def to_dense(self) -> Dict[str, Any]:
        """Return a JSON-ready dense representation."""
        return {
            'vertices': list(self.labels),
            'weight_family': self.weight_family.value,
            'weight': self.weight_name,
            'W': self.W.tolist(),
        }


def build_network(
    values: Sequence[float],
    f_id: Union[str, FunctionId, WeightFunction],
    family: WeightFamily,
    vertices: Optional[ActiveSet] = None,
    rho_scale: Optional[RhoScale] = None,
) -> ImplicitNetwork:
    """Build the network with weights ``W_ij = f(values_i, values_j)``.

    :param values: refitted coefficients (F_ON_BETA) or partial correlations
                   (F_ON_RHO) of the active predictors
    :param f_id: weight function id, registered name or WeightFunction
    :param family: WeightFamily
    :param vertices: ActiveSet labelling the vertices (default 0..q-1)
    :param rho_scale: scale of the partial correlations, for provenance
    :raises: ValidationError with fewer than 2 vertices
    """
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 1 or vals.size < 2:
        raise ValidationError(f'need at least 2 vertices, got {vals.size}', stage='network')
    family = WeightFamily(family)
    if family is WeightFamily.ANOVA_SS:
        raise ValidationError('use anova_weights() for ANOVA networks', stage='network')
    weight = get_weight_function(f_id)
    if vertices is None:
        vertices = ActiveSet(indices=tuple(range(vals.size)))
    if family is WeightFamily.F_ON_RHO and rho_scale is None:
        rho_scale = RhoScale.TRANSFORMED
    return ImplicitNetwork(
        W=weight.matrix(vals),
        vertices=vertices,
        weight_family=family,
        f_id=weight.f_id,
        weight_name=weight.name,
        values=vals,
        rho_scale=rho_scale,
    )


def anova_weights(y: Sequence[float], factors: Any, names: Optional[Sequence[str]] = None) -> ImplicitNetwork:
    """Network of categorical factors weighted by the share of the total sum
    of squares carried by each pairwise interaction.

    :param y: response values, length n
    :param factors: n x p array-like of categorical levels
    :param names: optional factor names
    :return: ImplicitNetwork of family ANOVA_SS
    :raises: DataError on an unbalanced pair of factors, a factor with a
             single level, or a constant response
    """
    y = np.asarray(y, dtype=float)
    table = pd.DataFrame(factors)
    n, p = table.shape
    if n != y.size:
        raise DataError(f'{y.size} responses for {n} factor rows', stage='anova')
    if p < 2:
        raise DataError('need at least two factors', stage='anova')
    codes = []
    for col in table.columns:
        code, levels = pd.factorize(table[col], sort=True)
        if len(levels) < 2:
            raise DataError(f'factor {col!r} has a single level', stage='anova')
        codes.append(code)

    grand = y.mean()
    tss = float(np.sum((y - grand) ** 2))
    if tss <= 0:
        raise DataError('total sum of squares is zero (constant response)', stage='anova')

    W = np.zeros((p, p))
    for i in range(p):
        for j in range(i + 1, p):
            shape = (codes[i].max() + 1, codes[j].max() + 1)
            counts = np.zeros(shape)
            sums = np.zeros(shape)
            np.add.at(counts, (codes[i], codes[j]), 1)
            np.add.at(sums, (codes[i], codes[j]), y)
            if np.any(counts != counts.flat[0]):
                msg = f'factors {i} and {j} are unbalanced, cell counts {counts.astype(int).tolist()}'
                raise DataError(msg, stage='anova', hint='ANOVA weights need a balanced design')
            cell = sums / counts
            interaction = cell - cell.mean(axis=1, keepdims=True) - cell.mean(axis=0, keepdims=True) + grand
            ss_ij = counts.flat[0] * float(np.sum(interaction ** 2))
            W[i, j] = W[j, i] = min(ss_ij / tss, 1.0)

    labels = tuple(str(name) for name in (names if names is not None else table.columns))
    return ImplicitNetwork(
        W=W,
        vertices=ActiveSet(indices=tuple(range(p)), names=labels),
        weight_family=WeightFamily.ANOVA_SS,
    )

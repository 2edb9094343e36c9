"""
Built-in oracle and invariant checks, runnable without pytest through
``nwmclust selftest``.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from nwmclust._types import CovMethod, CovTarget, NwmKind, PenaltyFamily, RhoScale, WeightFamily
from nwmclust.asymptotics import (
    CovarianceEstimate,
    elimination_matrix,
    finite_difference_jacobian,
    grad_h,
    grad_L_C,
    grad_L_D,
    vech_index,
    vec,
)
from nwmclust.clustering import SeqTestConfig, sequential_cluster
from nwmclust.network_weights import (
    anova_weights,
    build_network,
    f1,
    f2,
    partial_correlations,
    rho_from_gamma,
)
from nwmclust.nwm import NwmVector, centrality_identity_check, clustering_coefficient, compute_nwm
from nwmclust.penalized_selection import penalty_derivative
from nwmclust.simulation import bias_targets

logger = logging.getLogger(__name__)

ORACLE_SIGMA = np.array([[3.0, 1.0, 1.0], [1.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
ORACLE_GAMMA = np.array([[1.0, -1.0, -1.0], [-1.0, 2.0, 1.0], [-1.0, 1.0, 2.0]])
FD_RTOL = 1e-5


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one self-test check."""

    name: str
    passed: bool
    detail: str = ''


CHECKS: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = []


def check(name: str) -> Callable:
    """Register a check returning ``(passed, detail)``."""

    def decorator(fn: Callable[[], Tuple[bool, str]]) -> Callable:
        CHECKS.append((name, fn))
        return fn

    return decorator


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


@check('partial correlations of the 3x3 oracle')
def _oracle_partial_correlations() -> Tuple[bool, str]:
    gamma = np.linalg.inv(ORACLE_SIGMA)
    rho_raw = rho_from_gamma(gamma)
    ok = np.allclose(gamma, ORACLE_GAMMA) and np.allclose(rho_raw, 1 / np.sqrt(2))
    return ok, f'rho_raw={np.round(rho_raw, 5).tolist()}'


@check('elimination matrix half-vectorizes symmetric matrices')
def _elimination() -> Tuple[bool, str]:
    rng = np.random.default_rng(1)
    for m in (1, 2, 3, 5):
        A = rng.standard_normal((m, m))
        M = A + A.T
        K = elimination_matrix(m)
        expected = np.array([M[i, j] for j in range(m) for i in range(j, m)])
        if not np.array_equal(K.K @ vec(M), expected):
            return False, f'mismatch at m={m}'
    return True, 'm in 1, 2, 3, 5'


@check('metric gradients match finite differences')
def _gradients() -> Tuple[bool, str]:
    rng = np.random.default_rng(2)
    worst = 0.0
    for weight in ('f1', 'f2'):
        for _ in range(20):
            v = rng.uniform(0.1, 0.9, size=5)

            def degree(x, w=weight):
                return compute_nwm(build_network(x, w, WeightFamily.F_ON_RHO), NwmKind.DEGREE).values

            def clustering(x, w=weight):
                return compute_nwm(build_network(x, w, WeightFamily.F_ON_RHO), NwmKind.CLUSTERING).values

            worst = max(worst, _rel_err(grad_L_D(v, weight), finite_difference_jacobian(degree, v)))
            worst = max(worst, _rel_err(grad_L_C(v, weight), finite_difference_jacobian(clustering, v)))
    return worst < FD_RTOL, f'max relative error {worst:.2e}'


@check('partial-correlation gradient matches finite differences')
def _grad_h() -> Tuple[bool, str]:
    m = ORACLE_GAMMA.shape[0]
    pairs = [(i, j) for j in range(m) for i in range(j, m)]
    worst = 0.0
    for gamma in (ORACLE_GAMMA, np.eye(m)):
        theta = np.array([gamma[i, j] for i, j in pairs])

        def rho_of(t, scale):
            G = np.zeros((m, m))
            for value, (i, j) in zip(t, pairs):
                G[i, j] = G[j, i] = value
            raw = rho_from_gamma(G)
            return raw if scale is RhoScale.RAW else (1 + raw) / 2

        for scale in RhoScale:
            numeric = finite_difference_jacobian(lambda t, s=scale: rho_of(t, s), theta)
            worst = max(worst, _rel_err(grad_h(gamma, scale), numeric))
    assert vech_index(m - 1, m - 1, m) == len(pairs) - 1
    return worst < FD_RTOL, f'max relative error {worst:.2e}'


@check('degree/clustering identity')
def _identity() -> Tuple[bool, str]:
    rng = np.random.default_rng(3)
    net = build_network(rng.uniform(0, 1, size=6), 'f2', WeightFamily.F_ON_BETA)
    holds, deviation = centrality_identity_check(net)
    return holds, f'deviation {deviation:.2e}'


@check('f1/f2 identity')
def _f1_f2() -> Tuple[bool, str]:
    rng = np.random.default_rng(4)
    x, y = rng.uniform(0, 1, size=(2, 200))
    lhs = f1(x, y) ** 2
    s = f2(x, y) ** 2
    rhs = 4 - 2 * s + 4 * np.sqrt(np.clip(1 - s - (f2(x ** 2, y ** 2) ** 2 - s ** 2) / 2, 0, None))
    err = float(np.max(np.abs(lhs - rhs)))
    return err < 1e-10, f'max deviation {err:.2e}'


@check('ANOVA weight of a pure 2x2 interaction')
def _anova() -> Tuple[bool, str]:
    net = anova_weights([1.0, -1.0, -1.0, 1.0], [[0, 0], [0, 1], [1, 0], [1, 1]])
    additive = anova_weights([0.0, 1.0, 2.0, 3.0], [[0, 0], [0, 1], [1, 0], [1, 1]])
    ok = np.isclose(net.W[0, 1], 1.0) and np.isclose(additive.W[0, 1], 0.0)
    return bool(ok), f'W12={net.W[0, 1]:.6f}, additive W12={additive.W[0, 1]:.6f}'


@check('SCAD and MCP derivatives')
def _penalties() -> Tuple[bool, str]:
    values = (
        penalty_derivative(PenaltyFamily.SCAD, 0.5, 1.0, 3.7),
        penalty_derivative(PenaltyFamily.SCAD, 2.0, 1.0, 3.7),
        penalty_derivative(PenaltyFamily.MCP, 3.5, 1.0, 3.0),
    )
    ok = np.allclose(values, (1.0, 1.7 / 2.7, 0.0))
    return bool(ok), f'{np.round(values, 5).tolist()}'


@check('sequential clustering hand trace')
def _sequential() -> Tuple[bool, str]:
    net = build_network([0.1, 0.1, 0.6, 0.6], 'f2', WeightFamily.F_ON_BETA)
    nwm = NwmVector(NwmKind.DEGREE, [10.0, 10.0, 5.0, 5.0], net)
    cov = CovarianceEstimate(CovTarget.DEGREE, 1e-6 * np.eye(4), CovMethod.PLUGIN, n_eff=100)
    result = sequential_cluster(nwm, cov, SeqTestConfig(K=2), 100)
    ok = result.clusters == ((0, 1), (2, 3))
    return ok, f'clusters {result.clusters}'


@check('clustering coefficient of a uniform network')
def _uniform() -> Tuple[bool, str]:
    values = clustering_coefficient(build_network([0.0, 0.0, 0.0, 0.0], 'f1', WeightFamily.F_ON_RHO)).values
    return bool(np.allclose(values, 2 * np.sqrt(2))), f'{values.tolist()}'


@check('population targets of the bias study')
def _bias_targets() -> Tuple[bool, str]:
    D, C = bias_targets()
    ok = abs(D - 9.748) < 0.06 and abs(C - 0.545) < 0.01
    return ok, f'D={D:.4f}, C={C:.4f}'


@check('partial correlations from data match the oracle covariance')
def _partial_from_data() -> Tuple[bool, str]:
    rng = np.random.default_rng(5)
    samples = rng.multivariate_normal(np.zeros(3), ORACLE_SIGMA, size=20000)
    pc = partial_correlations(samples[:, 0], samples[:, 1:])
    err = float(np.max(np.abs(pc.rho_raw - 1 / np.sqrt(2))))
    return err < 0.05, f'max deviation {err:.3f}'


def run_selftest() -> List[CheckResult]:
    """Run every registered check; a check that raises counts as failed."""
    results = []
    for name, fn in CHECKS:
        try:
            passed, detail = fn()
        except Exception as err:  # pylint: disable=broad-except
            passed, detail = False, f'{type(err).__name__}: {err}'
        level = logging.INFO if passed else logging.ERROR
        logger.log(level, '%s %s (%s)', 'PASS' if passed else 'FAIL', name, detail)
        results.append(CheckResult(name, bool(passed), detail))
    return results

"""
Network-wide metrics: weighted degree centrality and clustering coefficient.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd

from nwmclust._types import ArrayT, NwmKind
from nwmclust.errors import ValidationError
from nwmclust.network_weights import ImplicitNetwork

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class NwmVector:
    """Per-vertex metric values of an implicit network."""

    kind: NwmKind
    values: ArrayT
    network: ImplicitNetwork
    standardized: bool = False
    ordered_pairs: bool = True

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'kind', NwmKind(self.kind))
        if values.shape != (self.network.q,):
            raise ValidationError(f'{values.shape} metric values for {self.network.q} vertices', stage='nwm')

    @property
    def q(self) -> int:
        """Number of vertices."""
        return self.values.size

    def to_frame(self) -> pd.DataFrame:
        """Return one (vertex, kind, value) row per vertex."""
        return pd.DataFrame({
            'vertex': list(self.network.labels),
            'kind': self.kind.value,
            'value': self.values,
        })


def degree_centrality(net: ImplicitNetwork, standardized: bool = False) -> NwmVector:
    """Sum of the edge weights incident to every vertex.

    :param net: ImplicitNetwork with at least 2 vertices
    :param standardized: bool - divide by q - 1
    :return: NwmVector of kind DEGREE
    """
    if net.q < 2:
        raise ValidationError('degree centrality needs at least 2 vertices', stage='nwm')
    values = net.W.sum(axis=1)
    if standardized:
        values = values / (net.q - 1)
    return NwmVector(NwmKind.DEGREE, values, net, standardized=standardized)


def clustering_norm(q: int) -> float:
    """Normalizing constant of the clustering coefficient."""
    return float((q - 1) * (q - 2))


def clustering_coefficient(net: ImplicitNetwork, ordered_pairs: bool = True) -> NwmVector:
    """Average weight of the edges between the other vertices.

    With `ordered_pairs` every undirected edge enters the sum twice, once per
    orientation; otherwise once. The denominator is ``(q-1)(q-2)`` either
    way, so the unordered variant is half the ordered one on a symmetric
    network.

    :raises: ValidationError with fewer than 3 vertices
    """
    q = net.q
    if q < 3:
        raise ValidationError(f'clustering coefficient needs at least 3 vertices, got {q}', stage='nwm')
    W = net.W
    values = np.empty(q)
    for i in range(q):
        others = np.delete(np.arange(q), i)
        sub = W[np.ix_(others, others)]
        pair_sum = sub.sum() if ordered_pairs else np.triu(sub, k=1).sum()
        values[i] = pair_sum / clustering_norm(q)
    return NwmVector(NwmKind.CLUSTERING, values, net, ordered_pairs=ordered_pairs)


def compute_nwm(net: ImplicitNetwork, kind: NwmKind, standardized: bool = False,
                ordered_pairs: bool = True) -> NwmVector:
    """Dispatch to the metric named by `kind`."""
    if NwmKind(kind) is NwmKind.DEGREE:
        return degree_centrality(net, standardized=standardized)
    return clustering_coefficient(net, ordered_pairs=ordered_pairs)


def centrality_identity_check(net: ImplicitNetwork) -> Tuple[bool, float]:
    """Check that every clustering coefficient equals the total ordered weight
    minus twice the vertex degree, over ``(q-1)(q-2)``.

    The clustering coefficients are summed from the network directly, so a
    weight matrix that is not symmetric breaks the identity.

    :return: (holds, maximum absolute deviation)
    """
    q = net.q
    if q < 3:
        raise ValidationError('identity check needs at least 3 vertices', stage='nwm')
    W = net.W
    direct = np.array([
        np.delete(np.delete(W, i, axis=0), i, axis=1).sum() for i in range(q)
    ]) / clustering_norm(q)
    via_degree = (W.sum() - 2 * W.sum(axis=1)) / clustering_norm(q)
    deviation = float(np.max(np.abs(direct - via_degree)))
    holds = deviation <= IDENTITY_TOL * max(1.0, float(np.max(np.abs(direct))))
    if not holds:
        logger.warning('degree/clustering identity fails, max deviation %.3g', deviation)
    return holds, deviation

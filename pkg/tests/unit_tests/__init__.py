"""
Common test helpers
"""
import os
from pathlib import Path
from typing import Sequence

import numpy as np
import pytest
from pyfakefs.fake_filesystem import FakeFilesystem as FakeFs
from pyfakefs.fake_filesystem_unittest import Patcher

from nwmclust._types import CovMethod, CovTarget, NwmKind, PathT, WeightFamily
from nwmclust.asymptotics import CovarianceEstimate
from nwmclust.data_model import Dataset, RngStream, standardize
from nwmclust.network_weights import build_network
from nwmclust.nwm import NwmVector
from nwmclust.simulation import generate, preset_design

FSROOT = Path(os.sep)

ORACLE_SIGMA = np.array([[3.0, 1.0, 1.0], [1.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
ORACLE_GAMMA = np.array([[1.0, -1.0, -1.0], [-1.0, 2.0, 1.0], [-1.0, 1.0, 2.0]])


@pytest.fixture
def fake_fs():
    """Yield FakeFilesystem object to allow for tests which do not touch
    the real fs. (`pytest` has a `pyfakefs` plugin injecting a ready
    FakeFs as `fs` but we prefer to have an explicit feature for clarity.)
    """
    patcher = Patcher(use_cache=False)
    patcher.setUp()
    yield patcher.fs
    patcher.tearDown()


@pytest.fixture
def strong_data() -> Dataset:
    """Standardized draw of the strong-signal three-group design."""
    return standardize(generate(preset_design('icc-strong', n=200), RngStream(seed=11)))


@pytest.fixture
def small_data() -> Dataset:
    """Raw draw with three independent predictors and y = 3 x1 - 2 x3 + noise."""
    gen = np.random.default_rng(3)
    X = gen.standard_normal((100, 3))
    y = 3 * X[:, 0] - 2 * X[:, 2] + gen.standard_normal(100)
    return Dataset(y=y, X=X, names=('a', 'b', 'c'))


def get_content(fullpath: PathT) -> str:
    """Return content of text file with given full path."""
    with open(fullpath, 'r') as fd:
        return fd.read()


def create_csv(fake_fs: FakeFs, path: PathT, lines: Sequence[str]) -> PathT:
    """Create a CSV file from its text lines."""
    fake_fs.create_file(path, contents='\n'.join(lines) + '\n')
    return path


def make_nwm(values: Sequence[float], kind: NwmKind = NwmKind.DEGREE) -> NwmVector:
    """Metric vector over vertices 0..q-1 with given values."""
    net = build_network(np.linspace(0.1, 0.9, len(values)), 'f2', WeightFamily.F_ON_BETA)
    return NwmVector(kind, values, net)


def tiny_cov(q: int, n_eff: int = 100) -> CovarianceEstimate:
    """Near-zero diagonal covariance: every nonzero difference is significant."""
    return CovarianceEstimate(CovTarget.DEGREE, 1e-6 * np.eye(q), CovMethod.PLUGIN, n_eff=n_eff)

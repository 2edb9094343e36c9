"""
Unit tests for the .. module:: nwmclust.config module.
"""

import pytest
from pyfakefs.fake_filesystem import FakeFilesystem as FakeFs

from nwmclust import __version__
from nwmclust._types import CovMethod, NwmKind, PenaltyFamily, WeightFamily
from nwmclust.config import RunConfig, apply_overrides
from nwmclust.errors import ValidationError
from . import (
    FSROOT,
    fake_fs,  # do not remove fake_fs - used via injection
)

INI = """
[penalty]
family = mcp

[network]
family = beta
weight = f2

[clustering]
k = auto  ; chosen by ICC
k_max = 5
tau = 0.1
cov_method = bootstrap

[bootstrap]
b = 100

[run]
seed = 7
n_jobs = 2
"""


def test_defaults():
    cfg = RunConfig()
    assert cfg.seed == 0
    assert cfg.splits == 20
    assert cfg.vote_threshold == 0.6
    assert cfg.out == 'out'
    pipeline = cfg.validate()
    assert pipeline.family is WeightFamily.F_ON_RHO
    assert pipeline.seq.K == 3
    assert pipeline.seq.nwm_kind is NwmKind.DEGREE
    assert not pipeline.auto_k


def test_load_ini(fake_fs: FakeFs):
    path = FSROOT / 'cfg' / 'run.ini'
    fake_fs.create_file(path, contents=INI)
    cfg = RunConfig.load(path)
    assert cfg.source == str(path)
    assert cfg.seed == 7
    assert cfg.n_jobs == 2
    pipeline = cfg.validate()
    assert pipeline.penalty.family is PenaltyFamily.MCP
    assert pipeline.family is WeightFamily.F_ON_BETA
    assert pipeline.weight == 'f2'
    assert pipeline.auto_k
    assert pipeline.k_max == 5
    assert pipeline.seq.tau == 0.1
    assert pipeline.seq.cov_method is CovMethod.BOOTSTRAP
    assert pipeline.bootstrap_B == 100


def test_overrides_win_over_file(fake_fs: FakeFs):
    path = FSROOT / 'run.ini'
    fake_fs.create_file(path, contents=INI)
    cfg = RunConfig.load(path, ['run.seed=11', 'clustering.k = 4'])
    assert cfg.seed == 11
    assert cfg.get('clustering', 'k') == 4


def test_missing_file(fake_fs: FakeFs):
    with pytest.raises(FileNotFoundError):
        RunConfig.load(FSROOT / 'nope.ini')


@pytest.mark.parametrize('item', ['bogus.key=1', 'run.colour=red', 'run.seed=abc', 'run.seed', 'seed=3'])
def test_bad_override(item):
    with pytest.raises(ValidationError):
        RunConfig().override(item)


def test_unknown_section_in_file(fake_fs: FakeFs):
    path = FSROOT / 'run.ini'
    fake_fs.create_file(path, contents='[plotting]\ncolour = red\n')
    with pytest.raises(ValidationError, match='plotting'):
        RunConfig.load(path)


@pytest.mark.parametrize('item', [
    'clustering.tau=-1',
    'clustering.k=0',
    'splits.vote_threshold=0',
    'splits.m=0',
    'run.seed=-2',
    'network.weight=f7',
    'penalty.family=lasso',
    'clustering.cov_method=oracle',
])
def test_validate_rejects(item):
    cfg = RunConfig.load(overrides=[item])
    with pytest.raises(ValidationError):
        cfg.validate()


def test_n_jobs_zero_means_all_cores(mocker):
    mocker.patch('nwmclust.config.cpu_count', return_value=6)
    assert RunConfig().n_jobs == 6
    assert RunConfig().to_pipeline().n_jobs == 6


def test_config_hash():
    a, b = RunConfig(), RunConfig()
    assert a.config_hash() == b.config_hash()
    b.override('clustering.alpha=0.1')
    assert a.config_hash() != b.config_hash()


def test_manifest():
    cfg = RunConfig.load(overrides=['run.seed=5'])
    manifest = cfg.manifest(command='analyze')
    assert manifest['version'] == __version__
    assert manifest['seed'] == 5
    assert manifest['command'] == 'analyze'
    assert manifest['config_hash'] == cfg.config_hash()
    assert manifest['config']['run']['seed'] == 5
    assert manifest['config_file'] is None


def test_apply_overrides_skips_none():
    cfg = apply_overrides(RunConfig(), {'run.seed': None, 'splits.m': 4})
    assert cfg.seed == 0
    assert cfg.splits == 4


@pytest.mark.parametrize('items', [
    ['network.family=beta', 'network.weight=f1'],
    ['network.rho_scale=raw', 'network.weight=f1'],
])
def test_validate_rejects_f1_outside_unit_interval(items):
    cfg = RunConfig.load(overrides=items)
    with pytest.raises(ValidationError, match=r'\[0, 1\]'):
        cfg.validate()


@pytest.mark.parametrize('items', [
    ['network.family=beta', 'network.weight=f2'],
    ['network.rho_scale=raw', 'network.weight=f2'],
    ['network.family=rho', 'network.weight=f1'],
])
def test_validate_accepts_weight_in_its_domain(items):
    RunConfig.load(overrides=items).validate()

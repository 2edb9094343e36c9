"""
Run configuration: an INI document with one section per pipeline stage.

Example::

    [clustering]
    k = auto
    tau = 0
    alpha = 0.05

    [run]
    seed = 7
"""

import configparser
import hashlib
import json
import logging
from copy import deepcopy
from dataclasses import dataclass, field
from os.path import exists
from typing import Any, Callable, Dict, Iterable, Mapping, Optional

from joblib import cpu_count

from nwmclust import __version__
from nwmclust._types import PathT, RhoScale, WeightFamily
from nwmclust.clustering import PipelineConfig, SeqTestConfig
from nwmclust.errors import NwmClustError, ValidationError
from nwmclust.network_weights import get_weight_function
from nwmclust.penalized_selection import PenaltyConfig

logger = logging.getLogger(__name__)


def _to_bool(text: Any) -> bool:
    if isinstance(text, bool):
        return text
    try:
        return configparser.ConfigParser.BOOLEAN_STATES[str(text).strip().lower()]
    except KeyError:
        raise ValueError(f'not a boolean: {text!r}') from None


def _to_k(text: Any) -> Any:
    if str(text).strip().lower() == 'auto':
        return 'auto'
    return int(text)


def _to_optional_float(text: Any) -> Optional[float]:
    if text is None or str(text).strip().lower() in ('', 'none', 'default'):
        return None
    return float(text)


# section -> key -> (parser, default)
SCHEMA: Dict[str, Dict[str, tuple]] = {
    'penalty': {
        'family': (str, 'scad'),
        'a': (_to_optional_float, None),
        'cv_folds': (int, 5),
        'n_lambda': (int, 50),
        'lambda_min_ratio': (float, 1e-3),
        'tol': (float, 1e-8),
        'max_sweeps': (int, 10000),
    },
    'selection': {
        'alpha_n': (float, 0.05),
        'bonferroni': (_to_bool, True),
        'standardize': (_to_bool, True),
    },
    'network': {
        'family': (str, 'rho'),
        'weight': (str, 'f1'),
        'rho_scale': (str, 'transformed'),
        'max_plugin_dim': (int, 25),
    },
    'nwm': {
        'kind': (str, 'degree'),
        'standardized_degree': (_to_bool, False),
        'ordered_pairs': (_to_bool, True),
    },
    'clustering': {
        'k': (_to_k, 3),
        'k_max': (int, 8),
        'tau': (float, 0.0),
        'alpha': (float, 0.05),
        'bonferroni': (_to_bool, True),
        'cov_method': (str, 'plugin'),
    },
    'bootstrap': {
        'b': (int, 500),
    },
    'splits': {
        'm': (int, 20),
        'vote_threshold': (float, 0.6),
    },
    'run': {
        'seed': (int, 0),
        'n_jobs': (int, 0),
        'out': (str, 'out'),
    },
}


def _defaults() -> Dict[str, Dict[str, Any]]:
    return {section: {key: spec[1] for key, spec in keys.items()} for section, keys in SCHEMA.items()}


@dataclass
class RunConfig:
    """Resolved key/value configuration of a command.

    Values start from the defaults in :data:`SCHEMA`, are updated from an
    optional INI file and finally from ``section.key=value`` overrides.
    """

    values: Dict[str, Dict[str, Any]] = field(default_factory=_defaults)
    source: Optional[str] = None

    @classmethod
    def load(cls, path: Optional[PathT] = None, overrides: Iterable[str] = ()) -> 'RunConfig':
        """Read `path` (if given) and apply `overrides`.

        :raises: FileNotFoundError for a missing file,
                 ValidationError for unknown sections/keys or bad values
        """
        cfg = cls(source=None if path is None else str(path))
        if path is not None:
            if not exists(path):
                raise FileNotFoundError(f'config file {path} not found')
            parser = configparser.ConfigParser(inline_comment_prefixes=(';', '#'))
            try:
                parser.read(path, encoding='utf-8')
            except configparser.Error as err:
                raise ValidationError(f'cannot parse {path}: {err}', stage='config') from None
            for section in parser.sections():
                for key, value in parser.items(section):
                    cfg.set(section, key, value)
        for item in overrides:
            cfg.override(item)
        return cfg

    def set(self, section: str, key: str, value: Any) -> None:
        """Parse and store one value.

        :raises: ValidationError for an unknown key or an unparsable value
        """
        if section not in SCHEMA:
            msg = f'unknown config section [{section}]; valid: {", ".join(SCHEMA)}'
            raise ValidationError(msg, stage='config')
        if key not in SCHEMA[section]:
            msg = f'unknown config key {section}.{key}; valid: {", ".join(SCHEMA[section])}'
            raise ValidationError(msg, stage='config')
        parser: Callable = SCHEMA[section][key][0]
        try:
            self.values[section][key] = parser(value) if value is not None else None
        except (TypeError, ValueError) as err:
            raise ValidationError(f'bad value for {section}.{key}: {err}', stage='config') from None

    def override(self, item: str) -> None:
        """Apply a ``section.key=value`` override."""
        target, sep, value = item.partition('=')
        section, dot, key = target.strip().partition('.')
        if not sep or not dot:
            raise ValidationError(f'override {item!r} is not of the form section.key=value', stage='config')
        self.set(section.strip().lower(), key.strip().lower(), value.strip())

    def get(self, section: str, key: str) -> Any:
        """Return a resolved value."""
        return self.values[section][key]

    @property
    def seed(self) -> int:
        """Base seed of the run."""
        return self.get('run', 'seed')

    @property
    def n_jobs(self) -> int:
        """Worker count; 0 means all available cores."""
        n_jobs = self.get('run', 'n_jobs')
        return n_jobs if n_jobs > 0 else cpu_count()

    @property
    def out(self) -> str:
        """Output directory."""
        return self.get('run', 'out')

    @property
    def splits(self) -> int:
        """Number of random splits M."""
        return self.get('splits', 'm')

    @property
    def vote_threshold(self) -> float:
        """Vote share needed to assign a variable."""
        return self.get('splits', 'vote_threshold')

    def to_penalty(self) -> PenaltyConfig:
        """Build the PenaltyConfig of the [penalty] section."""
        p = self.values['penalty']
        return PenaltyConfig(
            family=p['family'],
            a=p['a'],
            cv_folds=p['cv_folds'],
            n_lambda=p['n_lambda'],
            lambda_min_ratio=p['lambda_min_ratio'],
            tol=p['tol'],
            max_sweeps=p['max_sweeps'],
        )

    def to_pipeline(self) -> PipelineConfig:
        """Build the PipelineConfig used by the multiple-splitting procedure."""
        sel, net, nwm, clu = (self.values[s] for s in ('selection', 'network', 'nwm', 'clustering'))
        auto_k = clu['k'] == 'auto'
        seq = SeqTestConfig(
            K=3 if auto_k else clu['k'],
            tau=clu['tau'],
            alpha=clu['alpha'],
            bonferroni=clu['bonferroni'],
            nwm_kind=nwm['kind'],
            cov_method=clu['cov_method'],
        )
        return PipelineConfig(
            penalty=self.to_penalty(),
            alpha_n=sel['alpha_n'],
            selection_bonferroni=sel['bonferroni'],
            family=net['family'],
            weight=net['weight'],
            rho_scale=net['rho_scale'],
            seq=seq,
            auto_k=auto_k,
            k_max=clu['k_max'],
            standardized_degree=nwm['standardized_degree'],
            ordered_pairs=nwm['ordered_pairs'],
            bootstrap_B=self.get('bootstrap', 'b'),
            max_plugin_dim=net['max_plugin_dim'],
            standardize=sel['standardize'],
            n_jobs=self.n_jobs,
        )

    def validate(self) -> PipelineConfig:
        """Check every value against the invariants of the type that owns it.

        :return: the PipelineConfig the values describe
        :raises: ValidationError naming the offending value
        """
        try:
            pipeline = self.to_pipeline()
            weight = get_weight_function(pipeline.weight)
        except NwmClustError:
            raise
        except ValueError as err:
            raise ValidationError(f'invalid configuration: {err}', stage='config') from None
        if weight.unit_domain and (pipeline.family is WeightFamily.F_ON_BETA or pipeline.rho_scale is RhoScale.RAW):
            inputs = 'coefficients' if pipeline.family is WeightFamily.F_ON_BETA else 'raw partial correlations'
            msg = f'{weight.name} is defined on [0, 1] only and cannot weigh {inputs}'
            raise ValidationError(msg, stage='config', hint='use f2, or transformed partial correlations')
        if not 0 < self.vote_threshold <= 1:
            raise ValidationError(f'vote_threshold must be in (0, 1], got {self.vote_threshold}', stage='config')
        if self.splits < 1:
            raise ValidationError(f'splits.m must be >= 1, got {self.splits}', stage='config')
        if self.seed < 0:
            raise ValidationError(f'seed must be >= 0, got {self.seed}', stage='config')
        return pipeline

    def as_dict(self) -> Dict[str, Dict[str, Any]]:
        """Return a JSON-ready copy of the resolved values."""
        return deepcopy(self.values)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form of the resolved values."""
        blob = json.dumps(self.as_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode('utf-8')).hexdigest()

    def manifest(self, **extra: Any) -> Dict[str, Any]:
        """Run manifest: resolved config, seed, hash and version."""
        data = {
            'version': __version__,
            'config': self.as_dict(),
            'config_hash': self.config_hash(),
            'config_file': self.source,
            'seed': self.seed,
        }
        data.update(extra)
        return data


def apply_overrides(cfg: RunConfig, mapping: Mapping[str, Any]) -> RunConfig:
    """Set every ``'section.key'`` of `mapping` whose value is not None."""
    for dotted, value in mapping.items():
        if value is None:
            continue
        section, key = dotted.split('.', 1)
        cfg.set(section, key, value)
    return cfg

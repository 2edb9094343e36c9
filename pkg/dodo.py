"""
dodo.py for the nwm-clustering project - these are `doit` targets definitions.

To avoid creating `__pycache__` directories, consider using `python -B`
or "PYTHONDONTWRITEBYTECODE=1" (e.g. on Windows).

Typical use::

    doit test           # fast unit tests
    doit test-slow      # Monte Carlo acceptance runs
    doit reproduce      # every simulation table into out/
    doit selftest       # oracle checks through the installed CLI

More about `doit` on https://pydoit.org/.
"""
from typing import Callable, Dict, Iterator, List

import os
import sys
import shutil
from os.path import exists, isdir
from posixpath import join as posix_join
from pathlib import Path
from functools import lru_cache

from doit.action import CmdAction

REPO_ROOT = Path(__file__).resolve().parent
SRC_DIR = Path('src')
TEST_DIR = Path('tests')
VENV_ROOT = Path('.venv')
TEMP_DIR = Path('.cache')
BUILD_DIR = Path('build')
OUT_DIR = Path('out')

UNIT_TEST_DIR = TEST_DIR / 'unit_tests'
PYLINT_ROOT_PKG = SRC_DIR / 'nwmclust'
DOIT_DEP_FILE = Path('.doit.json')

EXPERIMENTS = ('unsup-vs-seq', 'icc-k', 'smallp-seq', 'nwm-bias', 'wrong-k', 'cov-timing',
               'consistency')

PATH = os.environ['PATH']

# see https://pydoit.org/configuration.html
DOIT_CONFIG = {
    'verbosity': 1,
    'backend': 'json',  # mdb fails on Windows
    'dep_file': str(DOIT_DEP_FILE),
    'default_tasks': ['test'],
}

# The doit dep file can not live in TEMP_DIR: `clean-temp` removes it while
# doit is still running.

if os.name == 'posix':
    VENV_BIN = VENV_ROOT / 'bin'
    ENV_QUOTE = '"'

elif os.name == 'nt':
    VENV_BIN = VENV_ROOT / 'Scripts'
    ENV_QUOTE = ''  # Env variables on Windows must NOT be quoted

else:
    print('ERROR: Unsupported OS:', os.name, '- exitting.', file=sys.stderr)
    sys.exit(3)


def _print(*args, **kw):
    """Alias for the builtin ``print()`` (``doit`` does not accept
    builtins as action functions).
    """
    print(*args, **kw)


def actions_of(*task_funcs: Callable[[], dict]) -> List:
    """Stack together and return all actions of given task functions."""
    result: list = []
    for task_fn in task_funcs:
        result.extend(task_fn()['actions'])
    return result


def remove_matching(root_dir: Path, pattern: str) -> None:
    """Remove every directory below `root_dir` matching glob `pattern`."""
    for path in Path(root_dir).glob(pattern):
        if isdir(path) and VENV_ROOT not in path.relative_to(root_dir).parents:
            shutil.rmtree(path)


@lru_cache()
def getenv() -> Dict[str, str]:
    """Return a dict with suitable OS environment variables to set
    during task executions.
    """
    envdict = dict(
        PYTHONPATH=f'{REPO_ROOT / SRC_DIR}{os.pathsep}{REPO_ROOT}',
        PATH=PATH,
    )
    if str(VENV_BIN) not in PATH:
        venv_bin_path = str(REPO_ROOT / VENV_BIN)
        envdict.update(PATH=os.pathsep.join((venv_bin_path, PATH)))

    return envdict


def with_env(command: str) -> CmdAction:
    """Return a CmdAction carrying given command with OS environment set."""
    # Setting env vars on Windows breaks command execution with
    # `Fatal Python error: _Py_HashRandomization_Init`
    if os.name == 'nt':
        return CmdAction(command)

    return CmdAction(command, env=getenv())


def task_pylint() -> dict:
    """Run pylint checks."""
    return {
        'actions': [f'pylint {PYLINT_ROOT_PKG}'],
    }


def task_test() -> dict:
    """Run the unit test suite (Monte Carlo acceptance runs excluded)."""
    return {
        'verbosity': 2,
        'actions': [with_env(f'pytest {UNIT_TEST_DIR}')],
    }


def task_test_slow() -> dict:
    """Run only the slow Monte Carlo acceptance tests."""
    return {
        'verbosity': 2,
        'basename': 'test-slow',
        'actions': [with_env(f'pytest -m slow {UNIT_TEST_DIR}')],
    }


def task_cov_html() -> dict:
    """Run tests and generate test coverage report in HTML format."""
    cwd_as_uri = Path(os.getcwd()).as_uri()
    report_url = posix_join(cwd_as_uri, TEMP_DIR, 'htmlcov', 'index.html')
    return {
        'verbosity': 2,
        'basename': 'cov-html',
        'actions': [
            with_env(f'pytest --cov={SRC_DIR} --cov-report=html {UNIT_TEST_DIR}'),
            (_print, ['HTML report URL:', report_url, '\n']),
        ],
    }


def task_reproduce() -> Iterator[dict]:
    """Rerun every simulation table (desk-check replicate counts)."""
    for experiment in EXPERIMENTS:
        yield {
            'name': experiment,
            'verbosity': 2,
            'actions': [
                with_env(f'python -m nwmclust reproduce {experiment} -o {OUT_DIR / experiment}'),
            ],
        }


def task_selftest() -> dict:
    """Run the built-in oracle checks."""
    return {
        'verbosity': 2,
        'actions': [with_env('python -m nwmclust selftest')],
    }


def remove_dirs(*dirs: Path) -> None:
    """Remove each existing directory of `dirs` with its contents."""
    for thedir in dirs:
        if exists(thedir):
            print(f'Removing {thedir} ...')
            shutil.rmtree(thedir)


def task_clean_pycache() -> dict:
    """Remove any `__pycache__/` directories within the project tree.

    Note that this would always find the root `__pycache__` unless bytecode
    caching is suppressed, due to the Python interpreter importing `dodo.py`.
    """
    return {
        'basename': 'clean-pycache',
        'actions': [
            (remove_matching, [REPO_ROOT, '**/__pycache__']),
        ],
    }


def task_clean_pytest_cache() -> dict:
    """Remove any `.pytest_cache` directories within the project tree."""
    return {
        'basename': 'clean-pytest-cache',
        'actions': [
            (remove_matching, [REPO_ROOT, '**/.pytest_cache']),
        ],
    }


def task_clean_temp() -> dict:
    """Remove `.cache/` (pytest cache, coverage data, HTML report) and `build/`."""
    return {
        'basename': 'clean-temp',
        'actions': [
            (remove_dirs, [TEMP_DIR, BUILD_DIR]),
        ],
    }


def task_clean_out() -> dict:
    """Remove the default output directory of `analyze` and `reproduce`."""
    return {
        'basename': 'clean-out',
        'actions': [
            (remove_dirs, [OUT_DIR]),
        ],
    }


def task_clean_all() -> dict:
    """Clean up all garbage."""
    return {
        'basename': 'clean-all',
        'actions': actions_of(
            task_clean_temp,
            task_clean_out,
            task_clean_pycache,
            task_clean_pytest_cache,
        ),
    }


def task_show_env() -> dict:
    """Dump OS environment variables ready to be evaluated."""
    the_verb = 'set' if os.name == 'nt' else 'export'

    def print_envs(envs: Dict[str, str]) -> None:
        """Print environments"""
        for name, value in envs.items():
            quote = ENV_QUOTE
            print(f'{the_verb} {name}={quote}{value}{quote}')

    return {
        'verbosity': 2,
        'basename': 'show-env',
        'actions': [
            (print_envs, [getenv()]),
        ],
    }


def task_venv_dev() -> dict:
    """Set (or update) project's virtual environment through Poetry."""
    return {
        'basename': 'venv-dev',
        'actions': [
            'poetry config virtualenvs.in-project true --local',
            'poetry install',
        ],
    }

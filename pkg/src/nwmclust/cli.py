"""
Command-line front end of nwmclust.

Commands:

    analyze CSV --response NAME   cluster the predictors of a dataset
    reproduce EXPERIMENT          rerun one simulation table
    simulate PRESET               write a synthetic dataset to CSV
    selftest                      run the built-in oracle checks

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure,
4 I/O error.
"""

import argparse
import json
import logging
import os
import sys
from os.path import join
from typing import Any, Dict, List, Optional

from nwmclust import __version__
from nwmclust.clustering import estimates_table, multiple_split_analysis
from nwmclust.config import RunConfig, apply_overrides
from nwmclust.data_model import RngStream, load_csv
from nwmclust.errors import NwmClustError
from nwmclust.selftest import run_selftest
from nwmclust.simulation import PRESETS, design_frame, experiment_id, generate, preset_design, run_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
MANIFEST = 'manifest.json'


def parse_args(argv: list) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog='nwmclust',
        description='Cluster regression predictors by post-selection network-wide metrics.',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='log debug messages')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='log warnings and errors only')
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    analyze = commands.add_parser('analyze', help='cluster the predictors of a CSV dataset')
    analyze.add_argument('csv', help='CSV file with a header row')
    analyze.add_argument('-r', '--response', required=True, help='header name of the response column')
    analyze.add_argument('-c', '--config', default=None, help='INI run configuration')
    analyze.add_argument(
        '-s', '--set',
        action='append',
        default=[],
        metavar='SECTION.KEY=VALUE',
        help='override one configuration value (repeatable)',
    )
    analyze.add_argument('--seed', type=int, default=None, help='base seed (overrides run.seed)')
    analyze.add_argument('--splits', type=int, default=None, help='number of random splits (overrides splits.m)')
    analyze.add_argument('-j', '--jobs', type=int, default=None, help='worker count, 0 for all cores')
    analyze.add_argument('-o', '--out', default=None, help='output directory (overrides run.out)')

    reproduce = commands.add_parser('reproduce', help='rerun a simulation table')
    reproduce.add_argument('experiment', help='experiment id, e.g. unsup-vs-seq')
    reproduce.add_argument('--replicates', type=int, default=None, help='replicates per cell (default: 500)')
    reproduce.add_argument('--full', action='store_true', help='use 5000 replicates per cell')
    reproduce.add_argument('--seed', type=int, default=0, help='base seed (default: %(default)s)')
    reproduce.add_argument('-j', '--jobs', type=int, default=None, help='worker count, 0 for all cores')
    reproduce.add_argument('-o', '--out', default='out', help='output directory (default: %(default)s)')

    simulate = commands.add_parser('simulate', help='write a synthetic dataset to CSV')
    simulate.add_argument('preset', choices=sorted(PRESETS), help='simulation design')
    simulate.add_argument('-n', '--n', type=int, default=None, help='sample size (default: the preset\'s)')
    simulate.add_argument('--seed', type=int, default=0, help='seed (default: %(default)s)')
    simulate.add_argument('--r-b', type=float, default=0.0, help='between-group correlation (default: %(default)s)')
    simulate.add_argument('-o', '--out', default='out', help='output directory (default: %(default)s)')

    commands.add_parser('selftest', help='run the built-in oracle and invariant checks')

    return parser.parse_args(argv)


def setup_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)


def write_manifest(out: str, data: Dict[str, Any]) -> None:
    os.makedirs(out, exist_ok=True)
    with open(join(out, MANIFEST), 'w') as fd:
        json.dump(data, fd, indent=2, default=str)


def record_failure(out: str, data: Dict[str, Any]) -> None:
    """Write the manifest of a failed run, logging I/O errors instead of
    raising them."""
    try:
        write_manifest(out, data)
    except OSError as err:
        logger.error('cannot write %s under %s: %s', MANIFEST, out, err)


def _failure(err: BaseException) -> Dict[str, Any]:
    info = {'status': 'failed', 'error': str(err), 'error_type': type(err).__name__}
    if isinstance(err, NwmClustError):
        info.update(stage=err.stage, hint=err.hint)
    return info


def cmd_analyze(args: argparse.Namespace) -> int:
    """Run the multiple-splitting pipeline on a CSV file and write clusters,
    votes, metric estimates and the run manifest under the output directory."""
    cfg = apply_overrides(RunConfig(), {'run.out': args.out})
    loaded = False
    given = {'csv': args.csv, 'response': args.response, 'config_arg': args.config, 'overrides': list(args.set)}
    try:
        cfg = RunConfig.load(args.config, args.set)
        apply_overrides(cfg, {
            'run.seed': args.seed,
            'splits.m': args.splits,
            'run.n_jobs': args.jobs,
            'run.out': args.out,
        })
        loaded = True
        pipeline = cfg.validate()
        d = load_csv(args.csv, args.response)
        result, outcomes = multiple_split_analysis(
            d, cfg.splits, cfg.vote_threshold, pipeline, RngStream(seed=cfg.seed)
        )

        out = cfg.out
        os.makedirs(out, exist_ok=True)
        with open(join(out, 'clusters.json'), 'w') as fd:
            json.dump(result.to_dict(), fd, indent=2)
        result.to_frame().to_csv(join(out, 'clusters.csv'), index=False)
        result.votes.to_csv(join(out, 'votes.csv'), index=False)
        estimates_table(outcomes).to_csv(join(out, 'nwm.csv'), index=False)
    except (NwmClustError, OSError) as err:
        data = cfg.manifest(command='analyze', **given, **_failure(err))
        if not loaded:
            # the defaults are not what was asked for
            data.update(config=None, config_hash=None)
        record_failure(cfg.out, data)
        raise

    for rank, members in enumerate(result.clusters, start=1):
        print(f'cluster {rank}: {", ".join(result.name(j) for j in members) or "-"}')
    if result.unassigned:
        print(f'unassigned: {", ".join(result.name(j) for j in result.unassigned)}')
    write_manifest(cfg.out, cfg.manifest(
        command='analyze', **given, status='ok', splits_used=len(outcomes), failures=list(result.failures),
    ))
    return EXIT_OK


def cmd_reproduce(args: argparse.Namespace) -> int:
    """Rerun a simulation table and print it next to the published numbers."""
    cfg = apply_overrides(RunConfig(), {'run.seed': args.seed, 'run.n_jobs': args.jobs, 'run.out': args.out})
    try:
        exp = experiment_id(args.experiment)
        report = run_table(exp, args.replicates, RngStream(seed=args.seed), n_jobs=cfg.n_jobs, full=args.full)

        os.makedirs(cfg.out, exist_ok=True)
        comparison = report.comparison()
        comparison.to_csv(join(cfg.out, f'{exp.value}.csv'), index=False)
        if not report.rates.empty:
            report.rates.to_csv(join(cfg.out, f'{exp.value}_rates.csv'), index=False)
    except (NwmClustError, OSError) as err:
        record_failure(cfg.out, cfg.manifest(command='reproduce', experiment=args.experiment, **_failure(err)))
        raise

    print(comparison.to_string(index=False))
    write_manifest(cfg.out, cfg.manifest(command='reproduce', status='ok', **report.to_dict()))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    """Write one synthetic dataset of a preset design."""
    design = preset_design(args.preset, args.n, args.r_b, args.seed)
    d = generate(design, RngStream(seed=args.seed))
    os.makedirs(args.out, exist_ok=True)
    path = join(args.out, f'{args.preset}_n{design.n}_seed{args.seed}.csv')
    design_frame(d).to_csv(path, index=False)
    logger.info('wrote %d rows to %s', d.n, path)
    print(path)
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:  # pylint: disable=unused-argument
    """Run the oracle checks; exit 3 when any fails."""
    results = run_selftest()
    failed = [r for r in results if not r.passed]
    print(f'{len(results) - len(failed)} of {len(results)} checks passed')
    for r in failed:
        print(f'FAILED: {r.name} ({r.detail})')
    return EXIT_NUMERICAL if failed else EXIT_OK


COMMANDS = {
    'analyze': cmd_analyze,
    'reproduce': cmd_reproduce,
    'simulate': cmd_simulate,
    'selftest': cmd_selftest,
}


def _main(argv: list) -> int:
    args = parse_args(argv)
    setup_logging(args)
    return COMMANDS[args.command](args)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        return _main(sys.argv[1:] if argv is None else argv)

    except NwmClustError as err:
        print(f'error: {err}', file=sys.stderr)
        return err.exit_code
    except OSError as err:
        print(f'error: {err}', file=sys.stderr)
        return EXIT_IO


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == '__main__':
    sys.exit(main(sys.argv[1:]))

# encoding: utf-8
'''
Command line entry point.

    rungelab run CONFIG [--out DIR] [--cache DIR] [--jobs N] [--seed S]
    rungelab verify CONFIG
    rungelab cache ls|rm [--cache DIR]

Exit status 0 when every tolerance flag of the report holds, 2 when one
fails and 1 on any error.
'''
import argparse
import logging
import sys
from functools import wraps

from . import __version__
from .factory import load_config
from .errors import LabError, ToleranceFailure
from .experiments import run_experiment
from .log import default_log, enable_solver_log, level_from_name
from .store import list_cache, remove_cache

log = logging.getLogger(__name__)

DEFAULT_CACHE = '.rungelab-cache'


def lab_action(orig_func):
    '''
    Run a command and turn the outcome into an exit status: 0 on a normal
    return, the error's own status for any LabError.
    '''
    @wraps(orig_func)
    def replacement(*args, **kargs):
        try:
            status = orig_func(*args, **kargs)
        except LabError as e:
            log.error("%s: %s", type(e).__name__, e.message)
            if e.payload:
                log.debug("error payload: %s", e.to_dict())
            return e.exit_status
        return 0 if status is None else status
    return replacement


def _prepare(args, experiment=None):
    cfg = load_config(args.config, args.seed)
    update = {}
    if experiment is not None:
        update['experiment'] = experiment
    if args.out:
        update['output'] = cfg.output.model_copy(update={'dir': args.out})
    return cfg.model_copy(update=update) if update else cfg


def _run(cfg, args):
    report = run_experiment(cfg, jobs=args.jobs, cache_dir=args.cache or cfg.cache_dir)
    paths = report.write(cfg.output.dir)
    log.info("report written to %s", paths['csv'])
    if not report.passed:
        raise ToleranceFailure("Tolerance flags failed: {0}".format(
            ', '.join(report.failures)), payload={'flags': report.failures})


@lab_action
def run_command(args):
    _run(_prepare(args), args)


@lab_action
def verify_command(args):
    _run(_prepare(args, experiment='verify_solver'), args)


@lab_action
def cache_command(args):
    directory = args.cache or DEFAULT_CACHE
    if args.action == 'ls':
        for name, kind, provenance, size in list_cache(directory):
            print('{0}\t{1}\t{2:016x}\t{3}'.format(name, kind, provenance, size))
    else:
        remove_cache(directory)


def build_parser():
    parser = argparse.ArgumentParser(
        prog='rungelab',
        description='Numerical experiments on Runge approximation for time-harmonic '
                    'Maxwell equations.')
    parser.add_argument('--version', action='version', version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--out', help='report directory (overrides output.dir)')
    common.add_argument('--cache', help='operator and SVD cache directory')
    common.add_argument('--jobs', type=int, default=1, help='parallel workers')
    common.add_argument('--seed', type=int, help='master seed (overrides the config)')
    common.add_argument('--log-level', default='info', help='debug, info, warning, error')

    sub = parser.add_subparsers(dest='command', required=True)
    run = sub.add_parser('run', parents=[common], help='run the configured experiment')
    run.add_argument('config')
    run.set_defaults(func=run_command)
    verify = sub.add_parser('verify', parents=[common],
                            help='plane-wave convergence study of the solver')
    verify.add_argument('config')
    verify.set_defaults(func=verify_command)
    cache = sub.add_parser('cache', parents=[common], help='list or clear the cache')
    cache.add_argument('action', choices=('ls', 'rm'))
    cache.set_defaults(func=cache_command)
    return parser


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    level = level_from_name(args.log_level)
    default_log(level)
    if level <= logging.DEBUG:
        enable_solver_log()
    if args.jobs < 1:
        log.error("--jobs must be at least 1")
        return 1
    return args.func(args)


def main():
    sys.exit(run_cli())

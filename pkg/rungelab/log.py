# encoding: utf-8

import logging
import time
from textwrap import TextWrapper
log = logging.getLogger(__name__)


class WrappedFormatter(logging.Formatter):
    '''Wraps solver diagnostics at 100 columns behind a solver> prompt.'''
    def __init__(self, *pargs, **kargs):
        logging.Formatter.__init__(self, *pargs, **kargs)
        self.solver_wrapper = TextWrapper(width=100,
                                          initial_indent=' ' * 12 + 'solver> ',
                                          subsequent_indent=' ' * 20)

    def format(self, record):
        fmt = logging.Formatter.format(self, record)
        wrapped_text = "{0}".format(self.solver_wrapper.fill(fmt))
        return wrapped_text

# linear algebra diagnostics (factorizations, Krylov histories, margins)
solver_log = logging.getLogger('rungelab.solver')
root_log = logging.getLogger()

DEFAULT_FORMAT = '%(asctime)s %(levelname)-7s %(name)s: %(message)s'


def set_root_logger(level=logging.INFO, log_class=logging.StreamHandler):
    '''Adds a handler and log level to the root logger.

    By default, sets log level to INFO and the handler to a StreamHandler.
    '''
    root_log.setLevel(level)

    if not root_log.handlers:
        handler = log_class()
        handler.setFormatter(logging.Formatter(DEFAULT_FORMAT))
        root_log.addHandler(handler)


def set_solver_logger(level=logging.INFO, log_class=logging.StreamHandler):
    '''Adds a handler and log level to the solver logger.
    '''
    if solver_log.handlers:
        for handler in list(solver_log.handlers):
            solver_log.removeHandler(handler)
    solver_log_handler = log_class()
    formatter = WrappedFormatter("%(message)s")
    solver_log_handler.setFormatter(formatter)
    solver_log.setLevel(level)
    solver_log.addHandler(solver_log_handler)
    # handled by the indented logger above
    solver_log.propagate = False


def default_log(level=logging.INFO, log_class=logging.StreamHandler):
    set_root_logger(level, log_class)
    # DEBUG on the solver logger prints every Krylov step
    set_solver_logger(max(level, logging.INFO), log_class)


def enable_solver_log():
    '''Turn on per-solve diagnostics.'''
    solver_log.setLevel(logging.DEBUG)


def level_from_name(name):
    level = logging.getLevelName(str(name).upper())
    if not isinstance(level, int):
        return logging.INFO
    return level


class LogPoint(object):
    '''
    Context manager that logs a banner before and after a stage of a run,
    with the elapsed wall-clock time at the end.
    '''
    def __init__(self, name, logger=None, width=79, fillchar='-'):
        self.name = name
        self.logger = logger or log
        self.log = '{{0:{0}^{1}}}'.format(fillchar, width)
        self.elapsed = 0.0
        self._start = None

    def __enter__(self):
        self._start = time.perf_counter()
        self.logger.debug(self.log.format(' start {0} '.format(self.name)))
        return self

    def __exit__(self, exc_type, exc, tb):
        self.elapsed = time.perf_counter() - self._start
        self.logger.debug(self.log.format(' end {0} ({1:.3f}s) '.format(
            self.name, self.elapsed)))
        return False

# encoding: utf-8
'''
Experiment reports: one CSV row per record plus a JSON sidecar holding the
config echo, seeds, fitted constants and tolerance flags.
'''
import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ParameterError, StoreError

log = logging.getLogger(__name__)

CSV_COLUMNS = {
    'runge': ('j', 'alpha', 'kept', 'x_error', 'v_norm', 'v_bound', 'hcurl_norm'),
    'cauchy': ('eta', 'seed', 'lam', 'misfit', 'error', 'zeta'),
    'three_balls': ('sample', 'a1', 'a2', 'a3', 'source_scale'),
    'propagation': ('sample', 'ball_norm', 'omega_norm', 'g_norm'),
    'localization': ('cutoff', 'quotient', 'norm_M', 'norm_D', 'norm_omega', 'v_norm'),
    'ucp': ('sample', 'wavenumber', 'source', 'trace', 'interior'),
    'verify_solver': ('n', 'h', 'error', 'order'),
}
FIT_COLUMNS = ('model', 'C', 'tau_or_delta_or_m', 'r2', 'n')


def format_value(value):
    '''Floats with 17 significant digits; None as an empty cell.'''
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return '{0:.17g}'.format(float(value))
    return str(value)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, 'to_dict'):
        return obj.to_dict()
    raise TypeError("Cannot encode {0}.".format(type(obj).__name__))


@dataclass(eq=False)
class Report(object):
    tag: str
    config: dict
    records: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    snapshots: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def __post_init__(self):
        if self.tag not in CSV_COLUMNS:
            raise ParameterError("Unknown report tag '{0}'.".format(self.tag))

    @property
    def columns(self):
        return CSV_COLUMNS[self.tag]

    @property
    def passed(self):
        return all(bool(v) for v in self.flags.values())

    @property
    def failures(self):
        return sorted(k for k, v in self.flags.items() if not v)

    def add(self, **record):
        unknown = set(record) - set(self.columns)
        if unknown:
            raise ParameterError("Columns {0} are not part of the '{1}' report.".format(
                sorted(unknown), self.tag))
        self.records.append(record)

    def column(self, name):
        return np.array([r.get(name) for r in self.records], dtype=float)

    def check_finite(self):
        for i, record in enumerate(self.records):
            for key, value in record.items():
                if isinstance(value, (float, np.floating)) and not math.isfinite(value):
                    raise NumericError("Report '{0}' row {1} has a non-finite '{2}'.".format(
                        self.tag, i, key))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator='\n')
        writer.writerow(self.columns)
        for record in self.records:
            writer.writerow([format_value(record.get(c)) for c in self.columns])
        return buf.getvalue()

    def fits_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator='\n')
        writer.writerow(('name',) + FIT_COLUMNS)
        for name in sorted(self.fits):
            row = self.fits[name].to_row()
            writer.writerow([name] + [format_value(row[c]) for c in FIT_COLUMNS])
        return buf.getvalue()

    def to_dict(self):
        return {
            'experiment': self.tag,
            'config': self.config,
            'seed': self.config.get('seed'),
            'fits': {k: v.to_dict() for k, v in self.fits.items()},
            'flags': self.flags,
            'passed': self.passed,
            'extra': self.extra,
            'snapshots': self.snapshots,
            'rows': len(self.records),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, default=_json_default)

    def write(self, directory):
        '''Write <tag>.csv, <tag>-fits.csv and <tag>.json; returns their paths.'''
        self.check_finite()
        paths = {
            'csv': os.path.join(directory, '{0}.csv'.format(self.tag)),
            'fits': os.path.join(directory, '{0}-fits.csv'.format(self.tag)),
            'json': os.path.join(directory, '{0}.json'.format(self.tag)),
        }
        try:
            os.makedirs(directory, exist_ok=True)
            with open(paths['csv'], 'w', encoding='utf8', newline='') as fh:
                fh.write(self.to_csv())
            with open(paths['fits'], 'w', encoding='utf8', newline='') as fh:
                fh.write(self.fits_csv())
            with open(paths['json'], 'w', encoding='utf8') as fh:
                fh.write(self.to_json())
                fh.write('\n')
        except OSError as e:
            raise StoreError("Cannot write report to {0}: {1}".format(directory, e))
        log.info("wrote %s report (%d rows) to %s", self.tag, len(self.records), directory)
        return paths


def read_sidecar(path):
    try:
        with open(path, encoding='utf8') as fh:
            return json.load(fh)
    except (OSError, ValueError) as e:
        raise StoreError("Cannot read report sidecar {0}: {1}".format(path, e))

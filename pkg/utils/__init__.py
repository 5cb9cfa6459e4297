# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

import logging
import os
import shutil
import time
from copy import deepcopy

import numpy as np

from . import errors
from . import quadrature
from . import streams

_log_path = None

_logger = logging.getLogger('bridgesim')


def _configure_logger():
    if _logger.handlers:
        return
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(message)s'))
    _logger.addHandler(handler)
    level = os.environ.get('BRIDGESIM_LOG', 'info').upper()
    _logger.setLevel(getattr(logging, level, logging.INFO))
    _logger.propagate = False


_configure_logger()


def set_log_path(path):
    global _log_path
    _log_path = path
    for handler in list(_logger.handlers):
        if isinstance(handler, logging.FileHandler):
            _logger.removeHandler(handler)
            handler.close()
    if path is not None:
        handler = logging.FileHandler(os.path.join(path, 'log.txt'), mode='a')
        handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(message)s'))
        _logger.addHandler(handler)


def log(obj, level='info'):
    getattr(_logger, level)(obj)


class Moments(object):
    """Running count, mean and variance; merges associatively."""

    def __init__(self):
        self.reset()

    def reset(self):
        self.count = 0
        self.mean = 0.
        self.m2 = 0.

    def update(self, values):
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            return self
        other = Moments()
        other.count = values.size
        other.mean = float(values.mean())
        other.m2 = float(((values - other.mean) ** 2).sum())
        return self.merge(other)

    def merge(self, other):
        n = self.count + other.count
        if n == 0:
            return self
        delta = other.mean - self.mean
        self.mean = self.mean + delta * other.count / n
        self.m2 = self.m2 + other.m2 + delta ** 2 * self.count * other.count / n
        self.count = n
        return self

    @property
    def var(self):
        if self.count < 2:
            return 0.
        return self.m2 / (self.count - 1)

    @property
    def se(self):
        if self.count < 2:
            return 0.
        return float(np.sqrt(self.var / self.count))


class Timer():

    def __init__(self):
        self.v = time.time()

    def s(self):
        self.v = time.time()

    def t(self):
        return time.time() - self.v


def ensure_path(path, remove=False):
    if os.path.exists(path):
        if remove:
            shutil.rmtree(path)
            os.makedirs(path)
    else:
        os.makedirs(path)


def time_str(t):
    if t >= 3600:
        return '{:.1f}h'.format(t / 3600)
    if t >= 60:
        return '{:.1f}m'.format(t / 60)
    return '{:.2f}s'.format(t)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if np.isnan(value):
            return 'nan'
        if np.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    return obj


def anytype2bool_dict(s):
    # check str
    if not isinstance(s, str):
        return s
    try:
        return int(s)
    except ValueError:
        pass
    if s.lower() in ('true', 'false'):
        return s.lower() == 'true'
    try:
        return float(s)
    except ValueError:
        return s


def parse_string_to_dict(field_name, value):
    fields = field_name.split('.')
    for fd in fields[::-1]:
        res = {fd: anytype2bool_dict(value)}
        value = res
    return res


def merge_to_dicts(a, b):
    if isinstance(b, dict) and isinstance(a, dict):
        a_and_b = set(a.keys()) & set(b.keys())
        every_key = set(a.keys()) | set(b.keys())
        return {k: merge_to_dicts(a[k], b[k]) if k in a_and_b else
                   deepcopy(a[k] if k in a else b[k]) for k in every_key}
    # keep the declared type of scalar fields, e.g. "2" overriding 1.0 stays float
    if isinstance(a, (float, str)) and isinstance(b, (int, float, str)) and not isinstance(b, bool):
        return type(a)(b)
    return deepcopy(b)


def override_cfg_from_list(cfg, opts):
    if len(opts) % 2 != 0:
        raise errors.ConfigError('Paired input must be provided to override config, opts: {}'.format(opts))
    for ix in range(0, len(opts), 2):
        opts_dict = parse_string_to_dict(opts[ix], opts[ix + 1])
        cfg = merge_to_dicts(cfg, opts_dict)
    return cfg

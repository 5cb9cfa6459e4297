# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

import utils
from utils.errors import SampleSizeError

checks = {}

KS_CRITICAL = {0.01: 1.628, 0.05: 1.358}
KS_MIN_SAMPLES = 100
KS_ASYMPTOTIC = 1000
SE_WIDTH = 3.
RERUN_KEY = 0x7e7e


@dataclass
class VerificationReport:
    name: str
    inputs: dict = field(default_factory=dict)
    statistics: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    passed: bool = False
    sample_sizes: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    runtime: float = 0.
    notes: list = field(default_factory=list)

    def to_dict(self, runtime=True):
        out = {
            'name': self.name,
            'inputs': self.inputs,
            'statistics': self.statistics,
            'thresholds': self.thresholds,
            'passed': bool(self.passed),
            'sample_sizes': self.sample_sizes,
            'seeds': self.seeds,
            'notes': list(self.notes),
        }
        if runtime:
            out['runtime'] = self.runtime
        return utils.to_jsonable(out)

    def line(self):
        return '{}: {} ({})'.format(self.name, 'pass' if self.passed else 'FAIL',
                                    ', '.join('{}={}'.format(k, _short(v))
                                              for k, v in sorted(self.statistics.items())
                                              if np.ndim(v) == 0))


def _short(v):
    if isinstance(v, (float, np.floating)):
        return '{:.4g}'.format(float(v))
    return v


def register(name):
    """Register a check; its report gets the runtime stamped and a log line."""
    def decorator(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            timer = utils.Timer()
            report = fn(*args, **kwargs)
            report.runtime = timer.t()
            utils.log(report.line(), 'info' if report.passed else 'warning')
            return report
        checks[name] = wrapper
        return wrapper
    return decorator


def run(name, **kwargs):
    return checks[name](**kwargs)


def ks_critical(alpha, n):
    """Asymptotic one-sample critical value c(alpha) / sqrt(n)."""
    c = KS_CRITICAL.get(alpha)
    if c is None:
        c = np.sqrt(-0.5 * np.log(alpha / 2.))
    return c / np.sqrt(n)


def ks_one_sample(sample, cdf, alpha=0.01):
    """KS test of `sample` against the callable `cdf`.

    n >= KS_ASYMPTOTIC compares the statistic with the asymptotic critical
    value; smaller samples use the exact p-value instead.
    """
    sample = np.asarray(sample, dtype=float).ravel()
    sample = sample[np.isfinite(sample)]
    n = len(sample)
    if n < KS_MIN_SAMPLES:
        raise SampleSizeError('KS test needs at least {} samples, got {}'.format(KS_MIN_SAMPLES, n))
    if n >= KS_ASYMPTOTIC:
        res = stats.kstest(sample, cdf, method='asymp')
        critical = ks_critical(alpha, n)
        passed = res.statistic <= critical
    else:
        res = stats.kstest(sample, cdf, method='exact')
        critical = None
        passed = res.pvalue > alpha
    return {'statistic': float(res.statistic), 'pvalue': float(res.pvalue), 'critical': critical,
            'alpha': alpha, 'n': n, 'passed': bool(passed)}


def ks_two_sample(a, b, alpha=0.01):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    n, m = len(a), len(b)
    if min(n, m) < KS_MIN_SAMPLES:
        raise SampleSizeError('KS test needs at least {} samples per side, got {} and {}'.format(
            KS_MIN_SAMPLES, n, m))
    res = stats.ks_2samp(a, b)
    critical = ks_critical(alpha, 1.) * np.sqrt((n + m) / float(n * m))
    passed = res.statistic <= critical if min(n, m) >= KS_ASYMPTOTIC else res.pvalue > alpha
    return {'statistic': float(res.statistic), 'pvalue': float(res.pvalue), 'critical': float(critical),
            'alpha': alpha, 'n': [n, m], 'passed': bool(passed)}


def within_se(mean, se, target, width=SE_WIDTH, one_sided=False):
    """|mean - target| <= width * se; exact agreement needed when se == 0."""
    slack = width * se if se > 0 else 1e-12 * max(1., abs(target))
    if one_sided:
        return mean <= target + slack
    return abs(mean - target) <= slack


def rerun_seed(seed):
    ss = np.random.SeedSequence(int(seed), spawn_key=(RERUN_KEY,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def with_rerun(run_once, seed):
    """run_once(seed) -> report; a failing Monte Carlo report gets one independent re-run."""
    report = run_once(seed)
    report.seeds = {'seed': int(seed)}
    if report.passed:
        return report
    second_seed = rerun_seed(seed)
    second = run_once(second_seed)
    second.seeds = {'seed': int(seed), 'rerun': second_seed}
    second.notes.append('run with seed {} failed ({}); reported statistics are from the re-run'.format(
        seed, report.line()))
    return second

# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

"""Named groups of checks run against a scenario."""

import numpy as np

import utils
from utils.errors import ConfigError, ParamError
from bridges.integrators import TimeGrid, simulate_ensemble, simulate_unconditioned
from .laplace import laplace_limit_check
from .assumptions import bounded_potential_check, chapman_kolmogorov_check, density_sup_check, dual_limit_check
from .laws import (bridge_hit_check, bump_function, local_martingale_residual, martingale_check,
                   terminal_law_check, transition_law_check)
from .preconditions import strong_solution_preconditions

suites = {}

DEFAULT_VERIFY = {
    'n_paths': 10000,
    'seed': None,
    'alpha': 0.01,
    'fractions': [0.25, 0.5, 0.75],
    'martingale_fractions': [0.25, 0.5, 0.9],
    'r': None,
    'tol': 0.05,
}


def register(name):
    def decorator(fn):
        suites[name] = fn
        return fn
    return decorator


class Context(object):
    """The scenario's model, h, grid and verify settings, built once per suite run."""

    def __init__(self, scenario, seed=None, parallelism=None):
        unknown = set(scenario.verify) - set(DEFAULT_VERIFY)
        if unknown:
            raise ConfigError('unknown verify fields: {}'.format(sorted(unknown)))
        self.cfg = dict(DEFAULT_VERIFY, **scenario.verify)
        self.scenario = scenario
        self.model = scenario.check()
        self.h = scenario.build_h(self.model)
        self.seed = int(seed if seed is not None else
                        self.cfg['seed'] if self.cfg['seed'] is not None else scenario.ensemble['master_seed'])
        self.parallelism = parallelism
        self.s = scenario.s
        self.x = scenario.x
        self.horizon = scenario.horizon
        self.span = self.horizon - self.s
        self._ensemble = None

    @property
    def z(self):
        z = getattr(self.h, 'z', None)
        return self.x if z is None else z

    @property
    def r(self):
        if self.cfg['r'] is not None:
            return float(self.cfg['r'])
        return float(np.max(self.model.where(self.span, self.z, s=self.s)[1]))

    def times(self, key='fractions'):
        return [self.s + f * self.span for f in self.cfg[key]]

    def ensemble(self):
        if self._ensemble is None:
            method = self.scenario.method
            self._ensemble = simulate_ensemble(self.scenario.build_bridge(self.model), self.scenario.build_grid(),
                                               self.cfg['n_paths'], self.seed, self.parallelism, method=method)
        return self._ensemble


def _guarded(ctx, reports, name, fn):
    try:
        reports.append(fn())
    except ParamError as e:
        utils.log('skipping {} for {}: {}'.format(name, ctx.scenario.model, e), 'warning')


@register('assumptions')
def assumptions_suite(ctx):
    reports = []
    m, z, r = ctx.model, ctx.z, ctx.r
    if m.homogeneous:
        _guarded(ctx, reports, 'chapman_kolmogorov', lambda: chapman_kolmogorov_check(
            m, 0.5 * ctx.span, ctx.span, ctx.x, z))
        _guarded(ctx, reports, 'dual_limit', lambda: dual_limit_check(m, ctx.x, z, r, ctx.span))
        _guarded(ctx, reports, 'density_sup', lambda: density_sup_check(m, z, r, ctx.span))
        _guarded(ctx, reports, 'bounded_potential', lambda: bounded_potential_check(
            m, z, (z[0] + r, z[0] + 2 * r)))
    else:
        utils.log('time-inhomogeneous model: density assumption checks skipped', 'warning')
    reports.append(strong_solution_preconditions(m.spec, ctx.h, n_paths=1000, seed=ctx.seed))
    return reports


@register('bridge')
def bridge_suite(ctx):
    reports = []
    ens = ctx.ensemble()
    alpha = ctx.cfg['alpha']
    if ctx.h.kind == 'strong':
        reports.append(bridge_hit_check(ens, ctx.h.z, tol=ctx.cfg['tol']))
    else:
        _guarded(ctx, reports, 'terminal_law', lambda: terminal_law_check(ens, ctx.h, alpha))
    if ctx.model.dim == 1:
        for t in ctx.times():
            _guarded(ctx, reports, 'transition_law', lambda t=t: transition_law_check(ens, ctx.h, t, alpha))
    return reports


@register('martingale')
def martingale_suite(ctx):
    reports = []
    _guarded(ctx, reports, 'martingale', lambda: martingale_check(
        ctx.model, ctx.h, ctx.times('martingale_fractions'), ctx.cfg['n_paths'], ctx.seed))
    grid = TimeGrid.uniform(ctx.s, ctx.horizon, 1000)
    ens = simulate_unconditioned(ctx.model, grid, ctx.cfg['n_paths'], ctx.seed, x0=ctx.x,
                                 parallelism=ctx.parallelism)
    bump = bump_function(ctx.x, 2. * ctx.r)
    reports.append(local_martingale_residual(ctx.model, bump, ens))
    return reports


@register('appendixB')
def laplace_suite(ctx=None):
    return [
        laplace_limit_check(lambda t, s: s, 'a_i'),
        laplace_limit_check(lambda t, s: 1., 'a_i'),
        laplace_limit_check(lambda t, s: s, 'a_ii', times=(1.,), betas=(1.,)),
        laplace_limit_check(lambda t, s: min(1., s / t), 'b', K=1.),
    ]


@register('all')
def all_suite(ctx):
    reports = []
    for name in ('assumptions', 'bridge', 'martingale', 'appendixB'):
        reports += suites[name](ctx)
    return reports


def run_suite(name, scenario, seed=None, parallelism=None):
    if name not in suites:
        raise ConfigError('unknown suite {!r}, available: {}'.format(name, sorted(suites)))
    ctx = Context(scenario, seed, parallelism)
    return suites[name](ctx)

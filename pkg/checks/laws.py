# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

"""Statistical checks on simulated laws: martingales of h, KS tests of the
bridge marginals and of the terminal law, pinning, and the martingale
problem residual of smooth test functions."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid

import utils
from utils.errors import ParamError, TimeError
from bridges.integrators import TimeGrid, simulate_unconditioned
from bridges.kernels import kernel_table, terminal_table
from .checks import (VerificationReport, ks_one_sample, register, within_se, with_rerun, SE_WIDTH)

TAIL_FRACTION = 1e-3
EULER_STEPS = 1000
FD_STEP = 1e-5


def _draw(model, s, x, t, n, seed, key):
    if model.can_sample:
        return model.sample(t - s, x, utils.streams.stream(seed, key), n, s=s)
    grid = TimeGrid.uniform(s, t, EULER_STEPS)
    ens = simulate_unconditioned(model, grid, n, utils.streams.stream(seed, key).integers(2 ** 63), x0=x)
    return ens.final()


@register('martingale')
def martingale_check(model, h, t_list, n_paths=10000, seed=0, tail_t=None):
    """Sample means of h(t, X_t) / h(s, x) under the unconditioned law.

    Each t in t_list must give 1 within SE_WIDTH standard errors; at tail_t
    (by default just before a finite horizon) the mean may only fall short.
    """
    if h.kind not in ('strong', 'weak', 'indicator', 'explicit') or model is None:
        raise ParamError('martingale_check needs an h-function over a density model')
    s, x = h.s, h.x
    t_list = [float(t) for t in t_list]
    if any(not s < t < h.horizon for t in t_list):
        raise TimeError('martingale times must lie in (s, T*), got {}'.format(t_list))
    if tail_t is None and np.isfinite(h.horizon):
        tail_t = h.horizon - TAIL_FRACTION * (h.horizon - s)
    log_h0 = float(np.asarray(h.log_h(s, x)).reshape(-1)[0])

    def ratio(t, j, seed):
        X = _draw(model, s, x, t, n_paths, seed, j)
        with np.errstate(divide='ignore', over='ignore'):
            lh = np.asarray(h.log_h(t, X), dtype=float)
        return np.exp(lh - log_h0), lh

    def run_once(seed):
        means, ses, ok = [], [], []
        for j, t in enumerate(t_list):
            m = utils.Moments().update(ratio(t, j, seed)[0])
            means.append(m.mean)
            ses.append(m.se)
            ok.append(within_se(m.mean, m.se, 1.))
        statistics = {'t': t_list, 'mean': means, 'se': ses, 'within': ok}
        passed = all(ok)
        if tail_t is not None:
            values, lh = ratio(tail_t, len(t_list), seed)
            m = utils.Moments().update(values)
            tail_ok = within_se(m.mean, m.se, 1., one_sided=True)
            statistics['tail'] = {'t': tail_t, 'mean': m.mean, 'se': m.se,
                                  'median_h': float(np.median(np.exp(lh))), 'below_bound': tail_ok}
            passed = passed and tail_ok
        return VerificationReport(
            'martingale',
            inputs={'model': model.name, 'conditioning': h.kind, 's': s, 'x': x, 'horizon': h.horizon,
                    'sampler': 'exact' if model.can_sample else 'euler'},
            statistics=statistics, thresholds={'se_width': SE_WIDTH}, passed=passed,
            sample_sizes={'n_paths': n_paths})

    return with_rerun(run_once, seed)


def _ks_report(name, ks, ensemble, inputs):
    return VerificationReport(
        name, inputs=inputs,
        statistics={'ks': ks['statistic'], 'pvalue': ks['pvalue']},
        thresholds={'alpha': ks['alpha'], 'critical': ks['critical']},
        passed=ks['passed'], sample_sizes={'n': ks['n']},
        seeds={'master_seed': ensemble.master_seed})


@register('terminal_law')
def terminal_law_check(ensemble, h, alpha=0.01):
    """KS test of the simulated X_{T*} against the h-reweighted terminal law (1-D)."""
    if h.kind == 'strong':
        raise ParamError('strong conditioning pins X_{T*}; use bridge_hit_check')
    term = ensemble.terminal_states()
    if term is None:
        raise ParamError('ensemble carries no terminal draws')
    if term.shape[-1] != 1:
        raise ParamError('terminal_law_check is 1-D only')
    table = terminal_table(h, h.s, h.x)
    ks = ks_one_sample(term[:, 0], table.cdf_at, alpha)
    return _ks_report('terminal_law', ks, ensemble,
                      {'conditioning': h.kind, 's': h.s, 'x': h.x, 'horizon': h.horizon})


@register('transition_law')
def transition_law_check(ensemble, h, t, alpha=0.01):
    """KS test of X_t (nearest grid node) against the h-transform kernel from (s, x)."""
    k = ensemble.grid.nearest(t)
    tk = float(ensemble.grid.nodes[k])
    if not h.s < tk < h.horizon:
        raise TimeError('transition_law_check needs s < t < T*, got t={}'.format(tk))
    if ensemble.dim != 1:
        raise ParamError('transition_law_check is 1-D only')
    table = kernel_table(h, h.s, h.x, tk)
    sample = ensemble.states[~ensemble.failed, k, 0]
    ks = ks_one_sample(sample, table.cdf_at, alpha)
    return _ks_report('transition_law', ks, ensemble,
                      {'conditioning': h.kind, 's': h.s, 'x': h.x, 't': tk, 'requested_t': t})


@register('bridge_hit')
def bridge_hit_check(ensemble, z, tol=0.05, level=0.99):
    """Fraction of paths within tol of z at the last node before the horizon."""
    z = np.asarray(z, dtype=float).reshape(-1)
    final = ensemble.final()
    with np.errstate(invalid='ignore'):
        fraction = float(np.mean(np.linalg.norm(final - z, axis=-1) < tol))
    floored = int(ensemble.diagnostics.get('h_floor', 0))
    return VerificationReport(
        'bridge_hit',
        inputs={'z': z, 'tol': tol, 'method': ensemble.method,
                'delta_min': float(ensemble.grid.delta_min)},
        statistics={'fraction': fraction, 'h_floor_events': floored},
        thresholds={'fraction': level, 'h_floor_events': 0},
        passed=fraction >= level and floored == 0,
        sample_sizes={'n': int(len(final))}, seeds={'master_seed': ensemble.master_seed})


@dataclass(frozen=True)
class TestFunction:
    """f(t, x) with derivatives; x has shape (n, d)."""
    __test__ = False

    value: Callable
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None
    time_derivative: Optional[Callable] = None


def bump_function(center=0., radius=1.):
    """exp(-1 / (1 - q)) with q = |x - center|^2 / radius^2, zero for q >= 1."""
    center = np.asarray(center, dtype=float)
    r2 = float(radius) ** 2

    def parts(x):
        x = np.asarray(x, dtype=float)
        dx = x - center
        q = np.sum(dx ** 2, axis=-1) / r2
        inside = q < 1.
        w = np.where(inside, 1. - q, 1.)
        phi = np.where(inside, np.exp(-1. / w), 0.)
        return dx, q, w, phi

    def value(t, x):
        return parts(x)[3]

    def grad(t, x):
        dx, q, w, phi = parts(x)
        d1 = -phi / w ** 2
        return (d1 * 2. / r2)[..., None] * dx

    def hess(t, x):
        dx, q, w, phi = parts(x)
        d1 = -phi / w ** 2
        d2 = phi * (2. * q - 1.) / w ** 4
        dq = 2. * dx / r2
        eye = np.eye(dx.shape[-1])
        return (d2[..., None, None] * dq[..., :, None] * dq[..., None, :]
                + (d1 * 2. / r2)[..., None, None] * eye)

    return TestFunction(value, grad, hess)


def h_test_function(h, step=FD_STEP):
    """h itself as a time-dependent test function; Hessian and time derivative by central differences."""
    def value(t, x):
        return np.exp(np.asarray(h.log_h(t, x), dtype=float))

    def grad(t, x):
        return value(t, x)[..., None] * h.grad_log_h(t, x)

    def hess(t, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        out = np.empty(x.shape + (d,))
        for j in range(d):
            e = np.zeros(d)
            e[j] = step * max(1., float(np.max(np.abs(x[..., j]))))
            out[..., j, :] = (grad(t, x + e) - grad(t, x - e)) / (2. * e[j])
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def time_derivative(t, x):
        dt = step * max(1., abs(t))
        return (value(t + dt, x) - value(t - dt, x)) / (2. * dt)

    return TestFunction(value, grad, hess, time_derivative)


@register('local_martingale')
def local_martingale_residual(model, f, ensemble, t=None):
    """M^f_t = f(t, X_t) - f(s, X_s) - int_s^t (d/du + A_u) f(u, X_u) du along unconditioned paths.

    The time integral is the trapezoid rule on the ensemble's grid; the mean
    of M^f_t must be 0 within SE_WIDTH standard errors.
    """
    if f.grad is None or f.hess is None:
        raise ParamError('local_martingale_residual needs the gradient and Hessian of f')
    spec = getattr(model, 'spec', model)
    grid = ensemble.grid
    k_end = grid.n_steps if t is None else grid.nearest(t)
    nodes = grid.nodes[:k_end + 1]
    X = ensemble.states[~ensemble.failed, :k_end + 1]
    gen = np.empty(X.shape[:2])
    for k, u in enumerate(nodes):
        x = X[:, k]
        val = (np.sum(spec.b(u, x) * f.grad(u, x), axis=-1)
               + 0.5 * np.einsum('nij,nij->n', spec.a(u, x), f.hess(u, x)))
        if f.time_derivative is not None:
            val = val + f.time_derivative(u, x)
        gen[:, k] = val
    integral = trapezoid(gen, nodes, axis=1) if len(nodes) > 1 else np.zeros(len(X))
    residual = f.value(nodes[-1], X[:, -1]) - f.value(nodes[0], X[:, 0]) - integral
    m = utils.Moments().update(residual)
    return VerificationReport(
        'local_martingale',
        inputs={'model': getattr(model, 'name', 'spec'), 's': float(nodes[0]), 't': float(nodes[-1]),
                'time_dependent': f.time_derivative is not None},
        statistics={'mean': m.mean, 'se': m.se},
        thresholds={'se_width': SE_WIDTH},
        passed=within_se(m.mean, m.se, 0.),
        sample_sizes={'n_paths': m.count, 'n_steps': len(nodes) - 1},
        seeds={'master_seed': ensemble.master_seed})

# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

"""Laplace-transform limits alpha -> inf of alpha int_0^t exp(-alpha s) phi(t, s) ds.

For phi(t, .) increasing, a vanishing limit forces phi(t, 0+) = 0 (modes
a_i and, through a second transform in t, a_ii). Conversely a bounded phi
with phi(t, 0+) = 0 has a vanishing limit (mode b).
"""

import numpy as np

from utils.errors import ParamError
from utils.quadrature import quad, quad_pieces
from .checks import VerificationReport, register

MODES = ('a_i', 'a_ii', 'b')
EPSREL = 1e-10
TREND_TOL = 1e-3
ZERO_TOL = 1e-8


def _abel(phi, t, alpha):
    """alpha int_0^t exp(-alpha s) phi(t, s) ds, split where the weight decays."""
    edges = sorted({0., t} | {min(t, k / alpha) for k in (1., 10., 50.)})

    def f(s):
        return alpha * np.exp(-alpha * s) * phi(t, s)

    return quad_pieces(f, edges, epsabs=0., epsrel=EPSREL)[0]


def _at_zero(phi, t, depth=12):
    """phi(t, 0+) read off along delta = t 10^-k."""
    return float(phi(t, t * 10. ** -depth))


def _increasing(phi, t, n=64):
    grid = t * np.geomspace(1e-12, 1., n)
    values = np.array([phi(t, d) for d in grid], dtype=float)
    return bool(np.all(np.diff(values) >= -1e-14 * np.maximum(1., np.abs(values[1:]))))


def _double(phi, beta, alpha):
    def g(t):
        return np.exp(-beta * t) * _abel(phi, t, alpha)

    return quad(g, 0., np.inf, epsrel=1e-8)[0]


@register('laplace_limit')
def laplace_limit_check(phi, mode, times=(0.5, 1., 2.), alphas=None, betas=(0.5, 1., 2.), K=None):
    """Evaluate the Laplace limit named by `mode` for phi(t, delta) >= 0.

    The report passes when the numbers agree with the limit identity: the transforms
    approach the value predicted by phi(t, 0+), and a vanishing limit for
    increasing phi comes with phi(t, 0+) = 0.
    """
    if mode not in MODES:
        raise ParamError('mode must be one of {}, got {!r}'.format(MODES, mode))
    if alphas is None:
        alphas = [10. ** k for k in range(1, 7)] if mode != 'a_ii' else [10. ** k for k in range(1, 5)]
    alphas = [float(a) for a in alphas]
    notes = []
    statistics = {}
    passed = True

    if mode == 'a_ii':
        for beta in betas:
            values = [_double(phi, beta, a) for a in alphas]
            target = quad(lambda t: np.exp(-beta * t) * _at_zero(phi, t), 0., np.inf, epsrel=1e-8)[0]
            converges = abs(values[-1] - target) <= 10 * TREND_TOL * max(1., abs(target))
            statistics['beta={}'.format(beta)] = {'values': values, 'limit': values[-1], 'phi0_transform': target}
            passed = passed and converges
        increasing = all(_increasing(phi, t) for t in times)
        if not increasing:
            notes.append('phi(t, .) is not increasing; the limit identity does not apply')
        return VerificationReport('laplace_limit', inputs={'mode': mode, 'alphas': alphas, 'betas': list(betas)},
                                  statistics=statistics, thresholds={'trend': 10 * TREND_TOL},
                                  passed=passed, notes=notes)

    for t in times:
        values = [_abel(phi, t, a) for a in alphas]
        phi0 = _at_zero(phi, t)
        entry = {'values': values, 'limit': values[-1], 'phi0': phi0}
        if mode == 'a_i':
            increasing = _increasing(phi, t)
            converges = abs(values[-1] - phi0) <= TREND_TOL * max(1., abs(phi0))
            vanishes = abs(values[-1]) <= TREND_TOL
            consistent = not (increasing and vanishes and abs(phi0) > ZERO_TOL)
            entry.update({'increasing': increasing, 'limit_vanishes': vanishes})
            passed = passed and converges and consistent
            if not increasing:
                notes.append('phi({}, .) is not increasing; the limit identity does not apply'.format(t))
        else:
            grid = t * np.linspace(0., 1., 257)[1:]
            bound = float(np.max([phi(t, d) for d in grid]))
            hypotheses = (K is None or bound <= K) and abs(phi0) <= ZERO_TOL
            tail = values[-3:]
            decaying = tail[0] >= tail[1] >= tail[2] and values[-1] <= TREND_TOL * max(1., K or bound)
            entry.update({'sup_phi': bound, 'hypotheses': hypotheses})
            if hypotheses:
                passed = passed and decaying
            else:
                notes.append('phi({}, .) is not bounded by K or does not vanish at 0; conclusion not tested'.format(t))
        statistics['t={}'.format(t)] = entry
    if mode == 'b':
        notes.append('the bound phi(t, delta) < K is read over 0 <= delta <= t')
    return VerificationReport('laplace_limit', inputs={'mode': mode, 'alphas': alphas, 'times': list(times), 'K': K},
                              statistics=statistics, thresholds={'trend': TREND_TOL, 'zero': ZERO_TOL},
                              passed=passed, notes=notes)

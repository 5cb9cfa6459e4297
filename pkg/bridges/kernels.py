# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

"""Tabulated CDFs of 1-D h-transform kernels.

A coarse pass over the bulk of p (and of h when it is concentrated) finds
where the kernel density is within exp(-40) of its peak; a fine pass with
FINE_POINTS nodes integrates it there through the antiderivative of a cubic
spline of the density, which keeps the CDF within about 1e-10 of the exact
one. Sampling is inverse-CDF: the table brackets the quantile and brentq
solves the spline CDF inside the bracket to PPF_XTOL.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.stats import norm

from utils.errors import NumericsError, ParamError, TimeError
from diffusions.diffusions import as_state

COARSE_POINTS = 513
FINE_POINTS = 8193
LOG_CUT = 40.
WIDTH = 14.
PPF_XTOL = 1e-12


@dataclass(frozen=True)
class KernelTable:
    y: np.ndarray
    cdf: np.ndarray
    F: object = None    # normalised spline CDF; the table is piecewise linear without it

    def cdf_at(self, v):
        v = np.asarray(v, dtype=float)
        if self.F is None:
            return np.interp(v, self.y, self.cdf, left=0., right=1.)
        out = np.clip(self.F(np.clip(v, self.y[0], self.y[-1])), 0., 1.)
        return np.where(v < self.y[0], 0., np.where(v > self.y[-1], 1., out))

    def ppf(self, u):
        u_arr = np.atleast_1d(np.asarray(u, dtype=float))
        if self.F is None:
            out = np.interp(u_arr, self.cdf, self.y)
            return out if np.ndim(u) else float(out[0])
        k = np.clip(np.searchsorted(self.cdf, u_arr, side='right') - 1, 0, len(self.y) - 2)
        out = np.empty_like(u_arr)
        for i, (ui, ki) in enumerate(zip(u_arr, k)):
            a, b = self.y[ki], self.y[ki + 1]
            if self.F(a) >= ui:
                out[i] = a
            elif self.F(b) <= ui:
                out[i] = b
            else:
                out[i] = brentq(lambda v: self.F(v) - ui, a, b, xtol=PPF_XTOL)
        return out if np.ndim(u) else float(out[0])


class _SplineCDF:
    """Antiderivative of a cubic spline through the density, scaled to end at 1."""

    def __init__(self, y, q):
        self.anti = CubicSpline(y, q).antiderivative()
        self.total = float(self.anti(y[-1]))

    def __call__(self, v):
        return self.anti(v) / self.total


def _coarse_grid(centres, bounds):
    lo_b, hi_b = bounds
    parts = []
    for c, sc in centres:
        parts.append(np.linspace(c - WIDTH * sc, c + WIDTH * sc, COARSE_POINTS))
    grid = np.concatenate(parts + [np.array([b for b in bounds if np.isfinite(b)])])
    grid = grid[(grid >= lo_b) & (grid <= hi_b)]
    return np.unique(grid)


def _build(log_q, centres, bounds):
    coarse = _coarse_grid(centres, bounds)
    if len(coarse) < 2:
        raise NumericsError('kernel window is empty', {'bounds': bounds, 'centres': centres})
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        lq = np.asarray(log_q(coarse[:, None]), dtype=float)
    lq = np.where(np.isnan(lq), -np.inf, lq)
    peak = lq.max()
    if not np.isfinite(peak):
        raise NumericsError('kernel density vanishes on the whole window',
                            {'bounds': bounds, 'centres': centres})
    live = np.flatnonzero(lq > peak - LOG_CUT)
    a = coarse[max(live[0] - 1, 0)]
    b = coarse[min(live[-1] + 1, len(coarse) - 1)]
    if not b > a:
        raise NumericsError('kernel window collapsed to a point', {'a': a, 'b': b})
    fine = np.linspace(a, b, FINE_POINTS)
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        lf = np.asarray(log_q(fine[:, None]), dtype=float)
    lf = np.where(np.isnan(lf), -np.inf, lf)
    q = np.exp(lf - lf.max())
    F = _SplineCDF(fine, q)
    if not (np.isfinite(F.total) and F.total > 0):
        raise NumericsError('kernel table has no mass', {'a': a, 'b': b})
    # the spline may dip below zero where q is negligible
    cdf = np.maximum.accumulate(np.clip(F(fine), 0., 1.))
    return KernelTable(fine, cdf, F)


def _bounds(model, support=None):
    lo, hi = model.spec.domain.lower[0], np.inf
    if support is not None:
        lo, hi = max(lo, support[0]), min(hi, support[1])
    return lo, hi


def kernel_table(h, s, x, t):
    """CDF table of y -> h(t, y) p(t - s, x, y) m(dy) / h(s, x) for 1-D models."""
    model = h.model
    if model.dim != 1:
        raise ParamError('kernel tables are 1-D only')
    if not s < t < h.horizon:
        raise TimeError('kernel table needs s < t < T*, got s={} t={}'.format(s, t))
    x = as_state(x, 1).reshape(1)

    def log_q(y):
        return (h.log_h(t, y) + model.log_p(t - s, x, y, s=s)
                + np.log(model.measure.lebesgue_density(y)))

    centres = [tuple(v[0] for v in model.where(t - s, x, s=s))]
    hint = h.window(t)
    if hint is not None:
        centres.append((hint[0][0], hint[1][0]))
    return _build(log_q, centres, _bounds(model))


def terminal_table(h, s, x):
    """CDF table of the law of X_{T*} given X_s = x under weak or indicator conditioning."""
    model = h.model
    if h.kind == 'strong':
        raise ParamError('strong conditioning pins X_{T*}; there is no terminal density')
    if model.dim != 1:
        raise ParamError('terminal tables are 1-D only')
    if not s < h.horizon:
        raise TimeError('terminal table needs s < T*')
    x = as_state(x, 1).reshape(1)
    tau = h.horizon - s

    def log_q(y):
        return (h.log_terminal_weight(y) + model.log_p(tau, x, y, s=s)
                + np.log(model.measure.lebesgue_density(y)))

    c, sc = (v[0] for v in model.where(tau, x, s=s))
    centres = [(c, sc)]
    support = h.terminal_support
    if support is not None:
        # a support edge deep in the tail of p: resolve the decay length there
        for edge in support:
            if np.isfinite(edge):
                centres.append((edge, min(sc, sc ** 2 / max(abs(edge - c), sc))))
    return _build(log_q, centres, _bounds(model, support))


def _truncated_normal(u_lo, u_hi, v):
    """Standard normal restricted to [u_lo, u_hi] at uniforms v, tail-stable."""
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        sf_lo, sf_hi = norm.sf(u_lo), norm.sf(u_hi)
        right = norm.isf(sf_hi + v * (sf_lo - sf_hi))
        c_lo, c_hi = norm.cdf(u_lo), norm.cdf(u_hi)
        left = norm.ppf(c_lo + v * (c_hi - c_lo))
    return np.where(u_lo > 0, right, left)


def sample_terminal(h, t, x, v):
    """X_{T*} for states x (m, d) at time t from uniforms v (m,); None if no terminal law is available."""
    model = h.model
    x = np.asarray(x, dtype=float)
    if h.kind == 'strong':
        return np.broadcast_to(h.z, x.shape).copy()
    if h.kind not in ('weak', 'indicator') or model is None or model.dim != 1:
        return None
    tau = h.horizon - t
    if h.kind == 'indicator' and model.standardize is not None and model.transport is not None:
        lo, hi = h.region
        u = _truncated_normal(model.standardize(tau, x, lo, s=t), model.standardize(tau, x, hi, s=t), v)
        return model.transport(tau, x, u[:, None], s=t)
    out = np.empty_like(x)
    for i in range(len(x)):
        if not np.all(np.isfinite(x[i])):
            out[i] = np.nan
            continue
        out[i, 0] = terminal_table(h, t, x[i]).ppf(v[i])
    return out

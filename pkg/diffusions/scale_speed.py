# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

"""Scale function, speed measure and Feller boundary tests for 1-D diffusions.

With beta = b/a and I(x) = int_c^x beta:

    s'(x) = exp(-2 I(x)),   s(x) = int_c^x s',   m(x) = 2 / (a(x) s'(x))

At an endpoint e the two Feller integrals are

    Sigma(e) = int_c^e m((c, x)) s'(x) dx     (finite <=> e is accessible)
    N(e)     = int_c^e (s(x) - s(c)) m(x) dx

(orientation taken positive). They are integrated as one ODE system on an
expanding truncation sequence. S and M are carried rescaled by exp(+-2I),
which keeps both bounded whenever the corresponding Feller integral is.
Every ODE solve runs under an evaluation budget (InconclusiveError when it
runs out).
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

import utils
from utils.errors import (DomainError, InconclusiveError, IntegrabilityError, ParamError,
                          QuadratureError)
from .diffusions import DiffusionSpec, DomainBox

TABLE_POINTS = 4096
GROWTH = 1.10
INCREMENT_GUARD = 0.85
FLAT = 1e-10
MAX_DOUBLINGS = 40
MAX_HALVINGS = 200
ODE_RTOL = 1e-10
ODE_ATOL = 1e-14
TABLE_LOG_LIMIT = 20.
OVERFLOW = 1e250
MAX_EVALS = 200000


class ScaleFunction(object):
    """Scale function of a homogeneous 1-D diffusion, s(c) = 0.

    interval defaults to (domain lower bound, inf); a finite upper end is
    only needed for diffusions already written in natural scale.
    """

    def __init__(self, spec, c=None, interval=None, t=0.):
        if spec.dim != 1:
            raise ParamError('scale function needs a 1-D diffusion, got d={}'.format(spec.dim))
        self.spec = spec
        self.t = float(t)
        lo, hi = interval if interval is not None else (spec.domain.lower[0], np.inf)
        self.lower, self.upper = float(lo), float(hi)
        if c is None:
            if np.isfinite(self.lower) and np.isfinite(self.upper):
                c = 0.5 * (self.lower + self.upper)
            elif np.isfinite(self.lower):
                c = self.lower + 1.
            elif np.isfinite(self.upper):
                c = self.upper - 1.
            else:
                c = 0.
        self.c = float(c)
        if not self.lower < self.c < self.upper:
            raise DomainError('reference point c={} not in the interior ({}, {})'.format(
                self.c, self.lower, self.upper))
        self._table = None

    def ratio(self, x):
        xx = np.array([float(x)])
        return float(self.spec.b(self.t, xx)[0]) / self.a(x)

    def a(self, x):
        return float(self.spec.a(self.t, np.array([float(x)]))[0, 0])

    def _check(self, x):
        if not self.lower < x < self.upper:
            raise DomainError('x={} not in the interior ({}, {})'.format(x, self.lower, self.upper))

    def exponent(self, x):
        """I(x) = int_c^x b/a."""
        self._check(x)
        try:
            value, _ = utils.quadrature.quad(self.ratio, self.c, x, epsabs=1e-13, epsrel=1e-12)
        except QuadratureError as e:
            raise IntegrabilityError('b/a not integrable on [{}, {}]: {}'.format(self.c, x, e))
        return value

    def derivative(self, x):
        return float(np.exp(-2. * self.exponent(x)))

    def __call__(self, x):
        return scale(self, x)

    def table(self):
        if self._table is None:
            self._table = _tabulate(self)
        return self._table

    def cached(self, x):
        tab = self.table()
        return tab['s'](np.clip(x, tab['x_min'], tab['x_max']))

    def cached_derivative(self, x):
        tab = self.table()
        return np.exp(-2. * tab['I'](np.clip(x, tab['x_min'], tab['x_max'])))

    def inverse(self, y):
        tab = self.table()
        return tab['inv'](np.clip(y, tab['s_min'], tab['s_max']))

    def endpoint_value(self, endpoint):
        """s at the endpoint when the table shows it settling, else -inf / inf."""
        tab = self.table()
        side = tab[endpoint]
        if side is None:
            return -np.inf if endpoint == 'lower' else np.inf
        return side


class SpeedDensity(object):
    """m(x) = 2 / (a(x) s'(x)) against Lebesgue."""

    def __init__(self, scale):
        self.scale = scale

    def __call__(self, x):
        return self.density(x)

    def density(self, x):
        sf = self.scale
        return 2. / (sf.a(x) * sf.derivative(x))


@dataclass
class FellerIntegral:
    name: str
    value: float
    diverges: bool
    trace: List[float] = field(default_factory=list)


@dataclass
class BoundaryReport:
    endpoint: str
    classification: str
    inaccessible: bool
    integrals: dict
    location: float = None
    notes: Optional[str] = None

    def to_dict(self):
        return utils.to_jsonable({
            'endpoint': self.endpoint,
            'location': self.location,
            'classification': self.classification,
            'inaccessible': self.inaccessible,
            'integrals': {k: {'value': v.value, 'diverges': v.diverges, 'trace': v.trace}
                          for k, v in self.integrals.items()},
            'notes': self.notes,
        })


def scale(sf, x):
    """s(x) = int_c^x exp(-2 int_c^y b/a) dy by nested adaptive quadrature."""
    x = float(x)
    sf._check(x)
    try:
        value, _ = utils.quadrature.quad(sf.derivative, sf.c, x, epsabs=1e-13, epsrel=1e-11)
    except QuadratureError as e:
        raise IntegrabilityError('scale integral on [{}, {}] failed: {}'.format(sf.c, x, e))
    return value


def _table_nodes(sf, direction, n):
    """Distances from c: dense and linear near c, then geometric towards the endpoint."""
    end = sf.upper if direction > 0 else sf.lower
    if np.isfinite(end):
        span = abs(end - sf.c)
        u = np.union1d(span * np.linspace(0., 0.5, n // 2 + 1)[1:], span * (1. - np.geomspace(1., 1e-12, n)[1:]))
    else:
        u = np.union1d(np.linspace(0., 4., 2 * n + 1)[1:], np.geomspace(1e-6, 1e8, n))
    return sf.c + direction * u


class _BudgetExceeded(Exception):
    pass


def _counted(fn, limit):
    calls = [0]

    def wrapped(x, y):
        calls[0] += 1
        if calls[0] > limit:
            raise _BudgetExceeded()
        return fn(x, y)
    return wrapped


def _saturation(x, y):
    return abs(y[0]) - TABLE_LOG_LIMIT


_saturation.terminal = True


def _tabulate(sf, max_evals=MAX_EVALS):
    """Integrate [I, s] outward from c on the table nodes.

    A side stops once |I| reaches TABLE_LOG_LIMIT: s' is then below
    exp(-2 L) (s settles, finite endpoint value) or above exp(2 L)
    (s runs off, endpoint value +-inf).
    """
    half = TABLE_POINTS // 2

    def rhs(x, y):
        return [sf.ratio(x), np.exp(-2. * y[0])]

    xs, Is, ss = [np.array([sf.c])], [np.zeros(1)], [np.zeros(1)]
    ends = {}
    for direction, name in ((-1, 'lower'), (1, 'upper')):
        nodes = _table_nodes(sf, direction, half)
        try:
            with np.errstate(over='ignore', invalid='ignore'):
                sol = solve_ivp(_counted(rhs, max_evals), (sf.c, nodes[-1]), [0., 0.], method='LSODA',
                                t_eval=nodes, events=_saturation, rtol=ODE_RTOL, atol=ODE_ATOL)
        except _BudgetExceeded:
            raise InconclusiveError('scale table on the {} side used up {} evaluations'.format(name, max_evals))
        if sol.status == -1:
            raise IntegrabilityError('scale table on the {} side failed: {}'.format(name, sol.message))
        x_side, I_side, s_side = sol.t, sol.y[0], sol.y[1]
        ends[name] = None
        if sol.status == 1:
            x_ev, (I_ev, s_ev) = sol.t_events[0][0], sol.y_events[0][0]
            if not len(x_side) or direction * (x_ev - x_side[-1]) > 0:
                x_side = np.append(x_side, x_ev)
                I_side = np.append(I_side, I_ev)
                s_side = np.append(s_side, s_ev)
            if I_ev > 0:
                ends[name] = float(s_ev)
        elif len(s_side) > 2:
            # settled when the last stretch of nodes moved s by less than 1e-6 relative
            tail = s_side[-max(2, half // 20):]
            if abs(tail[-1] - tail[0]) <= 1e-6 * max(abs(tail[-1]), 1e-300):
                ends[name] = float(s_side[-1])
        keep = np.isfinite(I_side) & np.isfinite(s_side)
        xs.append(x_side[keep])
        Is.append(I_side[keep])
        ss.append(s_side[keep])
    x = np.concatenate(xs)
    order = np.argsort(x)
    x, I, s = x[order], np.concatenate(Is)[order], np.concatenate(ss)[order]
    strict = np.concatenate([[True], np.diff(x) > 0])
    x, I, s = x[strict], I[strict], s[strict]
    beta = np.array([sf.ratio(v) for v in x])
    # saturated stretches repeat s; the inverse needs it strictly increasing
    mono = np.concatenate([[True], s[1:] > np.maximum.accumulate(s)[:-1]])
    utils.log('scale table: {} nodes on [{:.3g}, {:.3g}]'.format(len(x), x[0], x[-1]), 'debug')
    return {
        'x_min': x[0], 'x_max': x[-1], 's_min': s[mono][0], 's_max': s[mono][-1],
        's': CubicHermiteSpline(x, s, np.exp(-2. * I)), 'I': CubicHermiteSpline(x, I, beta),
        'inv': PchipInterpolator(s[mono], x[mono]),
        'lower': ends['lower'], 'upper': ends['upper'],
    }


def _truncations(sf, endpoint):
    if endpoint == 'upper':
        if np.isfinite(sf.upper):
            return [sf.upper - (sf.upper - sf.c) * 2. ** -k for k in range(1, MAX_HALVINGS + 1)]
        return [sf.c + 2. ** k for k in range(MAX_DOUBLINGS + 1)]
    if np.isfinite(sf.lower):
        return [sf.lower + (sf.c - sf.lower) * 2. ** -k for k in range(1, MAX_HALVINGS + 1)]
    return [sf.c - 2. ** k for k in range(MAX_DOUBLINGS + 1)]


def _verdict(trace):
    """'diverges', 'converges' or None from a nondecreasing partial-integral trace."""
    last = trace[-1]
    if not np.isfinite(last):
        return 'diverges'
    if len(trace) >= 2:
        if abs(last - trace[-2]) <= FLAT * abs(last) or last == trace[-2]:
            return 'converges'
    if len(trace) >= 4:
        p = trace[-4:]
        growing = all(p[j] > 0 and p[j + 1] >= GROWTH * p[j] for j in range(3))
        inc_prev, inc_last = p[-2] - p[-3], p[-1] - p[-2]
        if growing and inc_prev > 0 and inc_last >= INCREMENT_GUARD * inc_prev:
            return 'diverges'
    return None


def _overflow_event(*idx):
    def event(x, y):
        return max(abs(y[i]) for i in idx) - OVERFLOW
    event.terminal = True
    return event


# state: I, rescaled s, rescaled m, Sigma, N; each integral owns the components it reads
_OWNED = {'sigma': (2, 3), 'n': (1, 4)}


def feller_integrals(sf, endpoint, max_evals=MAX_EVALS, which=('sigma', 'n')):
    """The Feller integrals named in `which` at `endpoint`, with divergence verdicts.

    An integral whose own components pass OVERFLOW diverges and is frozen
    while the other one keeps going.
    """
    if endpoint not in ('lower', 'upper'):
        raise ParamError('endpoint must be lower or upper, got {!r}'.format(endpoint))
    direction = 1. if endpoint == 'upper' else -1.
    unknown = set(which) - set(_OWNED)
    if unknown or not which:
        raise ParamError('which must name sigma and/or n, got {!r}'.format(which))
    active = {key: key in which for key in ('sigma', 'n')}

    def rhs(x, y):
        I, s_t, m_t = y[0], y[1], y[2]
        beta = sf.ratio(x)
        a = sf.a(x)
        # derivatives in the distance u = |x - c|, turned into d/dx by `direction`
        dI_u = direction * beta
        ds_t = 1. + 2. * dI_u * s_t if active['n'] else 0.
        dm_t = 2. / a - 2. * dI_u * m_t if active['sigma'] else 0.
        dsigma = m_t if active['sigma'] else 0.
        dn = 2. * s_t / a if active['n'] else 0.
        return [beta, direction * ds_t, direction * dm_t, direction * dsigma, direction * dn]

    counted = _counted(rhs, max_evals)
    overflow = {key: _overflow_event(*idx) for key, idx in _OWNED.items()}
    traces = {'sigma': [], 'n': []}
    verdicts = {'sigma': None, 'n': None}
    state = np.zeros(5)
    x_prev = sf.c
    for x_k in _truncations(sf, endpoint):
        x_from = x_prev
        while True:
            running = [key for key in ('sigma', 'n') if active[key]]
            try:
                with np.errstate(over='ignore', invalid='ignore'):
                    sol = solve_ivp(counted, (x_from, x_k), state, method='LSODA',
                                    events=[overflow[key] for key in running], rtol=ODE_RTOL, atol=ODE_ATOL)
            except _BudgetExceeded:
                key = running[0]
                raise InconclusiveError('Feller integral {} at the {} endpoint used up {} evaluations'.format(
                    key, endpoint, max_evals), traces[key])
            if sol.status == -1:
                key = running[0]
                raise InconclusiveError('Feller integral {} at the {} endpoint: {}'.format(
                    key, endpoint, sol.message), traces[key])
            state = np.array(sol.y[:, -1])
            if sol.status != 1:
                break
            for key, hits in zip(running, sol.t_events):
                if len(hits):
                    traces[key].append(float(np.inf))
                    verdicts[key] = 'diverges'
                    active[key] = False
                    state[list(_OWNED[key])] = 0.
            x_from = sol.t[-1]
            if not any(active.values()) or x_from == x_k:
                break
        if not any(active.values()):
            break
        for key, idx in (('sigma', 3), ('n', 4)):
            if not active[key]:
                continue
            traces[key].append(float(state[idx]))
            verdicts[key] = _verdict(traces[key])
            if verdicts[key] is not None:
                active[key] = False
        x_prev = x_k
        if not any(active.values()):
            break

    result = {}
    for key in ('sigma', 'n'):
        if key not in which:
            continue
        if verdicts[key] is None:
            raise InconclusiveError('Feller integral {} at the {} endpoint neither converged nor diverged'.format(
                key, endpoint), traces[key])
        result[key] = FellerIntegral(key, traces[key][-1], verdicts[key] == 'diverges', traces[key])
    return result


def check_inaccessible(sd, endpoint):
    """(inaccessible, FellerIntegral) from the scale-against-speed integral."""
    integrals = feller_integrals(sd.scale, endpoint, which=('sigma',))
    sigma = integrals['sigma']
    return sigma.diverges, sigma


_CLASSES = {
    (False, False): 'regular',
    (False, True): 'exit',
    (True, False): 'entrance',
    (True, True): 'natural',
}


def classify_boundary(sd, endpoint):
    sf = sd.scale
    integrals = feller_integrals(sf, endpoint)
    key = (integrals['sigma'].diverges, integrals['n'].diverges)
    cls = _CLASSES[key]
    location = sf.upper if endpoint == 'upper' else sf.lower
    utils.log('boundary {} ({}): {}'.format(endpoint, location, cls), 'debug')
    return BoundaryReport(endpoint, cls, integrals['sigma'].diverges, integrals, location=location,
                          notes='numerical evidence from truncated integrals, not a proof')


def linear_growth_check(spec, K, grid=None, t=0.):
    """True when |b(x)| < K (1 + |x|) on every grid point inside the domain."""
    if grid is None:
        grid = np.linspace(-10., 10., 401)
    grid = np.asarray(grid, dtype=float).reshape(-1, 1)
    grid = grid[spec.domain.interior(grid)]
    if len(grid) == 0:
        return True
    b = np.abs(spec.b(t, grid)[..., 0])
    return bool(np.all(b < K * (1. + np.abs(grid[:, 0]))))


def natural_scale(sf):
    """ScaleFunction of Y = s(X): zero drift, dispersion s'(x) sigma(x) at x = s^{-1}(y)."""
    spec = sf.spec

    def drift(t, y):
        return np.zeros(np.shape(y))

    def dispersion(t, y):
        y = np.asarray(y, dtype=float)
        x = np.asarray(sf.inverse(y[..., 0]), dtype=float)[..., None]
        return (sf.cached_derivative(x[..., 0])[..., None] * spec.sigma(sf.t, x)[..., 0])[..., None]

    lo = sf.endpoint_value('lower')
    hi = sf.endpoint_value('upper')
    nat = DiffusionSpec(1, drift, dispersion, DomainBox((lo,)), homogeneous=True)
    return ScaleFunction(nat, c=0., interval=(lo, hi))

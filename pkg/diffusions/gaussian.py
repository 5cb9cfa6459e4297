# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

"""Linear SDEs dX = (b(t) + gamma(t) X) dt + sigma(t) dB.

The fundamental matrix F solves dF^{-1}/dt = -F^{-1} gamma, F^{-1}(0) = I.
Conditional moments:

    m(s, t, x)  = F(t) F^{-1}(s) x + F(t) (G(t) - G(s)),   G' = F^{-1} b
    Sigma(s, t) = F(t) (Q(t) - Q(s)) F(t)^T,                Q' = (F^{-1} sigma)(F^{-1} sigma)^T

F^{-1}, G and Q are integrated together, so all three share one adaptive
step sequence and one error control.
"""

import threading
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import linalg
from scipy.integrate import solve_ivp
from scipy.interpolate import interp1d

import utils
from utils.errors import NumericsError, ParamError, SingularCovError, TimeError
from .diffusions import register, DensityModel, DiffusionSpec, DomainBox

ODE_RTOL = 1e-10
ODE_ATOL = 1e-12
JITTER = 1e-12


def _table(value, name):
    """(times, values) of a coefficient table, checked."""
    if 'times' not in value or 'values' not in value:
        raise ParamError('{}: a coefficient table needs times and values'.format(name))
    try:
        times = np.asarray(value['times'], dtype=float)
        values = np.asarray(value['values'], dtype=float)
    except (TypeError, ValueError):
        raise ParamError('{}: table times and values must be numeric arrays'.format(name))
    if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
        raise ParamError('{}: table times must be strictly increasing'.format(name))
    if values.ndim == 0 or len(values) != len(times):
        raise ParamError('{}: table needs one value per time, got {} times'.format(name, len(times)))
    if not np.all(np.isfinite(values)):
        raise ParamError('{}: coefficients must be finite'.format(name))
    return times, values


def _coefficient(value, shape, name):
    """Constant, callable or {'times', 'values'} table -> (callable, is_constant)."""
    if value is None:
        value = 0.
    if callable(value):
        return (lambda t: np.broadcast_to(np.asarray(value(t), dtype=float), shape)), False
    if isinstance(value, dict):
        times, values = _table(value, name)
        if values.ndim == 1 and len(shape) == 2:
            values = values[:, None, None] * np.eye(shape[0])
        try:
            values = np.broadcast_to(values, (len(times),) + shape)
        except ValueError:
            raise ParamError('{}: table values do not fit shape {}'.format(name, shape))
        f = interp1d(times, values, axis=0, bounds_error=False, fill_value=(values[0], values[-1]))
        return (lambda t: np.asarray(f(t), dtype=float)), False
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0 and len(shape) == 2:
        arr = arr * np.eye(shape[0])
    try:
        arr = np.broadcast_to(arr, shape).copy()
    except ValueError:
        raise ParamError('{}: expected shape {}, got {}'.format(name, shape, arr.shape))
    if not np.all(np.isfinite(arr)):
        raise ParamError('{}: coefficients must be finite'.format(name))
    return (lambda t: arr), True


def _infer_dim(sigma, dim):
    if dim is not None:
        return int(dim)
    if callable(sigma):
        return int(np.atleast_2d(sigma(0.)).shape[0])
    if isinstance(sigma, dict):
        _, values = _table(sigma, 'sigma')
        return 1 if values.ndim == 1 else values.shape[-1]
    arr = np.asarray(sigma, dtype=float)
    return 1 if arr.ndim == 0 else arr.shape[0]


class LinearSDE(object):
    """Coefficients of a linear SDE on [0, horizon]; immutable after construction."""

    def __init__(self, sigma=1., b=None, gamma=None, horizon=1., dim=None):
        d = _infer_dim(sigma, dim)
        if d < 1:
            raise ParamError('linear SDE needs dim >= 1')
        horizon = float(horizon)
        if not (np.isfinite(horizon) and horizon > 0):
            raise ParamError('linear SDE needs a finite positive horizon, got {}'.format(horizon))
        self.dim = d
        self.horizon = horizon
        self.sigma, c1 = _coefficient(sigma, (d, d), 'sigma')
        self.b, c2 = _coefficient(b, (d,), 'b')
        self.gamma, c3 = _coefficient(gamma, (d, d), 'gamma')
        self.constant = c1 and c2 and c3
        self._memo = {}
        self._lock = threading.Lock()

    def a(self, t):
        s = self.sigma(t)
        return s @ s.T

    def drift(self, t, x):
        x = np.asarray(x, dtype=float)
        return self.b(t) + x @ self.gamma(t).T

    def dispersion(self, t, x):
        return np.broadcast_to(self.sigma(t), np.shape(x)[:-1] + (self.dim, self.dim)).copy()

    def spec(self):
        return DiffusionSpec(self.dim, self.drift, self.dispersion, DomainBox.whole(self.dim),
                             homogeneous=self.constant)


@dataclass(frozen=True)
class FundamentalMatrix:
    dim: int
    horizon: float
    solution: Any

    def _state(self, t):
        t = float(t)
        if t < 0 or t > self.horizon * (1 + 1e-12):
            raise TimeError('time {} outside [0, {}]'.format(t, self.horizon))
        return self.solution(min(t, self.horizon))

    def F_inv(self, t):
        d = self.dim
        return self._state(t)[:d * d].reshape(d, d)

    def F(self, t):
        return np.linalg.inv(self.F_inv(t))

    def G(self, t):
        d = self.dim
        return self._state(t)[d * d:d * d + d]

    def Q(self, t):
        d = self.dim
        q = self._state(t)[d * d + d:].reshape(d, d)
        return 0.5 * (q + q.T)


@dataclass(frozen=True)
class MeanCov:
    mean: np.ndarray
    cov: np.ndarray


def _solve(lin, rtol):
    d = lin.dim

    def rhs(t, y):
        f_inv = y[:d * d].reshape(d, d)
        fs = f_inv @ lin.sigma(t)
        return np.concatenate([(-f_inv @ lin.gamma(t)).ravel(),
                               f_inv @ lin.b(t),
                               (fs @ fs.T).ravel()])

    y0 = np.concatenate([np.eye(d).ravel(), np.zeros(d), np.zeros(d * d)])
    sol = solve_ivp(rhs, (0., lin.horizon), y0, method='DOP853', rtol=rtol,
                    atol=ODE_ATOL, dense_output=True)
    if not sol.success:
        raise NumericsError('fundamental matrix ODE failed: {}'.format(sol.message),
                            {'horizon': lin.horizon, 'rtol': rtol})
    utils.log('fundamental matrix: d={} horizon={} steps={}'.format(d, lin.horizon, len(sol.t)), 'debug')
    return FundamentalMatrix(d, lin.horizon, sol.sol)


def fundamental_matrix(lin, t=None, rtol=ODE_RTOL):
    """Cached FundamentalMatrix of lin; with t given, returns (F(t), F^{-1}(t))."""
    with lin._lock:
        fm = lin._memo.get(rtol)
        if fm is None:
            fm = _solve(lin, rtol)
            lin._memo[rtol] = fm
    if t is None:
        return fm
    f_inv = fm.F_inv(t)
    return np.linalg.inv(f_inv), f_inv


def mean_cov(lin, s, t, x):
    """m(s, t, x) for a batch of x (..., d) and Sigma(s, t)."""
    if t < s:
        raise TimeError('mean_cov needs s <= t, got s={} t={}'.format(s, t))
    fm = fundamental_matrix(lin)
    F_t = fm.F(t)
    transfer = F_t @ fm.F_inv(s)
    x = np.asarray(x, dtype=float)
    mean = x @ transfer.T + F_t @ (fm.G(t) - fm.G(s))
    cov = F_t @ (fm.Q(t) - fm.Q(s)) @ F_t.T
    return MeanCov(mean, 0.5 * (cov + cov.T))


def transfer_matrix(lin, s, t):
    fm = fundamental_matrix(lin)
    return fm.F(t) @ fm.F_inv(s)


def cholesky(cov):
    """Lower Cholesky factor; retries once with jitter 1e-12 * trace / d."""
    cov = np.atleast_2d(cov)
    d = cov.shape[0]
    trace = float(np.trace(cov))
    if not (np.isfinite(trace) and trace > 0):
        raise SingularCovError('covariance has non-positive trace {}'.format(trace))
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        pass
    try:
        return linalg.cholesky(cov + JITTER * trace / d * np.eye(d), lower=True)
    except linalg.LinAlgError:
        raise SingularCovError('covariance is singular even after jitter, eigenvalues {}'.format(
            np.linalg.eigvalsh(cov)))


def _whiten(chol, r):
    """L^{-1} r for r of shape (..., d)."""
    flat = r.reshape(-1, r.shape[-1]).T
    return linalg.solve_triangular(chol, flat, lower=True).T.reshape(r.shape)


def _precision_times(chol, r):
    flat = r.reshape(-1, r.shape[-1]).T
    return linalg.cho_solve((chol, True), flat).T.reshape(r.shape)


def gaussian_density_model(lin):
    d = lin.dim

    def moments(t, x, s):
        mc = mean_cov(lin, s, s + t, x)
        return mc.mean, cholesky(mc.cov), mc.cov

    def log_density(t, x, y, s=0.):
        mean, chol, _ = moments(t, x, s)
        r = np.broadcast_to(y, np.broadcast_shapes(np.shape(y), mean.shape)) - mean
        w = _whiten(chol, r)
        logdet = 2. * np.sum(np.log(np.diag(chol)))
        return -0.5 * np.sum(w ** 2, axis=-1) - 0.5 * (d * np.log(2 * np.pi) + logdet)

    def grad_log_x(t, x, y, s=0.):
        mean, chol, _ = moments(t, x, s)
        r = np.broadcast_to(y, np.broadcast_shapes(np.shape(y), mean.shape)) - mean
        return _precision_times(chol, r) @ transfer_matrix(lin, s, s + t)

    def transport(t, x, u, s=0.):
        mean, chol, _ = moments(t, x, s)
        return mean + u @ chol.T

    def locate(t, x, s=0.):
        mean, _, cov = moments(t, x, s)
        return mean.reshape(d), np.sqrt(np.diag(cov))

    standardize = None
    if d == 1:
        def standardize(t, x, y, s=0.):
            mean, _, cov = moments(t, x, s)
            return ((y - mean) / np.sqrt(cov[0, 0]))[..., 0]

    return DensityModel('linear_gaussian', lin.spec(), log_density, grad_log_x=grad_log_x,
                        homogeneous=lin.constant, standardize=standardize,
                        transport=transport, locate=locate,
                        params={'dim': d, 'horizon': lin.horizon, 'lin': lin})


@register('linear_gaussian')
def linear_gaussian(sigma=1., b=None, gamma=None, horizon=1., dim=None):
    return gaussian_density_model(LinearSDE(sigma=sigma, b=b, gamma=gamma, horizon=horizon, dim=dim))


def gaussian_bridge_drift(lin, s, x, z):
    """b(s) + gamma(s) x + a(s) (F(T)F^{-1}(s))^T Sigma^{-1}(s, T) (z - m(s, T, x)), T = horizon."""
    horizon = lin.horizon
    if not s < horizon:
        raise TimeError('bridge drift needs s < T*, got s={} T*={}'.format(s, horizon))
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    mc = mean_cov(lin, s, horizon, x)
    chol = cholesky(mc.cov)
    pull = _precision_times(chol, z - mc.mean) @ transfer_matrix(lin, s, horizon)
    return lin.drift(s, x) + pull @ lin.a(s).T


def uniform_ellipticity(lin, grid=None):
    """min over the grid of the smallest eigenvalue of a(t); returns (c, t_argmin)."""
    if grid is None:
        grid = np.linspace(0., lin.horizon, 101)
    eig = np.array([np.linalg.eigvalsh(lin.a(t))[0] for t in grid])
    k = int(np.argmin(eig))
    c, t_min = float(eig[k]), float(grid[k])
    utils.log('uniform ellipticity: c={:.6g} at t={:.6g}'.format(c, t_min), 'debug')
    return c, t_min

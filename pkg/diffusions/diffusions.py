# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.stats import norm

import utils
from utils.errors import DomainError, ParamError, TimeError

FD_REL_STEP = 1e-5

models = {}
def register(name):
    def decorator(fn):
        models[name] = fn
        return fn
    return decorator


def make(name, **kwargs):
    if name not in models:
        raise ParamError('unknown model {!r}, available: {}'.format(name, sorted(models)))
    return models[name](**kwargs)


builtin_model = make


def as_state(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        raise ParamError('state has dimension {}, expected {}'.format(x.shape[-1], dim))
    return x


@dataclass(frozen=True)
class DomainBox:
    """Product of half-lines [l_i, inf); l_i = -inf means the whole line."""
    lower: tuple

    @classmethod
    def whole(cls, dim):
        return cls(tuple([-np.inf] * dim))

    @classmethod
    def half_line(cls, lower=0.):
        return cls((float(lower),))

    @property
    def dim(self):
        return len(self.lower)

    @property
    def bounded_below(self):
        return bool(np.any(np.isfinite(self.lower)))

    def _lower(self):
        return np.asarray(self.lower, dtype=float)

    def contains(self, x):
        return np.all(np.asarray(x, dtype=float) >= self._lower(), axis=-1)

    def interior(self, x):
        lower = self._lower()
        x = np.asarray(x, dtype=float)
        return np.all((x > lower) | ~np.isfinite(lower), axis=-1)

    def project(self, x, eps=1e-12):
        """Move states that left the interior to l + eps*max(1, |l|).

        Returns the projected states and a per-state mask of projections.
        """
        lower = self._lower()
        x = np.array(x, dtype=float)
        finite = np.isfinite(lower)
        if not finite.any():
            return x, np.zeros(x.shape[:-1], dtype=bool)
        floor = np.where(finite, lower + eps * np.maximum(1., np.abs(np.where(finite, lower, 0.))), -np.inf)
        outside = x < floor
        x = np.where(outside, floor, x)
        return x, outside.any(axis=-1)


@dataclass(frozen=True)
class DiffusionSpec:
    """Coefficients (b, sigma) on the domain E.

    drift(t, x) and dispersion(t, x) take states of shape (..., d) and return
    (..., d) and (..., d, d) respectively.
    """
    dim: int
    drift: Callable
    dispersion: Callable
    domain: DomainBox = None
    homogeneous: bool = True

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ParamError('dimension must be positive, got {}'.format(self.dim))
        if self.domain is None:
            object.__setattr__(self, 'domain', DomainBox.whole(self.dim))
        if self.domain.dim != self.dim:
            raise ParamError('domain has dimension {}, spec has {}'.format(self.domain.dim, self.dim))

    def b(self, t, x):
        return np.asarray(self.drift(t, x), dtype=float)

    def sigma(self, t, x):
        return np.asarray(self.dispersion(t, x), dtype=float)

    def a(self, t, x):
        s = self.sigma(t, x)
        return s @ np.swapaxes(s, -1, -2)


def a_matrix(spec, t, x):
    x = as_state(x, spec.dim)
    if not np.all(spec.domain.contains(x)):
        raise DomainError('state {} outside domain with lower bounds {}'.format(x, spec.domain.lower))
    return spec.a(t, x)


@dataclass(frozen=True)
class ReferenceMeasure:
    kind: str = 'lebesgue'
    weight: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ('lebesgue', 'weighted'):
            raise ParamError('unknown reference measure {!r}'.format(self.kind))
        if self.kind == 'weighted' and self.weight is None:
            raise ParamError('a weighted reference measure needs a weight function')

    def lebesgue_density(self, y):
        """Density of m w.r.t. Lebesgue at y (shape (..., d) -> (...))."""
        y = np.asarray(y, dtype=float)
        if self.kind == 'lebesgue':
            return np.ones(y.shape[:-1])
        return np.asarray(self.weight(y), dtype=float)


LEBESGUE = ReferenceMeasure()


def log_normal_interval(u_lo, u_hi):
    """log(Phi(u_hi) - Phi(u_lo)) without cancellation in either tail."""
    u_lo, u_hi = np.broadcast_arrays(np.asarray(u_lo, dtype=float), np.asarray(u_hi, dtype=float))
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        a = norm.logsf(u_lo)
        b = norm.logsf(u_hi)
        right = a + np.log1p(-np.exp(b - a))
        c = norm.logcdf(u_hi)
        d = norm.logcdf(u_lo)
        left = c + np.log1p(-np.exp(d - c))
    out = np.where(u_lo > 0, right, left)
    return np.where(u_hi <= u_lo, -np.inf, out)


@dataclass(frozen=True)
class DensityModel:
    """Transition density p(t, x, y) w.r.t. the reference measure m.

    All callables take the elapsed time t, start states x of shape (..., d),
    end states y of shape (..., d), and the start time as keyword s (ignored
    by homogeneous models). Optional fields:

        grad_log_x   analytic grad_x log p
        cdf          1-D transition CDF
        standardize  1-D map y -> u with P(X_t <= y) = Phi(u)
        transport    map standard normal u (..., d) -> draw of p(t, x, .)
        sampler      sampler(t, x, rng, size, s) -> (size, d) exact draws
        locate       locate(t, x, s) -> (centre, scale) arrays of shape (d,)
    """
    name: str
    spec: DiffusionSpec
    log_density: Callable
    measure: ReferenceMeasure = LEBESGUE
    grad_log_x: Optional[Callable] = None
    homogeneous: bool = True
    cdf: Optional[Callable] = None
    standardize: Optional[Callable] = None
    transport: Optional[Callable] = None
    sampler: Optional[Callable] = None
    locate: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.spec.dim

    def log_p(self, t, x, y, s=0.):
        if not t > 0:
            raise TimeError('transition density needs t > 0, got {}'.format(t))
        with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
            return np.asarray(self.log_density(t, as_state(x, self.dim), as_state(y, self.dim), s=s), dtype=float)

    def density(self, t, x, y, s=0.):
        return np.exp(self.log_p(t, x, y, s=s))

    def grad_log(self, t, x, y, s=0.):
        x = as_state(x, self.dim)
        y = as_state(y, self.dim)
        if not t > 0:
            raise TimeError('transition density needs t > 0, got {}'.format(t))
        if self.grad_log_x is not None:
            return np.asarray(self.grad_log_x(t, x, y, s=s), dtype=float)
        return fd_gradient(lambda xx: self.log_p(t, xx, y, s=s), x)

    def cdf_value(self, t, x, y, s=0.):
        if self.dim != 1:
            raise ParamError('transition CDF is only defined for 1-D models')
        x = as_state(x, 1)
        if self.standardize is not None:
            return norm.cdf(self.standardize(t, x, y, s=s))
        if self.cdf is not None:
            return np.asarray(self.cdf(t, x, y, s=s), dtype=float)
        return np.vectorize(lambda xx, yy: self._quad_cdf(t, xx, yy, s))(x[..., 0], np.asarray(y, dtype=float))

    def _quad_cdf(self, t, x, y, s):
        lo = self.spec.domain.lower[0]
        return self.mass(t, [x], lo, y, s=s)

    def where(self, t, x, s=0.):
        x = as_state(x, self.dim)
        if self.locate is not None:
            centre, scale = self.locate(t, x, s=s)
            return np.asarray(centre, dtype=float).reshape(self.dim), np.asarray(scale, dtype=float).reshape(self.dim)
        a = self.spec.a(s, x)
        scale = np.sqrt(max(t, 1e-300) * np.maximum(np.diagonal(a), 1e-12))
        return x.reshape(self.dim), scale.reshape(self.dim)

    def mass(self, t, x, lo, hi, s=0.):
        """m-integral of p(t, x, .) over [lo, hi] (1-D)."""
        if self.dim != 1:
            raise ParamError('interval mass is only defined for 1-D models')
        x = as_state(x, 1)
        l = self.spec.domain.lower[0]
        lo = max(float(lo), l)
        hi = float(hi)
        if hi <= lo:
            return 0.
        centre, scale = self.where(t, x, s=s)

        def integrand(y):
            yy = np.array([y])
            return float(self.density(t, x, yy, s=s) * self.measure.lebesgue_density(yy))

        value, _ = utils.quadrature.quad_line(integrand, lo, hi, utils.quadrature.spread_breaks(centre[0], scale[0]))
        return value

    def log_interval_prob(self, t, x, lo, hi, s=0.):
        """log P(X_{s+t} in [lo, hi] | X_s = x) for a batch of 1-D starts x."""
        if self.dim != 1:
            raise ParamError('interval probabilities are only defined for 1-D models')
        x = as_state(x, 1)
        if self.standardize is not None:
            u_lo = self.standardize(t, x, lo, s=s)
            u_hi = self.standardize(t, x, hi, s=s)
            return log_normal_interval(u_lo, u_hi)
        if self.cdf is not None:
            with np.errstate(divide='ignore'):
                return np.log(np.clip(self.cdf(t, x, hi, s=s) - self.cdf(t, x, lo, s=s), 0., None))
        flat = x.reshape(-1, 1)
        with np.errstate(divide='ignore'):
            out = np.log([self.mass(t, xi, lo, hi, s=s) for xi in flat])
        return out.reshape(x.shape[:-1])

    def sample(self, t, x, rng, size, s=0.):
        """Exact draws of X_{s+t} given X_s = x, shape (size, d)."""
        x = as_state(x, self.dim).reshape(self.dim)
        if self.sampler is not None:
            return np.asarray(self.sampler(t, x, rng, size, s=s), dtype=float).reshape(size, self.dim)
        if self.transport is not None:
            u = rng.standard_normal((size, self.dim))
            return np.asarray(self.transport(t, x, u, s=s), dtype=float)
        raise ParamError('model {!r} has no exact sampler'.format(self.name))

    @property
    def can_sample(self):
        return self.sampler is not None or self.transport is not None


def fd_gradient(f, x, rel_step=FD_REL_STEP):
    """Central differences of a batched scalar function, h_i = rel_step * max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    grad = np.empty(np.broadcast_shapes(x.shape, np.shape(f(x)) + (x.shape[-1],)))
    for i in range(x.shape[-1]):
        h = rel_step * np.maximum(1., np.abs(x[..., i]))
        xp = x.copy()
        xm = x.copy()
        xp[..., i] += h
        xm[..., i] -= h
        grad[..., i] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * h)
    return grad


def eval_density(model, t, x, y, s=0.):
    _check_points(model, x, y)
    return float(model.density(t, x, y, s=s))


def eval_log_density(model, t, x, y, s=0.):
    _check_points(model, x, y)
    return float(model.log_p(t, x, y, s=s))


def eval_grad_log(model, t, x, y, s=0.):
    _check_points(model, x, y)
    return model.grad_log(t, x, y, s=s).reshape(model.dim)


def _check_points(model, x, y):
    for name, v in (('x', x), ('y', y)):
        v = as_state(v, model.dim)
        if not np.all(model.spec.domain.contains(v)):
            raise DomainError('{}={} outside domain with lower bounds {}'.format(name, v, model.spec.domain.lower))


def total_mass(model, t, x, s=0., width=12.):
    """Integral of p(t, x, .) against m: 1-D adaptive, 2-D tensor adaptive."""
    x = as_state(x, model.dim).reshape(model.dim)
    if model.dim == 1:
        return model.mass(t, x, -np.inf, np.inf, s=s)
    if model.dim == 2:
        centre, scale = model.where(t, x, s=s)
        lower = np.asarray(model.spec.domain.lower, dtype=float)
        ranges = [[max(centre[i] - width * scale[i], lower[i]), centre[i] + width * scale[i]] for i in range(2)]

        def integrand(y0, y1):
            yy = np.array([y0, y1])
            return float(model.density(t, x, yy, s=s) * model.measure.lebesgue_density(yy))

        value, _ = integrate.nquad(integrand, ranges, opts={'epsabs': 1e-11, 'epsrel': 1e-9})
        return value
    raise ParamError('total_mass supports d <= 2, got {}'.format(model.dim))

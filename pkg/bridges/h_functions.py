# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

"""Space-time harmonic functions h(t, y) used to condition a diffusion.

Every kind works in log space: log_h(t, y) and grad_log_h(t, y) take states
of shape (..., d). The bridge drift only ever needs grad log h, so h itself is
materialised (and checked against the floor) only on request.
"""

import numpy as np
from scipy.special import logsumexp

import utils
from utils.errors import DomainError, HFloorError, ParamError, TimeError
from diffusions.diffusions import as_state, fd_gradient

H_FLOOR = 1e-300
LOG_H_FLOOR = float(np.log(H_FLOOR))
N_NODES = 65536
MAX_BLOCK = 1 << 21


h_functions = {}
def register(name):
    def decorator(cls):
        h_functions[name] = cls
        return cls
    return decorator


def make_h(kind, **kwargs):
    if kind not in h_functions:
        raise ParamError('unknown conditioning {!r}, available: {}'.format(kind, sorted(h_functions)))
    return h_functions[kind](**kwargs)


class HFunction(object):
    kind = None

    def __init__(self, model, horizon, start):
        self.model = model
        self.horizon = float(horizon)
        s, x = start
        self.s = float(s)
        self.x = as_state(x, self.dim).reshape(self.dim) if model is not None else np.atleast_1d(
            np.asarray(x, dtype=float))
        if not self.s < self.horizon:
            raise TimeError('start time {} must precede the horizon {}'.format(self.s, self.horizon))
        if model is not None and not model.spec.domain.contains(self.x):
            raise DomainError('start {} outside the domain'.format(self.x))

    @property
    def dim(self):
        return self.model.dim

    def _remaining(self, t):
        if not t < self.horizon:
            raise TimeError('h is evaluated strictly before the horizon: t={} T*={}'.format(t, self.horizon))
        return self.horizon - t

    def log_h(self, t, y):
        raise NotImplementedError

    def grad_log_h(self, t, y):
        return fd_gradient(lambda yy: self.log_h(t, yy), as_state(y, self.dim))

    def window(self, t):
        """(centre, scale) of where h(t, .) lives, or None when h is spread out."""
        return None

    # terminal law X_{T*} ~ h(T*, y) P_{s,T*}(x, dy) / h(s, x); None when it is a point mass
    terminal_support = None

    def log_terminal_weight(self, y):
        raise ParamError('{} conditioning has no terminal density'.format(self.kind))

    def _check_start(self):
        lh = float(np.asarray(self.log_h(self.s, self.x)).reshape(-1)[0])
        if not lh > LOG_H_FLOOR:
            raise ParamError('{} conditioning: h(s, x) = exp({}) is not positive at the start'.format(
                self.kind, lh))
        return lh


@register('strong')
class StrongH(HFunction):
    """h(t, y) = p(T* - t, y, z)."""
    kind = 'strong'

    def __init__(self, model, horizon, z, start=(0., None)):
        if not np.isfinite(float(horizon)):
            raise ParamError('strong conditioning needs a finite horizon')
        super().__init__(model, horizon, start)
        self.z = as_state(z, self.dim).reshape(self.dim)
        if not model.spec.domain.contains(self.z):
            raise DomainError('target {} outside the domain'.format(self.z))
        self._check_start()

    def log_h(self, t, y):
        return self.model.log_p(self._remaining(t), y, self.z, s=t)

    def grad_log_h(self, t, y):
        return self.model.grad_log(self._remaining(t), y, self.z, s=t)

    def window(self, t):
        return self.model.where(self._remaining(t), self.z, s=t)


@register('weak')
class WeakH(HFunction):
    """h(t, y) = int H(zeta) p(T* - t, y, zeta) m(dzeta), H given by log_H.

    Compact 1-D support uses adaptive quadrature. Otherwise the integral is
    an average over frozen antithetic standard-normal nodes pushed through the
    model's transport map, so h is deterministic and smooth in y. The gradient
    differentiates that same average in y, and `standard_error` reports the
    Monte Carlo error of it relative to h (`start_se` at (s, x)).
    """
    kind = 'weak'

    def __init__(self, model, horizon, log_H=None, H=None, start=(0., None), support=None,
                 n_nodes=N_NODES, seed=0, normalize=False):
        if not np.isfinite(float(horizon)):
            raise ParamError('weak conditioning through a density model needs a finite horizon')
        super().__init__(model, horizon, start)
        if log_H is None:
            if H is None:
                raise ParamError('weak conditioning needs H or log_H')

            def log_H(y):
                with np.errstate(divide='ignore'):
                    return np.log(np.asarray(H(y), dtype=float))
        self._log_H = log_H
        self.log_norm = 0.
        self.support = None
        if support is not None:
            lo, hi = float(support[0]), float(support[1])
            if self.dim != 1 or not lo < hi:
                raise ParamError('a compact support is a 1-D interval lo < hi, got {}'.format(support))
            self.support = (max(lo, model.spec.domain.lower[0]), hi)
        self.use_nodes = self.support is None and model.transport is not None
        if self.support is None and not self.use_nodes and self.dim != 1:
            raise ParamError('weak conditioning in d > 1 needs a model with a transport map')
        self.nodes = None
        self.start_se = 0.
        if self.use_nodes:
            if int(n_nodes) < 4:
                raise ParamError('weak conditioning needs at least 4 nodes, got {}'.format(n_nodes))
            half = utils.streams.stream(seed, 0).standard_normal((max(int(n_nodes) // 2, 1), self.dim))
            self.nodes = np.concatenate([half, -half])
        lh = self._check_start()
        if self.use_nodes:
            self.start_se = float(np.ravel(self.standard_error(self.s, self.x))[0])
            utils.log('weak conditioning: {} nodes, relative standard error {:.3g} at the start'.format(
                len(self.nodes), self.start_se), 'debug')
        if normalize:
            self.log_norm = lh
        elif abs(lh) > 1e-6:
            utils.log('weak conditioning: E[H] under the unconditioned law is {:.6g}, not 1'.format(np.exp(lh)),
                      'warning')

    def log_H(self, y):
        return np.asarray(self._log_H(np.asarray(y, dtype=float)), dtype=float) - self.log_norm

    @property
    def terminal_support(self):
        return self.support

    def log_terminal_weight(self, y):
        return self.log_H(y)

    def _blocks(self, y):
        flat = as_state(y, self.dim).reshape(-1, self.dim)
        step = max(1, MAX_BLOCK // len(self.nodes))
        for i in range(0, len(flat), step):
            yield flat[i:i + step]

    def _node_terms(self, tau, t, yb):
        zeta = self.model.transport(tau, yb[:, None, :], self.nodes[None, :, :], s=t)
        return zeta, self.log_H(zeta)

    def log_h(self, t, y):
        tau = self._remaining(t)
        y = as_state(y, self.dim)
        if self.use_nodes:
            out = [logsumexp(self._node_terms(tau, t, yb)[1], axis=-1) - np.log(len(self.nodes))
                   for yb in self._blocks(y)]
            return np.concatenate(out).reshape(y.shape[:-1])
        flat = y.reshape(-1, 1)
        with np.errstate(divide='ignore'):
            out = np.log([self._quad(tau, t, yi, grad=False) for yi in flat])
        return out.reshape(y.shape[:-1])

    def standard_error(self, t, y):
        """Standard error of the node average over h, from antithetic pair means; 0 under quadrature."""
        tau = self._remaining(t)
        y = as_state(y, self.dim)
        if not self.use_nodes:
            return np.zeros(y.shape[:-1])
        half = len(self.nodes) // 2
        out = []
        for yb in self._blocks(y):
            lw = self._node_terms(tau, t, yb)[1]
            w = np.exp(lw - lw.max(axis=-1, keepdims=True))
            pairs = 0.5 * (w[:, :half] + w[:, half:])
            out.append(pairs.std(axis=-1, ddof=1) / np.sqrt(half) / pairs.mean(axis=-1))
        return np.concatenate(out).reshape(y.shape[:-1])

    def grad_log_h(self, t, y):
        tau = self._remaining(t)
        y = as_state(y, self.dim)
        if self.use_nodes:
            return fd_gradient(lambda yy: self.log_h(t, yy), y)
        flat = y.reshape(-1, 1)
        out = [self._quad(tau, t, yi, grad=True) / self._quad(tau, t, yi, grad=False) for yi in flat]
        return np.asarray(out, dtype=float).reshape(y.shape)

    def _quad(self, tau, t, yi, grad):
        model = self.model
        lo, hi = self.support if self.support is not None else (model.spec.domain.lower[0], np.inf)
        centre, scale = model.where(tau, yi, s=t)

        def integrand(zeta):
            zz = np.array([zeta])
            log_f = float(self.log_H(zz)) + float(model.log_p(tau, yi, zz, s=t))
            f = np.exp(log_f) * float(model.measure.lebesgue_density(zz))
            if grad:
                f *= float(model.grad_log(tau, yi, zz, s=t)[0])
            return f

        value, _ = utils.quadrature.quad_line(integrand, lo, hi, utils.quadrature.spread_breaks(centre[0], scale[0]))
        return value


def weak_family(family, model, horizon, start, lam=None, support=None, n_nodes=N_NODES, seed=0):
    """Named terminal reweightings usable from scenario files."""
    if family == 'constant':
        return WeakH(model, horizon, log_H=lambda y: np.zeros(np.shape(y)[:-1]), start=start,
                     support=support, n_nodes=n_nodes, seed=seed)
    if family == 'exponential_tilt':
        if lam is None:
            raise ParamError('exponential_tilt needs lam')
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (model.dim,)).copy()
        return WeakH(model, horizon, log_H=lambda y: np.asarray(y, dtype=float) @ lam, start=start,
                     support=support, n_nodes=n_nodes, seed=seed, normalize=True)
    raise ParamError('unknown weak family {!r}'.format(family))


@register('indicator')
class IndicatorH(HFunction):
    """h(t, y) = P(X_{T*} in [lo, hi] | X_t = y) for 1-D models."""
    kind = 'indicator'

    def __init__(self, model, horizon, region, start=(0., None)):
        if model.dim != 1:
            raise ParamError('indicator conditioning is implemented for 1-D models')
        super().__init__(model, horizon, start)
        lo, hi = float(region[0]), float(region[1])
        if not lo < hi:
            raise ParamError('indicator region needs lo < hi, got {}'.format(region))
        self.region = (lo, hi)
        self._check_start()

    @property
    def terminal_support(self):
        return self.region

    def log_terminal_weight(self, y):
        y = np.asarray(y, dtype=float)[..., 0]
        inside = (y >= self.region[0]) & (y <= self.region[1])
        return np.where(inside, 0., -np.inf)

    def log_h(self, t, y):
        lo, hi = self.region
        return self.model.log_interval_prob(self._remaining(t), y, lo, hi, s=t)


@register('explicit')
class ExplicitH(HFunction):
    """User supplied h; the horizon may be infinite."""
    kind = 'explicit'

    def __init__(self, h, grad_h=None, horizon=np.inf, model=None, start=(0., None), dim=None):
        self._h = h
        self._grad_h = grad_h
        self._dim = dim if dim is not None else (model.dim if model is not None else
                                                 np.atleast_1d(start[1]).shape[-1])
        super().__init__(model, horizon, start)
        self._check_start()

    @property
    def dim(self):
        return self._dim

    def _remaining(self, t):
        if np.isfinite(self.horizon):
            return super()._remaining(t)
        return np.inf

    def log_h(self, t, y):
        self._remaining(t)
        with np.errstate(divide='ignore'):
            return np.log(np.asarray(self._h(t, as_state(y, self.dim)), dtype=float))

    def grad_log_h(self, t, y):
        if self._grad_h is None:
            return super().grad_log_h(t, y)
        y = as_state(y, self.dim)
        return np.asarray(self._grad_h(t, y), dtype=float) / np.asarray(self._h(t, y), dtype=float)[..., None]


def h_eval(h, t, y):
    lh = np.asarray(h.log_h(t, y), dtype=float)
    if np.any(~(lh > LOG_H_FLOOR)):
        raise HFloorError('h({}, {}) below the floor {}'.format(t, y, H_FLOOR), t=t, y=y,
                          log_h=float(np.min(lh)))
    out = np.exp(lh)
    return float(out) if out.ndim == 0 else out


def grad_h(h, t, y):
    value = np.asarray(h_eval(h, t, y))
    return value[..., None] * h.grad_log_h(t, y)

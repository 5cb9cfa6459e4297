# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

from dataclasses import dataclass

import numpy as np
from scipy import integrate

import utils
from utils.errors import DomainError, HFloorError, NumericsError, ParamError, TimeError
from diffusions.diffusions import as_state
from .h_functions import LOG_H_FLOOR


@dataclass(frozen=True)
class BridgeProcess:
    """Diffusion `spec` conditioned through `h`, started at (s, x)."""
    spec: object
    h: object
    s: float
    x: np.ndarray
    horizon: float

    @classmethod
    def from_h(cls, h, spec=None):
        spec = spec if spec is not None else h.model.spec
        return cls(spec, h, h.s, h.x, h.horizon)

    def __post_init__(self):
        object.__setattr__(self, 'x', as_state(self.x, self.spec.dim).reshape(self.spec.dim))
        if not self.s < self.horizon:
            raise TimeError('start time {} must precede T*={}'.format(self.s, self.horizon))
        if not self.spec.domain.contains(self.x):
            raise DomainError('start {} outside the domain'.format(self.x))

    @property
    def dim(self):
        return self.spec.dim

    @property
    def target(self):
        return getattr(self.h, 'z', None)

    def drift_batch(self, t, y):
        """(b + a grad log h, floor mask) for states (n, d); floored rows get drift b."""
        y = np.asarray(y, dtype=float)
        b = self.spec.b(t, y)
        with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
            lh = np.asarray(self.h.log_h(t, y), dtype=float)
            g = self.h.grad_log_h(t, y)
        floored = ~(lh > LOG_H_FLOOR)
        if floored.any():
            g = np.where(floored[..., None], 0., g)
        a = self.spec.a(t, y)
        return b + np.einsum('...ij,...j->...i', a, g), floored


def bridge_drift(bp, t, y):
    if not t < bp.horizon:
        raise TimeError('bridge drift needs t < T*, got t={} T*={}'.format(t, bp.horizon))
    y = as_state(y, bp.dim)
    if not np.all(bp.spec.domain.interior(y)):
        raise DomainError('bridge drift needs y in the interior, got {}'.format(y))
    lh = np.asarray(bp.h.log_h(t, y), dtype=float)
    if np.any(~(lh > LOG_H_FLOOR)):
        raise HFloorError('h({}, {}) below the floor'.format(t, y), t=t, y=y, log_h=float(np.min(lh)))
    g = bp.h.grad_log_h(t, y)
    out = bp.spec.b(t, y) + np.einsum('...ij,...j->...i', bp.spec.a(t, y), g)
    if not np.all(np.isfinite(out)):
        raise NumericsError('non-finite bridge drift', {'t': t, 'y': y, 'log_h': lh, 'grad_log_h': g})
    return out


def h_transform_transition(h, s, t, x, region=None, width=12.):
    """P^h_{s,t}(x, E) = int_E h(t, y) p(t - s, x, y) m(dy) / h(s, x).

    region: (lo, hi) in 1-D, a list of per-coordinate (lo, hi) otherwise;
    None means the whole domain.
    """
    model = h.model
    if not (h.s <= s < t < h.horizon):
        raise TimeError('need s0 <= s < t < T*, got s={} t={}'.format(s, t))
    x = as_state(x, model.dim).reshape(model.dim)
    log_h0 = float(np.asarray(h.log_h(s, x)).reshape(-1)[0])
    if not log_h0 > LOG_H_FLOOR:
        raise HFloorError('h(s, x) below the floor', t=s, y=x, log_h=log_h0)
    lower = np.asarray(model.spec.domain.lower, dtype=float)
    if region is None:
        region = [(lower[i], np.inf) for i in range(model.dim)]
    elif model.dim == 1 and np.ndim(region[0]) == 0:
        region = [tuple(region)]
    if len(region) != model.dim:
        raise ParamError('region needs {} intervals, got {}'.format(model.dim, len(region)))
    region = [(max(float(lo), lower[i]), float(hi)) for i, (lo, hi) in enumerate(region)]

    def log_integrand(y):
        return (np.asarray(h.log_h(t, y), dtype=float) + model.log_p(t - s, x, y, s=s)
                + np.log(model.measure.lebesgue_density(y)) - log_h0)

    centre, scale = model.where(t - s, x, s=s)
    hint = h.window(t)
    if model.dim == 1:
        breaks = utils.quadrature.spread_breaks(centre[0], scale[0])
        if hint is not None:
            breaks += utils.quadrature.spread_breaks(hint[0][0], hint[1][0])

        def f(y):
            return float(np.exp(log_integrand(np.array([y]))))

        lo, hi = region[0]
        value, _ = utils.quadrature.quad_line(f, lo, hi, breaks)
        return value

    ranges = []
    for i, (lo, hi) in enumerate(region):
        lo_i = max(lo, centre[i] - width * scale[i])
        hi_i = min(hi, centre[i] + width * scale[i])
        if hi_i <= lo_i:
            return 0.
        ranges.append([lo_i, hi_i])

    def g(*y):
        return float(np.exp(log_integrand(np.asarray(y))))

    value, _ = integrate.nquad(g, ranges, opts={'epsabs': utils.quadrature.EPSABS,
                                                 'epsrel': utils.quadrature.EPSREL})
    return value

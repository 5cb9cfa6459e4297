import numpy as np
from scipy import special
from scipy.stats import chi2, ncx2

from utils.errors import ParamError
from .diffusions import register, DensityModel, DiffusionSpec, DomainBox, ReferenceMeasure


def bessel_log_density(delta, t, x, y):
    """Lebesgue log-density of the squared-root of a BESQ(delta) law, x, y scalars or arrays."""
    nu = 0.5 * delta - 1.
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pos_y = y > 0
    ys = np.where(pos_y, y, 1.)
    xs = np.where(x > 0, x, 1.)
    z = xs * ys / t
    interior = (np.log(ys) - np.log(t) + nu * (np.log(ys) - np.log(xs))
                - (xs - ys) ** 2 / (2 * t) + np.log(special.ive(nu, z)))
    # x = 0: y^{2nu+1} t^{-(nu+1)} 2^{-nu} exp(-y^2/2t) / Gamma(nu+1)
    origin = ((2 * nu + 1) * np.log(ys) - (nu + 1) * np.log(t) - nu * np.log(2.)
              - ys ** 2 / (2 * t) - special.gammaln(nu + 1))
    out = np.where(x > 0, interior, origin)
    return np.where(pos_y, out, -np.inf)


@register('bessel')
def bessel(delta=3., measure='lebesgue'):
    """Bessel process of dimension delta on [0, inf).

    measure='speed' expresses the density against m(dy) = 2 y^{delta-1} dy,
    in which case p(t, x, y) = p(t, y, x).
    """
    delta = float(delta)
    if not delta > 0:
        raise ParamError('bessel: dimension delta must be positive, got {}'.format(delta))
    if measure not in ('lebesgue', 'speed'):
        raise ParamError('bessel: measure must be lebesgue or speed, got {!r}'.format(measure))
    nu = 0.5 * delta - 1.

    def b(t, x):
        return (delta - 1.) / (2. * np.asarray(x, dtype=float))

    def disp(t, x):
        return np.ones(np.shape(x)[:-1] + (1, 1))

    def speed_weight(y):
        y = np.asarray(y, dtype=float)[..., 0]
        return 2. * y ** (delta - 1.)

    def log_density(t, x, y, s=0.):
        lp = bessel_log_density(delta, t, x[..., 0], y[..., 0])
        if measure == 'speed':
            ys = np.where(y[..., 0] > 0, y[..., 0], 1.)
            lp = lp - np.log(2.) - (delta - 1.) * np.log(ys)
        return lp

    def grad_log_x(t, x, y, s=0.):
        x, y = np.broadcast_arrays(x, y)
        z = x * y / t
        zs = np.where(z > 0, z, 1.)
        ratio = np.where(z > 0, special.ive(nu + 1, zs) / special.ive(nu, zs), 0.)
        return -x / t + (y / t) * ratio

    def cdf(t, x, y, s=0.):
        x = np.asarray(x, dtype=float)[..., 0]
        y = np.asarray(y, dtype=float)
        q = np.where(y > 0, y, 0.) ** 2 / t
        nc = x ** 2 / t
        central = chi2.cdf(q, delta)
        shifted = ncx2.cdf(q, delta, np.where(nc > 0, nc, 1.))
        return np.where(nc > 0, shifted, central)

    def sampler(t, x, rng, size, s=0.):
        x0 = float(np.asarray(x).reshape(-1)[0])
        if x0 > 0:
            draws = rng.noncentral_chisquare(delta, x0 ** 2 / t, size)
        else:
            draws = rng.chisquare(delta, size)
        return np.sqrt(t * draws).reshape(size, 1)

    def locate(t, x, s=0.):
        return np.sqrt(x ** 2 + delta * t), np.full(1, np.sqrt(t))

    ref = ReferenceMeasure('weighted', speed_weight) if measure == 'speed' else ReferenceMeasure()
    spec = DiffusionSpec(1, b, disp, DomainBox.half_line(0.))
    return DensityModel('bessel', spec, log_density, measure=ref, grad_log_x=grad_log_x,
                        cdf=cdf, sampler=sampler, locate=locate,
                        params={'delta': delta, 'measure': measure})

import numpy as np

from utils.errors import ParamError
from .diffusions import register, DensityModel, DiffusionSpec, DomainBox


@register('geometric_bm')
def geometric_bm(mu=0., sigma=1.):
    """dX = mu X dt + sigma X dB on [0, inf); lognormal transition law."""
    mu, sigma = float(mu), float(sigma)
    if not np.isfinite(mu):
        raise ParamError('geometric_bm: mu must be finite')
    if not sigma > 0:
        raise ParamError('geometric_bm: volatility must be positive, got {}'.format(sigma))
    nu = mu - 0.5 * sigma ** 2

    def b(t, x):
        return mu * np.asarray(x, dtype=float)

    def disp(t, x):
        return sigma * np.asarray(x, dtype=float)[..., None]

    def _log_ratio(t, x, y):
        y = np.asarray(y, dtype=float)
        safe = np.where(y > 0, y, 1.)
        r = np.log(safe) - np.log(x) - nu * t
        return np.where(y > 0, r, -np.inf)

    def log_density(t, x, y, s=0.):
        var = sigma ** 2 * t
        r = _log_ratio(t, x, y)[..., 0]
        ly = np.log(np.where(y[..., 0] > 0, y[..., 0], 1.))
        out = -ly - 0.5 * np.log(2 * np.pi * var) - 0.5 * r ** 2 / var
        return np.where(y[..., 0] > 0, out, -np.inf)

    def grad_log_x(t, x, y, s=0.):
        r = _log_ratio(t, x, y)
        return np.where(np.isfinite(r), r / (sigma ** 2 * t * x), 0.)

    def standardize(t, x, y, s=0.):
        return (_log_ratio(t, x, np.broadcast_to(y, np.shape(x))) / (sigma * np.sqrt(t)))[..., 0]

    def transport(t, x, u, s=0.):
        return x * np.exp(nu * t + sigma * np.sqrt(t) * u)

    def locate(t, x, s=0.):
        centre = x * np.exp(nu * t)
        return centre, centre * max(sigma * np.sqrt(t), 1e-8)

    spec = DiffusionSpec(1, b, disp, DomainBox.half_line(0.))
    return DensityModel('geometric_bm', spec, log_density, grad_log_x=grad_log_x,
                        standardize=standardize, transport=transport, locate=locate,
                        params={'mu': mu, 'sigma': sigma})

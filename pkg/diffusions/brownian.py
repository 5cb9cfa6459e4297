import numpy as np

from utils.errors import ParamError
from .diffusions import register, DensityModel, DiffusionSpec, DomainBox


@register('brownian')
def brownian(dim=1, drift=0., sigma=1.):
    """Brownian motion with constant drift and isotropic volatility sigma."""
    dim = int(dim)
    if dim < 1:
        raise ParamError('brownian: dim must be >= 1, got {}'.format(dim))
    sigma = float(sigma)
    if not sigma > 0:
        raise ParamError('brownian: sigma must be positive, got {}'.format(sigma))
    mu = np.broadcast_to(np.asarray(drift, dtype=float), (dim,)).copy()
    if not np.all(np.isfinite(mu)):
        raise ParamError('brownian: drift must be finite')

    def b(t, x):
        return np.broadcast_to(mu, np.shape(x)).copy()

    def disp(t, x):
        return np.broadcast_to(sigma * np.eye(dim), np.shape(x)[:-1] + (dim, dim)).copy()

    def log_density(t, x, y, s=0.):
        var = sigma ** 2 * t
        r = y - x - mu * t
        return -0.5 * np.sum(r ** 2, axis=-1) / var - 0.5 * dim * np.log(2 * np.pi * var)

    def grad_log_x(t, x, y, s=0.):
        return (y - x - mu * t) / (sigma ** 2 * t)

    def transport(t, x, u, s=0.):
        return x + mu * t + sigma * np.sqrt(t) * u

    def locate(t, x, s=0.):
        return x + mu * t, np.full(dim, sigma * np.sqrt(t))

    standardize = None
    if dim == 1:
        def standardize(t, x, y, s=0.):
            return ((y - x - mu * t) / (sigma * np.sqrt(t)))[..., 0]

    spec = DiffusionSpec(dim, b, disp, DomainBox.whole(dim))
    return DensityModel('brownian', spec, log_density, grad_log_x=grad_log_x,
                        standardize=standardize, transport=transport, locate=locate,
                        params={'dim': dim, 'drift': mu.tolist(), 'sigma': sigma})

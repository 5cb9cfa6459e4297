import numpy as np

from utils.errors import ParamError
from .diffusions import register, DensityModel, DiffusionSpec, DomainBox


def ou_variance(theta, sigma, t):
    if theta == 0:
        return sigma ** 2 * t
    return -sigma ** 2 * np.expm1(-2 * theta * t) / (2 * theta)


@register('ou')
def ou(theta=1., mu=0., sigma=1.):
    """dX = theta (mu - X) dt + sigma dB on the line; theta may be any real."""
    theta, mu, sigma = float(theta), float(mu), float(sigma)
    if not np.isfinite(theta) or not np.isfinite(mu):
        raise ParamError('ou: theta and mu must be finite reals')
    if not sigma > 0:
        raise ParamError('ou: sigma must be positive, got {}'.format(sigma))

    def b(t, x):
        return theta * (mu - np.asarray(x, dtype=float))

    def disp(t, x):
        return np.full(np.shape(x)[:-1] + (1, 1), sigma)

    def mean(t, x):
        return mu + (x - mu) * np.exp(-theta * t)

    def log_density(t, x, y, s=0.):
        var = ou_variance(theta, sigma, t)
        r = (y - mean(t, x))[..., 0]
        return -0.5 * r ** 2 / var - 0.5 * np.log(2 * np.pi * var)

    def grad_log_x(t, x, y, s=0.):
        return np.exp(-theta * t) * (y - mean(t, x)) / ou_variance(theta, sigma, t)

    def standardize(t, x, y, s=0.):
        return ((y - mean(t, x)) / np.sqrt(ou_variance(theta, sigma, t)))[..., 0]

    def transport(t, x, u, s=0.):
        return mean(t, x) + np.sqrt(ou_variance(theta, sigma, t)) * u

    def locate(t, x, s=0.):
        return mean(t, x), np.full(1, np.sqrt(ou_variance(theta, sigma, t)))

    spec = DiffusionSpec(1, b, disp, DomainBox.whole(1))
    return DensityModel('ou', spec, log_density, grad_log_x=grad_log_x,
                        standardize=standardize, transport=transport, locate=locate,
                        params={'theta': theta, 'mu': mu, 'sigma': sigma})

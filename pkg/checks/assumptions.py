# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

"""Numeric checks on transition densities and their potentials.

Each check evaluates an analytic property of a density model by quadrature
or grid search and returns a VerificationReport with the evidence.
"""

import numpy as np
from scipy import integrate

import utils
from utils.errors import ParamError, TimeError
from utils.quadrature import EPSREL, quad_line, quad_pieces, spread_breaks
from diffusions.diffusions import as_state
from .checks import VerificationReport, register

CK_TOL = 1e-6
POTENTIAL_EPSREL = 1e-9
STABLE_RTOL = 1e-2
TINY = 1e-300


def _log_m(model, y):
    with np.errstate(divide='ignore'):
        return np.log(model.measure.lebesgue_density(y))


def _integrate(model, log_f, centres, bounds=None, epsrel=EPSREL, epsabs=TINY, width=12.):
    """Integral of exp(log_f(y)) dy over the domain (1-D or 2-D); centres are (centre, scale) hints."""
    lower = np.asarray(model.spec.domain.lower, dtype=float)
    if model.dim == 1:
        breaks = []
        for c, sc in centres:
            breaks += spread_breaks(c[0], sc[0])

        def f(u):
            return float(np.exp(log_f(np.array([u]))))

        lo, hi = bounds if bounds is not None else (lower[0], np.inf)
        lo = max(lo, lower[0])
        if hi <= lo:
            return 0.
        value, _ = quad_line(f, lo, hi, breaks, epsabs=epsabs, epsrel=epsrel)
        return value
    if model.dim == 2:
        ranges = []
        for i in range(2):
            lo = min(c[i] - width * sc[i] for c, sc in centres)
            hi = max(c[i] + width * sc[i] for c, sc in centres)
            ranges.append([max(lo, lower[i]), hi])

        def g(u0, u1):
            return float(np.exp(log_f(np.array([u0, u1]))))

        value, _ = integrate.nquad(g, ranges, opts={'epsabs': 1e-13, 'epsrel': epsrel})
        return value
    raise ParamError('quadrature checks support d <= 2, got {}'.format(model.dim))


def _point_log_p(model, t, x, y, s=0.):
    return float(np.asarray(model.log_p(t, x, y, s=s)).reshape(-1)[0])


@register('chapman_kolmogorov')
def chapman_kolmogorov_check(model, s, t, x, y, t0=0., tol=CK_TOL):
    """|p(t,x,y) - int p(t-s,x,u) p(s,u,y) m(du)|; the integral is recomputed at half the tolerance."""
    if not 0 < s < t:
        raise TimeError('Chapman-Kolmogorov split needs 0 < s < t, got s={} t={}'.format(s, t))
    x = as_state(x, model.dim).reshape(model.dim)
    y = as_state(y, model.dim).reshape(model.dim)
    first = t - s

    def log_f(u):
        return (_point_log_p(model, first, x, u, s=t0) + _point_log_p(model, s, u, y, s=t0 + first)
                + float(_log_m(model, u.reshape(1, -1))[0]))

    centres = [model.where(first, x, s=t0), model.where(s, y, s=t0 + first)]
    direct = float(np.exp(_point_log_p(model, t, x, y, s=t0)))
    values, rel = [], []
    for epsrel in (EPSREL, EPSREL / 2.):
        v = _integrate(model, log_f, centres, epsrel=epsrel)
        values.append(v)
        rel.append(abs(direct - v) / max(direct, TINY))
    passes = [r < tol for r in rel]
    report = VerificationReport(
        'chapman_kolmogorov',
        inputs={'model': model.name, 's': s, 't': t, 'x': x, 'y': y, 't0': t0},
        statistics={'p': direct, 'convolution': values[0], 'residual': abs(direct - values[0]),
                    'relative_residual': rel[0], 'relative_residual_refined': rel[1]},
        thresholds={'relative_residual': tol},
        passed=all(passes))
    if passes[0] != passes[1]:
        report.notes.append('verdict flips under quadrature refinement')
    return report


def _powers_of_two(u, kmin=4, kmax=10):
    return [2. ** -k for k in range(kmin, kmax + 1) if 2. ** -k < u]


@register('dual_limit')
def dual_limit_check(model, x, z, r, u, t_sequence=None, ratio=1e-4):
    """int over |y - z| >= r of p(t,y,z) p(u-t,x,y) m(dy) along t -> 0 (1-D)."""
    if model.dim != 1:
        raise ParamError('dual_limit_check is 1-D only')
    if not (u > 0 and r > 0):
        raise ParamError('dual_limit_check needs u > 0 and r > 0')
    x = as_state(x, 1).reshape(1)
    z = as_state(z, 1).reshape(1)
    ts = sorted(_powers_of_two(u) if t_sequence is None else [float(t) for t in t_sequence], reverse=True)
    if len(ts) < 3:
        raise ParamError('dual_limit_check needs at least three times below u')
    values = []
    for t in ts:
        def log_f(y, t=t):
            return (_point_log_p(model, t, y, z) + _point_log_p(model, u - t, x, y)
                    + float(_log_m(model, y.reshape(1, -1))[0]))

        centres = [model.where(u - t, x), (z, np.array([r]))]
        left = _integrate(model, log_f, centres, bounds=(-np.inf, z[0] - r), epsrel=1e-8)
        right = _integrate(model, log_f, centres, bounds=(z[0] + r, np.inf), epsrel=1e-8)
        values.append(left + right)
    p_uxz = float(np.exp(_point_log_p(model, u, x, z)))
    tail = values[-3:]
    decreasing = tail[0] >= tail[1] >= tail[2]
    small = values[-1] < ratio * p_uxz
    return VerificationReport(
        'dual_limit',
        inputs={'model': model.name, 'x': x, 'z': z, 'r': r, 'u': u},
        statistics={'t': ts, 'values': values, 'final': values[-1], 'p_uxz': p_uxz,
                    'tail_non_increasing': decreasing},
        thresholds={'final_over_p': ratio},
        passed=bool(decreasing and small))


def _sup_grid(model, z, r, horizon, n_t, t_floor, n_x, radius):
    d = model.dim
    lower = np.asarray(model.spec.domain.lower, dtype=float)
    ts = horizon * np.geomspace(t_floor, 1., n_t)
    if d == 1:
        left = np.linspace(z[0] - radius, z[0] - r, n_x)
        right = np.linspace(z[0] + r, z[0] + radius, n_x)
        xs = np.concatenate([left, right])[:, None]
    elif d == 2:
        axes = [np.linspace(z[i] - radius, z[i] + radius, n_x // 4 * 2 + 1) for i in range(2)]
        xs = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, 2)
        xs = xs[np.linalg.norm(xs - z, axis=-1) >= r]
    else:
        raise ParamError('density_sup_check supports d <= 2, got {}'.format(d))
    xs = xs[np.all(xs > lower, axis=-1)]
    return ts, xs


def _log_p_table(model, ts, xs, z):
    zz = np.broadcast_to(z, xs.shape)
    return np.array([model.log_p(t, xs, zz) for t in ts])


@register('density_sup')
def density_sup_check(model, z, r, horizon, n_t=80, n_x=200, t_floor=1e-4, radius=None,
                      bound_k=None, bound_c=1.):
    """sup of p(t, x, z) over (0, horizon] x {|x - z| >= r}, searched on a grid and once refined.

    bound_k additionally tests p <= bound_c t^(-d/2) exp(-bound_k |x - z|^2 / t)
    on the refined grid.
    """
    if not r > 0:
        raise ParamError('density_sup_check needs r > 0')
    z = as_state(z, model.dim).reshape(model.dim)
    if radius is None:
        radius = r + 10. * float(np.max(model.where(horizon, z)[1]))
    sups, args = [], []
    for level in range(2):
        ts, xs = _sup_grid(model, z, r, horizon, n_t * 2 ** level, t_floor / 10. ** level,
                           n_x * 2 ** level, radius)
        lp = _log_p_table(model, ts, xs, z)
        lp = np.where(np.isnan(lp), -np.inf, lp)
        i, j = np.unravel_index(np.argmax(lp), lp.shape)
        sups.append(float(np.exp(lp[i, j])))
        args.append({'t': float(ts[i]), 'x': xs[j]})
    finite = all(np.isfinite(sups))
    stable = finite and abs(sups[1] - sups[0]) <= STABLE_RTOL * max(sups[0], TINY)
    statistics = {'sup': sups[1], 'sup_coarse': sups[0], 'argmax': args[1], 'finite': finite, 'stable': stable}
    thresholds = {'stable_rtol': STABLE_RTOL}
    passed = stable
    if bound_k is not None:
        d = model.dim
        dist2 = np.sum((xs - z) ** 2, axis=-1)
        log_bound = np.log(bound_c) - 0.5 * d * np.log(ts)[:, None] - bound_k * dist2[None, :] / ts[:, None]
        ratio = float(np.exp(np.max(lp - log_bound)))
        statistics['bound_ratio'] = ratio
        thresholds.update({'bound_k': bound_k, 'bound_c': bound_c, 'bound_ratio': 1.})
        passed = passed and ratio <= 1.
    return VerificationReport(
        'density_sup',
        inputs={'model': model.name, 'z': z, 'r': r, 'horizon': horizon, 'radius': radius},
        statistics=statistics, thresholds=thresholds, passed=bool(passed),
        sample_sizes={'grid': [len(ts), len(xs)]})


def potential_density(model, alpha, x, y):
    """u^alpha(x, y) = int_0^inf exp(-alpha t) p(t, x, y) dt.

    Returns inf when x == y in d >= 2, where the integral diverges at t = 0.
    """
    if not alpha > 0:
        raise ParamError('potential density needs alpha > 0, got {}'.format(alpha))
    if not model.homogeneous:
        raise ParamError('potential density needs a time-homogeneous model')
    x = as_state(x, model.dim).reshape(model.dim)
    y = as_state(y, model.dim).reshape(model.dim)
    dist = float(np.linalg.norm(x - y))
    if model.dim >= 2 and dist == 0.:
        utils.log('potential density diverges at x == y in d={}'.format(model.dim), 'warning')
        return np.inf

    def f(t):
        return float(np.exp(-alpha * t + _point_log_p(model, t, x, y)))

    # the Gaussian-type integrand peaks near t = dist / sqrt(2 alpha)
    edges = {0., 1., min(1., 50. / alpha)}
    if dist > 0:
        edges.add(min(1., dist / np.sqrt(2. * alpha)))
    return quad_pieces(f, sorted(edges) + [np.inf], epsabs=TINY, epsrel=POTENTIAL_EPSREL)[0]


def _k_points(K, n_x):
    K = np.asarray(K, dtype=float).ravel()
    if len(K) == 2:
        return np.linspace(K[0], K[1], n_x)
    return K


@register('bounded_potential')
def bounded_potential_check(model, y, K, alphas=None, n_x=11):
    """alpha u^alpha(x, y) over x in K (an interval (lo, hi) or explicit points) and growing alpha (1-D)."""
    if model.dim != 1:
        raise ParamError('bounded_potential_check is 1-D only')
    xs = _k_points(K, n_x)
    y = float(np.asarray(y).reshape(-1)[0])
    if xs.min() <= y <= xs.max():
        raise ParamError('y={} lies in K=[{}, {}]'.format(y, xs.min(), xs.max()))
    alphas = np.array([10. ** k for k in range(7)] if alphas is None else alphas, dtype=float)
    table = np.array([[a * potential_density(model, a, x, y) for x in xs] for a in alphas])
    bounded = bool(np.all(np.isfinite(table)))
    tail = table[-3:]
    eventually_decreasing = bool(np.all(tail[:-1] >= tail[1:]))
    return VerificationReport(
        'bounded_potential',
        inputs={'model': model.name, 'y': y, 'K': [float(xs.min()), float(xs.max())], 'alphas': alphas},
        statistics={'sup': float(np.max(table)) if bounded else np.inf, 'table': table,
                    'bounded': bounded, 'eventually_decreasing': eventually_decreasing},
        thresholds={'tail_length': 3},
        passed=bounded and eventually_decreasing,
        sample_sizes={'x': len(xs), 'alpha': len(alphas)})

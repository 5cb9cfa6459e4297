# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

import numpy as np

from bridges.integrators import TimeGrid, simulate_unconditioned
from .checks import VerificationReport, register

LEVELS = 4
SAMPLE_POINTS = 41
EXIT_STEPS = 500


def nested_sets(domain, levels=LEVELS):
    """Closed boxes C_1 subset C_2 ... exhausting the interior of the domain."""
    out = []
    for j in range(1, levels + 1):
        lo, hi = [], []
        for l in domain.lower:
            if np.isfinite(l):
                lo.append(l + 2. ** -j)
                hi.append(l + 2. ** j)
            else:
                lo.append(-2. ** j)
                hi.append(2. ** j)
        out.append((np.array(lo), np.array(hi)))
    return out


def _sample_points(box, n, rng):
    lo, hi = box
    if len(lo) == 1:
        return np.linspace(lo[0], hi[0], n)[:, None]
    return lo + (hi - lo) * rng.random((n * len(lo), len(lo)))


def lipschitz_estimate(fields, points):
    """max over pairs of sum_k |f_k(y) - f_k(y')| / |y - y'| (Frobenius norms)."""
    values = [np.asarray(f(points), dtype=float).reshape(len(points), -1) for f in fields]
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    num = sum(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1) for v in values)
    with np.errstate(divide='ignore', invalid='ignore'):
        q = np.where(dist > 0, num / dist, 0.)
    return float(np.max(q))


def exit_fraction(spec, x0, s, horizon, n_paths, seed):
    """Share of unconditioned Euler paths that touch a finite lower boundary before the horizon."""
    lower = np.asarray(spec.domain.lower, dtype=float)
    finite = np.isfinite(lower)
    if not finite.any():
        return 0.
    grid = TimeGrid.uniform(s, horizon, EXIT_STEPS)
    ens = simulate_unconditioned(spec, grid, n_paths, seed, x0=x0)
    gap = ens.states[..., finite] - lower[finite]
    touched = np.any(gap <= 2e-12 * np.maximum(1., np.abs(lower[finite])), axis=(1, 2))
    return float(np.mean(touched))


@register('strong_solution_preconditions')
def strong_solution_preconditions(spec, h=None, sample_grid=None, x0=None, horizon=None, n_paths=1000, seed=0):
    """Evidence for pathwise well-posedness of the bridge SDE.

    Local Lipschitz constants of b and sigma on nested closed sets, and the
    Monte Carlo share of base-diffusion paths leaving the interior before the
    horizon. Both are necessary conditions only, not a proof.
    """
    rng = np.random.default_rng(seed)
    t0 = h.s if h is not None else 0.
    fields = [lambda y: spec.b(t0, y), lambda y: spec.sigma(t0, y)]
    boxes = nested_sets(spec.domain)
    constants = []
    for box in boxes:
        if sample_grid is None:
            pts = _sample_points(box, SAMPLE_POINTS, rng)
        else:
            pts = np.asarray(sample_grid, dtype=float)
            lo, hi = box
            pts = pts.reshape(len(pts), -1)
            pts = pts[np.all((pts >= lo) & (pts <= hi), axis=-1)]
        constants.append(lipschitz_estimate(fields, pts) if len(pts) > 1 else 0.)
    if x0 is None:
        x0 = h.x if h is not None else 0.5 * (boxes[0][0] + boxes[0][1])
    if horizon is None:
        horizon = h.horizon if h is not None and np.isfinite(h.horizon) else t0 + 1.
    exit_share = exit_fraction(spec, x0, t0, horizon, n_paths, seed)
    finite = bool(np.all(np.isfinite(constants)))
    return VerificationReport(
        'strong_solution_preconditions',
        inputs={'dim': spec.dim, 'sets': [[lo, hi] for lo, hi in boxes], 'x0': x0, 'horizon': horizon},
        statistics={'lipschitz': constants, 'lipschitz_finite': finite, 'exit_fraction': exit_share},
        thresholds={'exit_fraction': 0.},
        passed=finite and exit_share == 0.,
        sample_sizes={'n_paths': n_paths, 'sample_points': SAMPLE_POINTS},
        seeds={'seed': int(seed)},
        notes=['necessary-condition evidence, not a proof'])

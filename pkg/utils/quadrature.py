# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

import warnings

import numpy as np
from scipy import integrate

from .errors import QuadratureError

EPSABS = 1e-10
EPSREL = 1e-8


def _raw(f, a, b, epsabs, epsrel, limit):
    """(value, abserr, first IntegrationWarning message or None)."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', integrate.IntegrationWarning)
        value, abserr = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)
    if not np.isfinite(value):
        raise QuadratureError('non-finite integral on [{}, {}]'.format(a, b))
    missed = [w for w in caught if issubclass(w.category, integrate.IntegrationWarning)]
    return value, abserr, str(missed[0].message).strip().splitlines()[0] if missed else None


def _judge(pieces, epsabs, epsrel):
    """Raise on a piece whose warning left an error above the target of the whole integral."""
    total = sum(value for _, _, value, _, _ in pieces)
    target = 10 * max(epsabs, epsrel * abs(total))
    for a, b, value, abserr, message in pieces:
        if message is not None and abserr > target:
            raise QuadratureError('quadrature on [{}, {}] did not converge: value {:.6g}, error {:.3g} ({})'.format(
                a, b, value, abserr, message))
    return total, sum(abserr for _, _, _, abserr, _ in pieces)


def quad(f, a, b, epsabs=EPSABS, epsrel=EPSREL, limit=200):
    """Adaptive Gauss-Kronrod on [a, b] (either end may be infinite).

    Returns (value, abserr). Non-convergence reported by QUADPACK becomes a
    QuadratureError unless the error estimate still meets the target.
    """
    if a == b:
        return 0., 0.
    return _judge([(a, b) + _raw(f, a, b, epsabs, epsrel, limit)], epsabs, epsrel)


def quad_pieces(f, edges, epsabs=EPSABS, epsrel=EPSREL, limit=200):
    """Sum of quad over consecutive edges.

    Each piece is held to the tolerance of the whole sum, so a far tail worth
    nothing next to the total may stop short without failing.
    """
    pieces = [(a, b) + _raw(f, a, b, epsabs, epsrel, limit) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    if not pieces:
        return 0., 0.
    return _judge(pieces, epsabs, epsrel)


def quad_line(f, lo=-np.inf, hi=np.inf, breaks=(), epsabs=EPSABS, epsrel=EPSREL):
    """Integrate f over (lo, hi), split at the finite `breaks` inside the range.

    Breaks mark where the integrand lives (mode, mode +- a few scales) so that
    narrow peaks are never stepped over by the infinite-range transform.
    """
    inner = sorted(set(float(p) for p in breaks if lo < p < hi and np.isfinite(p)))
    return quad_pieces(f, [lo] + inner + [hi], epsabs=epsabs, epsrel=epsrel)


def spread_breaks(center, scale, widths=(0., 1., 3., 6., 10.)):
    center = float(center)
    scale = float(scale)
    out = [center]
    for w in widths[1:]:
        out += [center - w * scale, center + w * scale]
    return out

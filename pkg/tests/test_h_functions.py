import numpy as np
import pytest
from scipy import stats

import diffusions
from bridges import (H_FLOOR, BridgeProcess, ExplicitH, IndicatorH, StrongH, bridge_drift, grad_h, h_eval,
                     h_transform_transition, kernel_table, make_h, terminal_table, weak_family)
from utils.errors import DomainError, HFloorError, ParamError, TimeError


@pytest.fixture
def bm():
    return diffusions.make('brownian')


def test_brownian_bridge_drift_closed_form(bm):
    rng = np.random.default_rng(1)
    checked = floored = 0
    while checked < 1000:
        t = rng.uniform(0., 0.999)
        y, z = rng.normal(size=2) * 2
        bp = BridgeProcess.from_h(StrongH(bm, 1., z, start=(0., 0.)))
        log_h = stats.norm.logpdf(z, loc=y, scale=np.sqrt(1. - t))
        if log_h < np.log(H_FLOOR) - 1.:
            with pytest.raises(HFloorError):
                bridge_drift(bp, t, y)
            floored += 1
        if log_h < np.log(H_FLOOR) + 1.:
            continue
        drift = bridge_drift(bp, t, y)
        assert drift[0] == pytest.approx((z - y) / (1. - t), rel=1e-12, abs=1e-12)
        checked += 1
    assert floored < 100


def test_strong_h_is_the_transition_density(bm):
    h = StrongH(bm, 2., 0.5, start=(0., 0.))
    assert h_eval(h, 1.2, np.array([0.1])) == pytest.approx(
        stats.norm.pdf(0.5, loc=0.1, scale=np.sqrt(0.8)), rel=1e-12)
    np.testing.assert_allclose(grad_h(h, 1.2, np.array([0.1])),
                               h_eval(h, 1.2, np.array([0.1])) * (0.5 - 0.1) / 0.8, rtol=1e-10)


def test_h_floor_and_time_errors(bm):
    h = StrongH(bm, 1., 0., start=(0., 0.))
    bp = BridgeProcess.from_h(h)
    with pytest.raises(HFloorError) as info:
        h_eval(h, 1. - 1e-6, np.array([5.]))
    assert info.value.log_h < np.log(1e-300)
    with pytest.raises(HFloorError):
        bridge_drift(bp, 1. - 1e-6, np.array([5.]))
    with pytest.raises(TimeError):
        bridge_drift(bp, 1., np.array([0.]))
    with pytest.raises(ParamError):
        StrongH(bm, np.inf, 0.)


def test_bridge_drift_needs_interior_states():
    bessel = diffusions.make('bessel', delta=3.)
    bp = BridgeProcess.from_h(StrongH(bessel, 1., 1., start=(0., 0.5)))
    with pytest.raises(DomainError):
        bridge_drift(bp, 0.5, np.array([0.]))
    assert np.isfinite(bridge_drift(bp, 0.5, np.array([0.3]))).all()


def test_weak_constant_h_is_one(bm):
    h = weak_family('constant', bm, 1., (0., 0.), n_nodes=4096)
    y = np.array([[-1.], [0.], [2.]])
    np.testing.assert_allclose(h.log_h(0.5, y), 0., atol=1e-12)
    np.testing.assert_allclose(h.grad_log_h(0.5, y), 0., atol=1e-12)


def test_weak_exponential_tilt(bm):
    lam = 0.5
    h = weak_family('exponential_tilt', bm, 1., (0., 0.), lam=lam, n_nodes=4096)
    y = np.array([[-1.], [0.3]])
    lh = h.log_h(0.5, y)
    assert lh[1] - lh[0] == pytest.approx(lam * 1.3, rel=1e-10)
    np.testing.assert_allclose(h.grad_log_h(0.5, y), lam, rtol=1e-6)
    # normalised so that h(s, x) = 1
    assert float(np.ravel(h.log_h(0., np.array([[0.]])))[0]) == pytest.approx(0., abs=1e-10)
    # antithetic pairs average to cosh(lam sqrt(tau) xi)
    a2 = lam ** 2
    expected = np.sqrt((1. + np.exp(2. * a2)) / 2. - np.exp(a2)) / np.exp(a2 / 2.) / np.sqrt(2048)
    assert h.start_se == pytest.approx(expected, rel=0.1)
    assert np.all(h.standard_error(0.5, y) < h.start_se)


def test_weak_standard_error(bm):
    flat = weak_family('constant', bm, 1., (0., 0.), n_nodes=4096)
    assert flat.start_se == 0.
    assert np.all(flat.standard_error(0.5, np.array([[0.], [1.]])) == 0.)
    compact = weak_family('constant', bm, 1., (0., 0.), support=(-1., 1.))
    assert compact.start_se == 0.
    with pytest.raises(ParamError):
        weak_family('constant', bm, 1., (0., 0.), n_nodes=2)


def test_weak_compact_support_uses_quadrature(bm):
    h = make_h('weak', model=bm, horizon=1., start=(0., 0.), log_H=lambda y: np.zeros(np.shape(y)[:-1]),
               support=(-1., 1.))
    lh = float(np.ravel(h.log_h(0.5, np.array([[0.]])))[0])
    assert np.exp(lh) == pytest.approx(stats.norm.cdf(1., scale=np.sqrt(0.5)) -
                                       stats.norm.cdf(-1., scale=np.sqrt(0.5)), rel=1e-7)


def test_indicator_h_is_a_tail_probability(bm):
    h = IndicatorH(bm, 1., (1., np.inf), start=(0., 0.))
    y = np.array([[0.2]])
    assert float(np.exp(h.log_h(0.75, y))[0]) == pytest.approx(stats.norm.sf(0.8 / 0.5), rel=1e-12)
    with pytest.raises(ParamError):
        IndicatorH(diffusions.make('brownian', dim=2), 1., (1., 2.), start=(0., [0., 0.]))


def test_explicit_h_with_infinite_horizon():
    h = ExplicitH(lambda t, y: np.exp(y[..., 0] - 0.5 * t), start=(0., [0.]), dim=1)
    assert h.horizon == np.inf
    np.testing.assert_allclose(h.grad_log_h(10., np.array([[0.3]])), 1., rtol=1e-6)


def test_unknown_kind():
    with pytest.raises(ParamError):
        make_h('sideways')


def test_h_transform_transition_is_a_probability():
    ou = diffusions.make('ou', theta=1., sigma=1.)
    h = StrongH(ou, 1., 0.7, start=(0., -0.2))
    assert h_transform_transition(h, 0., 0.5, -0.2) == pytest.approx(1., abs=1e-7)
    bm = diffusions.make('brownian')
    hb = StrongH(bm, 1., 0., start=(0., 0.))
    assert h_transform_transition(hb, 0., 0.5, 0., region=(-np.inf, 0.)) == pytest.approx(0.5, abs=1e-8)


def test_kernel_table_of_brownian_bridge(bm):
    h = StrongH(bm, 1., 0., start=(0., 0.))
    table = kernel_table(h, 0., np.array([0.]), 0.5)
    y = np.linspace(-1.5, 1.5, 13)
    np.testing.assert_allclose(table.cdf_at(y), stats.norm.cdf(y, scale=0.5), atol=1e-8)
    u = np.array([0.01, 0.3, 0.5, 0.77, 0.999])
    np.testing.assert_allclose(table.ppf(u), stats.norm.ppf(u, scale=0.5), atol=1e-8)
    assert isinstance(table.ppf(0.5), float)


def test_terminal_table_of_indicator(bm):
    h = IndicatorH(bm, 1., (1., np.inf), start=(0., 0.))
    table = terminal_table(h, 0., np.array([0.]))
    y = np.array([1., 1.2, 1.7, 2.5, 4.])
    expected = 1. - stats.norm.sf(y) / stats.norm.sf(1.)
    np.testing.assert_allclose(table.cdf_at(y), expected, atol=1e-8)
    u = np.array([0.05, 0.5, 0.95])
    exact = stats.norm.isf(stats.norm.sf(1.) * (1. - u))
    np.testing.assert_allclose(table.ppf(u), exact, atol=1e-8)
    with pytest.raises(ParamError):
        terminal_table(StrongH(bm, 1., 0., start=(0., 0.)), 0., np.array([0.]))

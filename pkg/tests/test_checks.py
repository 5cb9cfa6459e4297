import numpy as np
import pytest
from scipy import stats

import diffusions
from bridges import ExplicitH, ScenarioConfig, StrongH, TimeGrid, simulate_unconditioned
from checks import (TestFunction, VerificationReport, bounded_potential_check, bridge_hit_check, bump_function,
                    chapman_kolmogorov_check, density_sup_check, dual_limit_check, h_test_function,
                    ks_critical, ks_one_sample, ks_two_sample, laplace_limit_check, local_martingale_residual,
                    martingale_check, potential_density, run_suite, strong_solution_preconditions,
                    terminal_law_check, with_rerun, within_se)
from checks.checks import rerun_seed
from utils.errors import ConfigError, ParamError, SampleSizeError, TimeError


@pytest.fixture
def bm():
    return diffusions.make('brownian')


@pytest.fixture
def ou():
    return diffusions.make('ou', theta=1., mu=0., sigma=1.)


def _scenario(**extra):
    cfg = {'model': 'brownian', 'conditioning_args': {'z': 0.}, 'start': {'x': 0.}, 'horizon': 1.,
           'grid': {'n_steps': 200}, 'ensemble': {'n_paths': 1000}}
    cfg.update(extra)
    return ScenarioConfig.from_dict(cfg)


def test_ks_critical_value():
    assert ks_critical(0.01, 10000) == pytest.approx(0.01628)
    assert ks_critical(0.05, 100) == pytest.approx(0.1358)


def test_ks_one_sample():
    rng = np.random.default_rng(0)
    good = ks_one_sample(rng.standard_normal(2000), stats.norm.cdf, alpha=0.001)
    assert good['passed'] and good['critical'] is not None
    bad = ks_one_sample(rng.standard_normal(2000) + 0.5, stats.norm.cdf)
    assert not bad['passed']
    small = ks_one_sample(rng.standard_normal(500), stats.norm.cdf, alpha=0.001)
    assert small['critical'] is None and small['n'] == 500
    with pytest.raises(SampleSizeError):
        ks_one_sample(np.zeros(99), stats.norm.cdf)


def test_ks_two_sample():
    rng = np.random.default_rng(1)
    assert ks_two_sample(rng.standard_normal(2000), rng.standard_normal(3000), alpha=0.001)['passed']
    assert not ks_two_sample(rng.standard_normal(2000), rng.standard_normal(2000) + 1.)['passed']
    with pytest.raises(SampleSizeError):
        ks_two_sample(np.zeros(50), np.zeros(500))


def test_within_se():
    assert within_se(1.02, 0.01, 1.)
    assert not within_se(1.04, 0.01, 1.)
    assert within_se(0.5, 0.01, 1., one_sided=True)
    assert within_se(1., 0., 1.)
    assert not within_se(1. + 1e-9, 0., 1.)


def test_failed_report_gets_one_rerun():
    seen = []

    def run_once(seed):
        seen.append(seed)
        return VerificationReport('fake', passed=len(seen) > 1)

    report = with_rerun(run_once, 4)
    assert report.passed
    assert seen == [4, rerun_seed(4)]
    assert report.seeds == {'seed': 4, 'rerun': rerun_seed(4)}
    assert len(report.notes) == 1
    assert rerun_seed(4) == rerun_seed(4) != rerun_seed(5)


def test_report_serialises():
    report = VerificationReport('fake', statistics={'x': np.float64(1.5), 'v': np.arange(3)}, passed=True)
    out = report.to_dict(runtime=False)
    assert out['statistics'] == {'x': 1.5, 'v': [0, 1, 2]}
    assert 'runtime' not in out
    assert report.line().startswith('fake: pass')


def test_chapman_kolmogorov_brownian(bm):
    report = chapman_kolmogorov_check(bm, 0.4, 1., 0.2, -0.3)
    assert report.passed
    assert report.statistics['relative_residual'] < 1e-7
    assert report.runtime >= 0.


def test_chapman_kolmogorov_ou(ou):
    report = chapman_kolmogorov_check(ou, 0.3, 0.8, 0.5, 1.1)
    assert report.passed
    assert report.statistics['relative_residual'] < 1e-6


def test_chapman_kolmogorov_with_a_short_first_leg(bm):
    report = chapman_kolmogorov_check(bm, 1. - 1e-6, 1., 0., 0.5)
    assert report.passed


def test_chapman_kolmogorov_needs_a_split(bm):
    with pytest.raises(TimeError):
        chapman_kolmogorov_check(bm, 1., 1., 0., 0.)


@pytest.mark.parametrize('name', ['bm', 'ou'])
def test_dual_limit_vanishes(name, request):
    model = request.getfixturevalue(name)
    report = dual_limit_check(model, 0., 0., 0.5, 1.)
    assert report.passed
    assert report.statistics['final'] < 1e-30


def test_dual_limit_with_a_tiny_radius_recovers_the_density(bm):
    report = dual_limit_check(bm, 0., 0., 1e-6, 1.)
    assert not report.passed
    assert report.statistics['final'] == pytest.approx(stats.norm.pdf(0.), rel=1e-3)


def test_density_sup_of_brownian(bm):
    report = density_sup_check(bm, 0., 1., 1.)
    assert report.passed
    assert report.statistics['sup'] == pytest.approx(stats.norm.pdf(1.), rel=1e-9)
    wider = density_sup_check(bm, 0., 2., 1.)
    assert wider.statistics['sup'] <= report.statistics['sup']
    bounded = density_sup_check(bm, 0., 1., 1., bound_k=0.5)
    assert bounded.passed
    assert bounded.statistics['bound_ratio'] == pytest.approx(1. / np.sqrt(2. * np.pi), rel=1e-9)


def test_potential_density_of_brownian(bm):
    rng = np.random.default_rng(3)
    for _ in range(20):
        alpha = 10. ** rng.uniform(-1., 2.)
        x, y = rng.uniform(-2., 2., size=2)
        root = np.sqrt(2. * alpha)
        assert potential_density(bm, alpha, x, y) == pytest.approx(np.exp(-root * abs(x - y)) / root, rel=1e-6)
    assert potential_density(bm, 2., 0., 1.) == pytest.approx(np.exp(-2.) / 2., rel=1e-6)
    values = [potential_density(bm, a, 0.3, -0.4) for a in (0.5, 1., 5., 50.)]
    assert np.all(np.diff(values) < 0)
    assert potential_density(bm, 3., 0.3, -0.4) == pytest.approx(potential_density(bm, 3., -0.4, 0.3), rel=1e-9)


def test_potential_density_errors(bm):
    with pytest.raises(ParamError):
        potential_density(bm, 0., 0., 1.)
    lin = diffusions.make('linear_gaussian', sigma={'times': [0., 1.], 'values': [1., 2.]}, horizon=1.)
    with pytest.raises(ParamError):
        potential_density(lin, 1., 0., 1.)
    assert potential_density(diffusions.make('brownian', dim=2), 1., [0., 0.], [0., 0.]) == np.inf


def test_bounded_potential(bm):
    report = bounded_potential_check(bm, 0., (1., 2.))
    assert report.passed
    assert np.isfinite(report.statistics['sup'])
    with pytest.raises(ParamError):
        bounded_potential_check(bm, 1.5, (1., 2.))


def test_martingale_of_a_constant_h(bm):
    h = ExplicitH(lambda t, y: np.ones(np.shape(y)[:-1]), horizon=1., model=bm, start=(0., [0.]))
    report = martingale_check(bm, h, [0.25, 0.5], n_paths=200)
    assert report.passed
    assert report.statistics['mean'] == [1., 1.]
    assert report.statistics['tail']['mean'] == 1.
    assert report.seeds == {'seed': 0}


def test_martingale_times_must_precede_the_horizon(bm):
    h = StrongH(bm, 1., 0., start=(0., 0.))
    with pytest.raises(TimeError):
        martingale_check(bm, h, [1.5], n_paths=100)


@pytest.mark.slow
@pytest.mark.parametrize('name', ['bm', 'ou'])
def test_strong_h_is_a_martingale(name, request):
    model = request.getfixturevalue(name)
    h = StrongH(model, 1., 0.3, start=(0., 0.))
    report = martingale_check(model, h, [0.25, 0.5, 0.9], n_paths=10000, seed=2)
    assert report.passed
    # just before the horizon h lives on rare paths; its typical value is tiny
    assert report.statistics['tail']['median_h'] < 1e-3


def test_terminal_law_rejects_strong_conditioning(bm):
    with pytest.raises(ParamError):
        terminal_law_check(None, StrongH(bm, 1., 0., start=(0., 0.)))


def test_bridge_hit_with_an_infinite_tolerance(bm):
    grid = TimeGrid.uniform(0., 1., 10)
    ens = simulate_unconditioned(bm, grid, 50, 0, x0=0.)
    report = bridge_hit_check(ens, 0., tol=np.inf)
    assert report.statistics['fraction'] == 1.
    assert report.passed


def _constant():
    return TestFunction(lambda t, x: np.ones(len(x)), lambda t, x: np.zeros_like(x),
                        lambda t, x: np.zeros(x.shape + (x.shape[-1],)))


def test_local_martingale_of_a_constant(bm):
    ens = simulate_unconditioned(bm, TimeGrid.uniform(0., 1., 20), 100, 0, x0=0.)
    report = local_martingale_residual(bm, _constant(), ens)
    assert report.passed
    assert report.statistics['mean'] == 0.
    with pytest.raises(ParamError):
        local_martingale_residual(bm, TestFunction(lambda t, x: np.ones(len(x))), ens)


def test_bump_function_derivatives():
    f = bump_function(0., 2.)
    x = np.array([[0.3], [-1.1]])
    eps = 1e-5
    fd = (f.value(0., x + eps) - f.value(0., x - eps)) / (2 * eps)
    np.testing.assert_allclose(f.grad(0., x)[:, 0], fd, rtol=1e-6)
    fd2 = (f.grad(0., x + eps) - f.grad(0., x - eps))[:, 0] / (2 * eps)
    np.testing.assert_allclose(f.hess(0., x)[:, 0, 0], fd2, rtol=1e-5)
    assert f.value(0., np.array([[2.5]]))[0] == 0.


def test_h_is_space_time_harmonic(bm):
    h = StrongH(bm, 1., 0., start=(0., 0.))
    f = h_test_function(h)
    x = np.array([[0.2], [-0.5]])
    generator = f.time_derivative(0.3, x) + 0.5 * f.hess(0.3, x)[:, 0, 0]
    np.testing.assert_allclose(generator, 0., atol=1e-5)
    ens = simulate_unconditioned(bm, TimeGrid.uniform(0., 0.5, 100), 2000, 1, x0=0.)
    report = local_martingale_residual(bm, f, ens)
    assert report.inputs['time_dependent']
    assert report.passed


@pytest.mark.slow
def test_local_martingale_of_a_bump(bm):
    ens = simulate_unconditioned(bm, TimeGrid.uniform(0., 1., 1000), 5000, 2, x0=0.)
    assert local_martingale_residual(bm, bump_function(0., 2.), ens).passed


def test_laplace_limit_of_the_identity():
    report = laplace_limit_check(lambda t, s: s, 'a_i')
    assert report.passed
    values = report.statistics['t=1.0']['values']
    alphas = report.inputs['alphas']
    expected = [(1. - np.exp(-a) * (1. + a)) / a for a in alphas]
    np.testing.assert_allclose(values, expected, rtol=1e-6)


def test_laplace_limit_of_a_constant():
    report = laplace_limit_check(lambda t, s: 1., 'a_i')
    assert report.passed
    assert report.statistics['t=2.0']['limit'] == pytest.approx(1., abs=1e-6)
    assert not report.statistics['t=2.0']['limit_vanishes']


def test_laplace_limit_double_transform():
    report = laplace_limit_check(lambda t, s: s, 'a_ii', times=(1.,), betas=(1.,))
    assert report.passed
    assert report.statistics['beta=1.0']['limit'] < 1e-3


def test_laplace_limit_converse():
    report = laplace_limit_check(lambda t, s: min(1., s / t), 'b', K=1.)
    assert report.passed
    assert any('0 <= delta <= t' in n for n in report.notes)
    untested = laplace_limit_check(lambda t, s: 1., 'b', K=1.)
    assert any('conclusion not tested' in n for n in untested.notes)
    with pytest.raises(ParamError):
        laplace_limit_check(lambda t, s: s, 'c')


def test_preconditions_of_brownian_and_ou(bm, ou):
    for model in (bm, ou):
        report = strong_solution_preconditions(model.spec, n_paths=100)
        assert report.passed
        assert report.statistics['exit_fraction'] == 0.
        assert 'not a proof' in report.notes[0]


def test_preconditions_of_bessel():
    bessel = diffusions.make('bessel', delta=3.)
    h = StrongH(bessel, 1., 1., start=(0., 0.5))
    report = strong_solution_preconditions(bessel.spec, h, n_paths=100)
    lip = report.statistics['lipschitz']
    assert report.statistics['lipschitz_finite']
    # drift (delta - 1) / 2x steepens as the sets approach 0
    assert lip[-1] > lip[0]


def test_laplace_suite():
    reports = run_suite('appendixB', _scenario())
    assert len(reports) == 4
    assert all(r.passed for r in reports)


def test_suite_errors():
    with pytest.raises(ConfigError):
        run_suite('nope', _scenario())
    with pytest.raises(ConfigError):
        run_suite('appendixB', _scenario(verify={'n_paht': 10}))


@pytest.mark.slow
def test_assumption_suite_on_brownian():
    reports = run_suite('assumptions', _scenario())
    names = [r.name for r in reports]
    assert names == ['chapman_kolmogorov', 'dual_limit', 'density_sup', 'bounded_potential',
                     'strong_solution_preconditions']
    assert all(r.passed for r in reports)


@pytest.mark.slow
def test_bridge_suite_on_brownian():
    reports = run_suite('bridge', _scenario(verify={'n_paths': 2000}), parallelism=2)
    assert [r.name for r in reports] == ['bridge_hit'] + ['transition_law'] * 3

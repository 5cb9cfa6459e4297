import numpy as np
import pandas as pd
import pytest
from scipy import stats

import diffusions
from diffusions import DiffusionSpec
from bridges import (BridgeProcess, ExplicitH, IndicatorH, StrongH, TimeGrid, euler_maruyama, exact_brownian_bridge,
                     exact_markov_bridge, make_grid, simulate_ensemble, simulate_unconditioned)
from checks import bridge_hit_check, terminal_law_check, transition_law_check, within_se
from utils.errors import EnsembleError, ParamError, TimeError


def _bb(z=0., x=0., horizon=1., **args):
    model = diffusions.make('brownian', **args)
    return BridgeProcess.from_h(StrongH(model, horizon, z, start=(0., x)))


def test_geometric_grid():
    grid = make_grid(0., 1., n_steps=100, gamma=2., delta_min=1e-4)
    assert grid.nodes[0] == 0.
    assert grid.nodes[-1] == pytest.approx(1. - 1e-4, abs=1e-15)
    assert grid.delta_min == pytest.approx(1e-4)
    steps = np.diff(grid.nodes)
    assert np.all(steps > 0)
    # steps shrink towards the horizon
    assert np.all(np.diff(steps) < 1e-15)
    uniform = make_grid(0., 1., n_steps=4, refinement='uniform', delta_min=0.2)
    np.testing.assert_allclose(uniform.nodes, [0., 0.2, 0.4, 0.6, 0.8])


def test_grid_errors():
    with pytest.raises(TimeError):
        make_grid(1., 1.)
    with pytest.raises(ParamError):
        make_grid(0., 1., gamma=0.5)
    with pytest.raises(ParamError):
        make_grid(0., 1., delta_min=2.)
    with pytest.raises(ParamError):
        make_grid(0., np.inf, n_steps=10)
    with pytest.raises(ParamError):
        TimeGrid.from_nodes([0., 0.5, 1.], 1.)
    grid = make_grid(0., np.inf, n_steps=10, end=5.)
    assert grid.nodes[-1] == 5.


def test_ensemble_is_independent_of_parallelism():
    bp = _bb(z=0.5)
    grid = make_grid(0., 1., n_steps=200)
    ens = [simulate_ensemble(bp, grid, 600, 11, parallelism=p) for p in (1, 4)]
    assert np.array_equal(ens[0].states, ens[1].states)
    assert np.array_equal(ens[0].terminal, ens[1].terminal)
    assert ens[0].diagnostics == ens[1].diagnostics


def test_single_path_matches_the_ensemble():
    bp = _bb(z=-1.)
    grid = make_grid(0., 1., n_steps=100)
    ens = simulate_ensemble(bp, grid, 300, 3, parallelism=2)
    for i in (0, 17, 299):
        path = euler_maruyama(bp, grid, 3, index=i)
        assert np.array_equal(path.states, ens.states[i])
        assert path.seed == (3, i)
        assert not path.failed


def test_zero_coefficients_give_a_constant_path():
    still = DiffusionSpec(2, lambda t, x: np.zeros_like(x),
                          lambda t, x: np.zeros(np.shape(x) + (np.shape(x)[-1],)))
    h = ExplicitH(lambda t, y: np.ones(np.shape(y)[:-1]), grad_h=lambda t, y: np.zeros_like(y),
                  horizon=1., start=(0., [0.7, -2.]))
    path = euler_maruyama(BridgeProcess.from_h(h, spec=still), make_grid(0., 1., n_steps=50), 11)
    np.testing.assert_array_equal(path.states, np.broadcast_to([0.7, -2.], path.states.shape))
    assert not path.failed


def test_different_seeds_differ():
    bp = _bb()
    grid = make_grid(0., 1., n_steps=50)
    a = simulate_ensemble(bp, grid, 10, 0)
    b = simulate_ensemble(bp, grid, 10, 1)
    assert not np.array_equal(a.states, b.states)


def test_exact_brownian_bridge_path():
    grid = make_grid(0., 2., n_steps=400)
    path = exact_brownian_bridge(0.3, -0.4, 2., grid, seed=5)
    assert path.states[0, 0] == 0.3
    assert np.all(path.terminal == -0.4)
    assert abs(path.states[-1, 0] + 0.4) < 0.1


def test_exact_brownian_bridge_marginals():
    bp = _bb(z=1., x=0.)
    grid = make_grid(0., 1., n_steps=64)
    ens = simulate_ensemble(bp, grid, 3000, 2, method='exact_brownian')
    k = grid.nearest(0.5)
    t = grid.nodes[k]
    xt = ens.states[:, k, 0]
    expected = stats.norm(loc=t, scale=np.sqrt(t * (1. - t)))
    assert stats.kstest(xt, expected.cdf).pvalue > 1e-3
    assert transition_law_check(ens, bp.h, 0.5, alpha=1e-3).passed


def test_exact_brownian_needs_brownian_strong():
    ou = diffusions.make('ou')
    bp = BridgeProcess.from_h(StrongH(ou, 1., 0., start=(0., 0.)))
    with pytest.raises(ParamError):
        simulate_ensemble(bp, make_grid(0., 1., n_steps=10), 10, 0, method='exact_brownian')
    with pytest.raises(ParamError):
        simulate_ensemble(bp, make_grid(0., 1., n_steps=10), 10, 0, method='leapfrog')


def test_grid_must_match_the_bridge():
    with pytest.raises(ParamError):
        simulate_ensemble(_bb(), make_grid(0., 2., n_steps=10), 10, 0)


def test_csv_matches_summary(tmp_path):
    bp = _bb(z=0.25)
    grid = make_grid(0., 1., n_steps=40)
    ens = simulate_ensemble(bp, grid, 500, 9)
    target = tmp_path / 'paths.csv'
    ens.write_csv(str(target))
    frame = pd.read_csv(str(target), float_precision='round_trip')
    assert list(frame.columns) == ['path_id', 't', 'x_1']
    assert frame['path_id'].nunique() == 500
    summary = ens.summary()
    means = frame[frame['t'] < 1.].groupby('t')['x_1'].mean().to_numpy()
    np.testing.assert_allclose(means, np.asarray(summary['mean'])[:, 0], rtol=1e-12, atol=1e-12)
    assert np.all(frame.loc[frame['t'] == 1., 'x_1'] == 0.25)
    assert set(summary['pinning']) == {'tol', 'fraction', 'q99'}


def test_stride_keeps_the_first_node():
    ens = simulate_ensemble(_bb(), make_grid(0., 1., n_steps=40), 5, 0)
    frame = ens.to_frame(stride=10)
    assert sorted(frame['t'].unique())[:2] == [0., ens.grid.nodes[10]]
    assert len(frame) == 5 * 6


def test_failing_h_raises_ensemble_error():
    bm = diffusions.make('brownian')

    def h(t, y):
        return np.full(np.shape(y)[:-1], 1. if t == 0 else np.nan)

    bp = BridgeProcess.from_h(ExplicitH(h, horizon=1., model=bm, start=(0., [0.])))
    with pytest.raises(EnsembleError) as info:
        simulate_ensemble(bp, make_grid(0., 1., n_steps=10), 20, 0)
    assert info.value.diagnostics['failed'] == 20
    assert info.value.diagnostics['resampled'] == 60


def test_unconditioned_brownian():
    bm = diffusions.make('brownian', drift=0.5)
    grid = TimeGrid.uniform(0., 1., 50)
    ens = simulate_unconditioned(bm, grid, 2000, 4, x0=0.)
    final = ens.final()[:, 0]
    assert within_se(final.mean(), final.std() / np.sqrt(len(final)), 0.5)
    with pytest.raises(ParamError):
        simulate_unconditioned(bm, grid, 10, 0)


@pytest.mark.slow
def test_euler_brownian_bridge_laws():
    bp = _bb(z=0.)
    grid = make_grid(0., 1., n_steps=2000)
    ens = simulate_ensemble(bp, grid, 10000, 0, parallelism=4)
    for t in (0.25, 0.5, 0.75):
        assert transition_law_check(ens, bp.h, t, alpha=0.01).passed
    mid = ens.at(0.5)[:, 0]
    assert within_se(mid.mean(), mid.std() / np.sqrt(len(mid)), 0.)
    assert bridge_hit_check(ens, 0.).passed


@pytest.mark.slow
def test_ou_bridge_hits_its_target():
    ou = diffusions.make('ou', theta=1., mu=0., sigma=1.)
    bp = BridgeProcess.from_h(StrongH(ou, 1., 1., start=(0., 0.)))
    ens = simulate_ensemble(bp, make_grid(0., 1., n_steps=2000), 10000, 1, parallelism=4)
    report = bridge_hit_check(ens, 1.)
    assert report.passed
    assert report.statistics['h_floor_events'] == 0


@pytest.mark.slow
def test_indicator_terminal_law():
    bm = diffusions.make('brownian')
    h = IndicatorH(bm, 1., (1., np.inf), start=(0., 0.))
    ens = simulate_ensemble(BridgeProcess.from_h(h), make_grid(0., 1., n_steps=500), 10000, 7,
                              parallelism=4)
    assert np.all(ens.terminal_states() >= 1.)
    assert terminal_law_check(ens, h, alpha=0.01).passed


@pytest.mark.slow
def test_exact_markov_bridge_of_ou():
    ou = diffusions.make('ou', theta=1., mu=0., sigma=1.)
    h = StrongH(ou, 1., 0.5, start=(0., -0.5))
    bp = BridgeProcess.from_h(h)
    grid = TimeGrid.from_nodes([0., 0.25, 0.5, 0.75], 1.)
    ens = simulate_ensemble(bp, grid, 200, 3, method='exact_markov')
    assert transition_law_check(ens, h, 0.5, alpha=0.01).passed
    path = exact_markov_bridge(bp, grid, 3, index=5)
    np.testing.assert_allclose(path.states, ens.states[5])

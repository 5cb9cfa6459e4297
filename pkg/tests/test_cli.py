import json
import os

import numpy as np
import pandas as pd
import pytest
import yaml
from scipy import stats

import bridgesim
from bridges import ScenarioConfig
from utils.errors import ConfigError

BROWNIAN = {
    'model': 'brownian',
    'model_args': {'dim': 1, 'sigma': 1.0},
    'conditioning': 'strong',
    'conditioning_args': {'z': 0.0},
    'start': {'s': 0.0, 'x': 0.0},
    'horizon': 1.0,
    'grid': {'refinement': 'geometric', 'gamma': 2.0, 'n_steps': 50},
    'ensemble': {'n_paths': 100, 'master_seed': 0},
    'outputs': {'stride': 5},
    'density': {'t': 0.5, 'y': [-2.0, 2.0, 41]},
}


def _write(tmp_path, cfg, name='scenario.yaml'):
    path = tmp_path / name
    with open(str(path), 'w') as f:
        yaml.safe_dump(cfg, f)
    return str(path)


def _run(*argv):
    return bridgesim.main(list(argv))


def test_simulate_writes_paths_and_summary(tmp_path):
    cfg = _write(tmp_path, BROWNIAN)
    out = str(tmp_path / 'out')
    assert _run('simulate', '--config', cfg, '--out', out, '--quiet') == bridgesim.EXIT_OK
    for name in ('config.yaml', 'paths.csv', 'summary.json'):
        assert os.path.exists(os.path.join(out, name))
    with open(os.path.join(out, 'summary.json')) as f:
        summary = json.load(f)
    assert summary['n_paths'] == 100 and summary['n_failed'] == 0
    frame = pd.read_csv(os.path.join(out, 'paths.csv'), float_precision='round_trip')
    assert frame['path_id'].nunique() == 100
    # stride 5 over 50 steps plus the pinned terminal row
    assert frame.groupby('path_id').size().unique().tolist() == [12]


def test_simulate_is_reproducible_across_threads(tmp_path):
    cfg = _write(tmp_path, dict(BROWNIAN, ensemble={'n_paths': 600, 'master_seed': 3}))
    blobs = []
    for i, threads in enumerate(('1', '1', '4', '8')):
        out = str(tmp_path / 'out{}'.format(i))
        assert _run('simulate', '--config', cfg, '--out', out, '--threads', threads, '--quiet') == 0
        with open(os.path.join(out, 'paths.csv'), 'rb') as f, open(os.path.join(out, 'summary.json'), 'rb') as g:
            blobs.append((f.read(), g.read()))
    assert all(b == blobs[0] for b in blobs[1:])


def test_seed_flag_changes_the_paths(tmp_path):
    cfg = _write(tmp_path, BROWNIAN)
    outs = [str(tmp_path / 'a'), str(tmp_path / 'b')]
    for out, seed in zip(outs, ('1', '2')):
        assert _run('simulate', '--config', cfg, '--out', out, '--seed', seed, '--quiet') == 0
    a, b = (pd.read_csv(os.path.join(out, 'paths.csv'), float_precision='round_trip') for out in outs)
    assert not np.array_equal(a['x_1'].to_numpy(), b['x_1'].to_numpy())


def test_csv_and_summary_agree(tmp_path):
    cfg = _write(tmp_path, dict(BROWNIAN, outputs={'stride': 1}))
    out = str(tmp_path / 'out')
    assert _run('simulate', '--config', cfg, '--out', out, '--quiet') == 0
    frame = pd.read_csv(os.path.join(out, 'paths.csv'), float_precision='round_trip')
    with open(os.path.join(out, 'summary.json')) as f:
        summary = json.load(f)
    frame = frame[frame['t'] < 1.]
    np.testing.assert_allclose(frame.groupby('t')['x_1'].mean().to_numpy(), np.asarray(summary['mean'])[:, 0],
                               rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(sorted(frame['t'].unique()), summary['nodes'], rtol=0, atol=0)


def test_command_line_overrides(tmp_path):
    cfg = _write(tmp_path, BROWNIAN)
    out = str(tmp_path / 'out')
    assert _run('simulate', '--config', cfg, '--out', out, '--quiet', 'ensemble.n_paths', '20',
                'grid.n_steps', '10') == 0
    with open(os.path.join(out, 'summary.json')) as f:
        summary = json.load(f)
    assert summary['n_paths'] == 20
    assert len(summary['nodes']) == 11
    assert _run('simulate', '--config', cfg, '--out', out, 'ensemble.n_paths') == bridgesim.EXIT_USAGE


def test_usage_errors(tmp_path):
    no_model = dict(BROWNIAN)
    del no_model['model']
    assert _run('simulate', '--config', _write(tmp_path, no_model), '--quiet') == bridgesim.EXIT_USAGE
    assert _run('simulate', '--config', str(tmp_path / 'missing.yaml')) == bridgesim.EXIT_USAGE
    cfg = _write(tmp_path, BROWNIAN)
    assert _run('verify', '--config', cfg, '--suite', 'nope') == bridgesim.EXIT_USAGE
    assert _run('launch', '--config', cfg) == bridgesim.EXIT_USAGE
    assert _run() == bridgesim.EXIT_USAGE
    bad_h = dict(BROWNIAN, start={'x': 0.}, conditioning_args={'z': 50.}, horizon=1e-4)
    assert _run('simulate', '--config', _write(tmp_path, bad_h), '--quiet') == bridgesim.EXIT_USAGE


def test_verify_laplace_suite(tmp_path):
    cfg = _write(tmp_path, BROWNIAN)
    out = str(tmp_path / 'out')
    assert _run('verify', '--config', cfg, '--out', out, '--suite', 'appendixB') == bridgesim.EXIT_OK
    with open(os.path.join(out, 'verify_appendixB.json')) as f:
        reports = json.load(f)
    assert len(reports) == 4
    assert all(r['passed'] and r['name'] == 'laplace_limit' for r in reports)
    assert set(reports[0]) >= {'inputs', 'statistics', 'thresholds', 'sample_sizes', 'seeds', 'runtime', 'notes'}


def test_classify_brownian(tmp_path):
    cfg = _write(tmp_path, BROWNIAN)
    out = str(tmp_path / 'out')
    assert _run('classify', '--config', cfg, '--out', out) == bridgesim.EXIT_OK
    with open(os.path.join(out, 'boundaries.json')) as f:
        boundaries = json.load(f)
    assert boundaries['lower']['classification'] == 'natural'
    assert boundaries['upper']['classification'] == 'natural'


def test_classify_is_one_dimensional(tmp_path):
    with open(os.path.join(os.path.dirname(os.path.dirname(__file__)), 'configs', 'linear_gaussian.yaml')) as f:
        cfg = yaml.safe_load(f)
    assert _run('classify', '--config', _write(tmp_path, cfg), '--out', str(tmp_path / 'out')) == \
        bridgesim.EXIT_USAGE


def test_density_table(tmp_path):
    cfg = _write(tmp_path, BROWNIAN)
    out = str(tmp_path / 'out')
    assert _run('density', '--config', cfg, '--out', out) == bridgesim.EXIT_OK
    frame = pd.read_csv(os.path.join(out, 'density.csv'), float_precision='round_trip')
    assert list(frame.columns) == ['t', 'y', 'p', 'h', 'drift', 'h_floor']
    assert len(frame) == 41
    y = frame['y'].to_numpy()
    np.testing.assert_allclose(frame['drift'], -y / 0.5, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(frame['p'], stats.norm.pdf(y, scale=np.sqrt(0.5)), rtol=1e-12)
    np.testing.assert_allclose(frame['h'], stats.norm.pdf(y, scale=np.sqrt(0.5)), rtol=1e-12)
    assert not frame['h_floor'].any()


def test_density_time_must_be_inside(tmp_path):
    cfg = _write(tmp_path, dict(BROWNIAN, density={'t': 1.5}))
    assert _run('density', '--config', cfg, '--out', str(tmp_path / 'out')) == bridgesim.EXIT_USAGE


@pytest.mark.parametrize('change', [
    {'model': 'levy'},
    {'start': {'s': 2.0, 'x': 0.0}},
    {'conditioning': 'explicit'},
    {'conditioning_args': {}},
    {'grid': {'n_step': 10}},
    {'grid': {'refinement': 'cubic'}},
    {'ensemble': {'n_paths': 0}},
    {'method': 'milstein'},
    {'horizon': float('nan')},
    {'conditioning': 'weak', 'conditioning_args': {'family': 'quadratic'}},
])
def test_scenario_errors(change):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(dict(BROWNIAN, **change))


def test_shipped_configs_parse():
    root = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'configs')
    for name in sorted(os.listdir(root)):
        with open(os.path.join(root, name)) as f:
            scenario = ScenarioConfig.from_dict(yaml.safe_load(f))
        scenario.check()

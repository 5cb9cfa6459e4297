# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

import argparse
import json
import os
import sys

import numpy as np
import pandas as pd
import yaml

import bridges
import checks
from diffusions import scale_speed
import utils
from utils.errors import BridgeSimError, ConfigError, InconclusiveError, ParamError

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def load_config(path, opts=None):
    try:
        with open(path, 'r') as f:
            config = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError('cannot read config {}: {}'.format(path, e))
    if not isinstance(config, dict):
        raise ConfigError('config {} must hold a mapping'.format(path))
    if opts:
        config = utils.override_cfg_from_list(config, opts)
    return config


def _out_dir(args, scenario):
    save_path = args.out or scenario.outputs['dir']
    utils.ensure_path(save_path)
    utils.set_log_path(save_path)
    return save_path


def _dump_json(obj, path):
    with open(path, 'w') as f:
        json.dump(utils.to_jsonable(obj), f, sort_keys=True, indent=1)
        f.write('\n')


def cmd_simulate(args, config):
    scenario = bridges.ScenarioConfig.from_dict(config)
    if args.seed is not None:
        scenario.ensemble['master_seed'] = args.seed
    model = scenario.check()
    bp = scenario.build_bridge(model)
    grid = scenario.build_grid()
    save_path = _out_dir(args, scenario)
    with open(os.path.join(save_path, 'config.yaml'), 'w') as f:
        yaml.safe_dump(config, f)
    timer = utils.Timer()
    ens = bridges.simulate_ensemble(bp, grid, scenario.ensemble['n_paths'], scenario.ensemble['master_seed'],
                                    parallelism=args.threads, method=scenario.method, progress=not args.quiet)
    if scenario.outputs['paths']:
        ens.write_csv(os.path.join(save_path, 'paths.csv'), stride=scenario.outputs['stride'])
    if scenario.outputs['reports']:
        summary = ens.summary()
        if hasattr(bp.h, 'start_se'):
            summary['h_standard_error'] = bp.h.start_se
        _dump_json(summary, os.path.join(save_path, 'summary.json'))
    utils.log('simulated {} {} paths of {} in {}, results in {}'.format(
        ens.n_paths, scenario.method, scenario.model, utils.time_str(timer.t()), save_path))
    return EXIT_OK


def cmd_verify(args, config):
    if args.suite not in checks.suites:
        raise ConfigError('unknown suite {!r}, available: {}'.format(args.suite, sorted(checks.suites)))
    scenario = bridges.ScenarioConfig.from_dict(config)
    save_path = _out_dir(args, scenario)
    reports = checks.run_suite(args.suite, scenario, seed=args.seed, parallelism=args.threads)
    out = [r.to_dict() for r in reports]
    _dump_json(out, os.path.join(save_path, 'verify_{}.json'.format(args.suite)))
    print(json.dumps(out, sort_keys=True, indent=1))
    failed = [r.name for r in reports if not r.passed]
    utils.log('suite {}: {} of {} checks passed{}'.format(
        args.suite, len(reports) - len(failed), len(reports),
        '' if not failed else ', failed: {}'.format(', '.join(failed))))
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_classify(args, config):
    scenario = bridges.ScenarioConfig.from_dict(config)
    model = scenario.build_model()
    if model.dim != 1:
        raise ParamError('boundary classification is 1-D only, {} has d={}'.format(scenario.model, model.dim))
    save_path = _out_dir(args, scenario)
    sd = scale_speed.SpeedDensity(scale_speed.ScaleFunction(model.spec, t=scenario.s))
    out = {endpoint: scale_speed.classify_boundary(sd, endpoint).to_dict() for endpoint in ('lower', 'upper')}
    _dump_json(out, os.path.join(save_path, 'boundaries.json'))
    print(json.dumps(utils.to_jsonable(out), sort_keys=True, indent=1))
    return EXIT_OK


def density_frame(scenario, model=None):
    """p(t - s, x, y), h(t, y) and the bridge drift on a y-grid at one time t."""
    model = model if model is not None else scenario.check()
    if model.dim != 1:
        raise ParamError('density tables are 1-D only')
    bp = scenario.build_bridge(model)
    settings = dict(scenario.density)
    t = float(settings.get('t', scenario.s + 0.5 * (scenario.horizon - scenario.s)))
    if not scenario.s < t < scenario.horizon:
        raise ConfigError('density.t must lie in (s, T*), got {}'.format(t))
    if 'y' in settings:
        lo, hi, n = settings['y']
    else:
        centre, scale = model.where(t - scenario.s, scenario.x, s=scenario.s)
        lo, hi, n = centre[0] - 6 * scale[0], centre[0] + 6 * scale[0], 201
    y = np.linspace(float(lo), float(hi), int(n))
    y = y[model.spec.domain.interior(y[:, None])][:, None]
    x = np.broadcast_to(scenario.x, y.shape)
    drift, floored = bp.drift_batch(t, y)
    with np.errstate(over='ignore'):
        h = np.exp(np.asarray(bp.h.log_h(t, y), dtype=float))
    frame = pd.DataFrame({'y': y[:, 0], 'p': model.density(t - scenario.s, x, y, s=scenario.s), 'h': h,
                          'drift': drift[:, 0], 'h_floor': floored})
    frame.insert(0, 't', t)
    return frame


def cmd_density(args, config):
    scenario = bridges.ScenarioConfig.from_dict(config)
    save_path = _out_dir(args, scenario)
    frame = density_frame(scenario)
    frame.to_csv(os.path.join(save_path, 'density.csv'), index=False, float_format='%.17g')
    utils.log('tabulated {} points at t={} into {}'.format(len(frame), frame['t'].iloc[0], save_path))
    return EXIT_OK


COMMANDS = {
    'simulate': cmd_simulate,
    'verify': cmd_verify,
    'classify': cmd_classify,
    'density': cmd_density,
}


def build_parser():
    parser = argparse.ArgumentParser(prog='bridgesim', description='simulate and verify Markov bridges')
    sub = parser.add_subparsers(dest='command')
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument('--config', '--config-file', dest='config', required=True)
        p.add_argument('--out', default=None)
        p.add_argument('--seed', type=int, default=None)
        p.add_argument('--threads', type=int, default=None)
        p.add_argument('--quiet', action='store_true')
        if name == 'verify':
            p.add_argument('--suite', default='all')
        p.add_argument(
            'opts',
            help='Modify config options using the command-line',
            default=None,
            nargs=argparse.REMAINDER,
        )
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        config = load_config(args.config, args.opts)
        return COMMANDS[args.command](args, config)
    except (ConfigError, ParamError) as e:
        utils.log('{}: {}'.format(type(e).__name__, e), 'error')
        return EXIT_USAGE
    except InconclusiveError as e:
        utils.log('{}: {} (trace: {})'.format(type(e).__name__, e, e.trace), 'error')
        return EXIT_FAIL
    except BridgeSimError as e:
        utils.log('{}: {} {}'.format(type(e).__name__, e, getattr(e, 'diagnostics', '') or ''), 'error')
        return EXIT_FAIL


if __name__ == '__main__':
    sys.exit(main())

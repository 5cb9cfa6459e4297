# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

from dataclasses import dataclass, field

import numpy as np

import diffusions
from utils.errors import BridgeSimError, ConfigError
from .bridge import BridgeProcess
from .h_functions import make_h, weak_family
from .integrators import METHODS, make_grid

DEFAULT_GRID = {'refinement': 'geometric', 'gamma': 2., 'n_steps': 2000, 'delta_min': None}
DEFAULT_ENSEMBLE = {'n_paths': 1000, 'master_seed': 0}
DEFAULT_OUTPUTS = {'paths': True, 'stride': 1, 'reports': True, 'dir': './save'}


def _finite(name, value):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError('{} must be numeric, got {!r}'.format(name, value))
    if not np.all(np.isfinite(arr)):
        raise ConfigError('{} must be finite, got {!r}'.format(name, value))
    return arr


def _section(cfg, key, defaults):
    value = cfg.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError('{} must be a mapping, got {!r}'.format(key, value))
    unknown = set(value) - set(defaults)
    if unknown:
        raise ConfigError('unknown {} fields: {}'.format(key, sorted(unknown)))
    out = dict(defaults)
    out.update(value)
    return out


@dataclass
class ScenarioConfig:
    model: str
    model_args: dict
    conditioning: str
    conditioning_args: dict
    s: float
    x: np.ndarray
    horizon: float
    grid: dict
    ensemble: dict
    method: str = 'euler'
    outputs: dict = field(default_factory=lambda: dict(DEFAULT_OUTPUTS))
    density: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, cfg):
        if not isinstance(cfg, dict):
            raise ConfigError('scenario must be a mapping, got {}'.format(type(cfg).__name__))
        if 'model' not in cfg:
            raise ConfigError('scenario needs a model')
        model = cfg['model']
        if model not in diffusions.models:
            raise ConfigError('unknown model {!r}, available: {}'.format(model, sorted(diffusions.models)))
        model_args = cfg.get('model_args') or {}
        if not isinstance(model_args, dict):
            raise ConfigError('model_args must be a mapping')

        start = cfg.get('start') or {}
        if 'x' not in start:
            raise ConfigError('scenario needs start.x')
        s = float(_finite('start.s', start.get('s', 0.)))
        x = np.atleast_1d(_finite('start.x', start['x']))
        if 'horizon' not in cfg:
            raise ConfigError('scenario needs a horizon')
        horizon = float(_finite('horizon', cfg['horizon']))
        if not s < horizon:
            raise ConfigError('start.s={} must precede the horizon {}'.format(s, horizon))

        conditioning = cfg.get('conditioning', 'strong')
        if conditioning not in ('strong', 'weak', 'indicator'):
            raise ConfigError('conditioning must be strong, weak or indicator in a scenario, got {!r}'.format(
                conditioning))
        cargs = dict(cfg.get('conditioning_args') or {})
        if conditioning == 'strong':
            if 'z' not in cargs:
                raise ConfigError('strong conditioning needs conditioning_args.z')
            _finite('conditioning_args.z', cargs['z'])
        elif conditioning == 'indicator':
            region = cargs.get('region')
            if region is None or len(region) != 2:
                raise ConfigError('indicator conditioning needs conditioning_args.region: [lo, hi]')
            try:
                cargs['region'] = [float(v) for v in region]
            except (TypeError, ValueError):
                raise ConfigError('indicator region must be numeric, got {!r}'.format(region))
        else:
            cargs.setdefault('family', 'constant')
            if cargs['family'] not in ('constant', 'exponential_tilt'):
                raise ConfigError('unknown weak family {!r}'.format(cargs['family']))

        grid = _section(cfg, 'grid', DEFAULT_GRID)
        if grid['refinement'] not in ('uniform', 'geometric'):
            raise ConfigError('grid.refinement must be uniform or geometric')
        for key in ('gamma', 'n_steps'):
            _finite('grid.' + key, grid[key])
        if grid['delta_min'] is not None:
            _finite('grid.delta_min', grid['delta_min'])
        ensemble = _section(cfg, 'ensemble', DEFAULT_ENSEMBLE)
        if int(ensemble['n_paths']) < 1:
            raise ConfigError('ensemble.n_paths must be >= 1')
        ensemble = {'n_paths': int(ensemble['n_paths']), 'master_seed': int(ensemble['master_seed'])}
        outputs = _section(cfg, 'outputs', DEFAULT_OUTPUTS)
        method = cfg.get('method', 'euler')
        if method not in METHODS:
            raise ConfigError('method must be one of {}, got {!r}'.format(METHODS, method))
        return cls(model, dict(model_args), conditioning, cargs, s, x, horizon, grid, ensemble, method,
                   outputs, dict(cfg.get('density') or {}), dict(cfg.get('verify') or {}), dict(cfg))

    def build_model(self):
        args = dict(self.model_args)
        if self.model == 'linear_gaussian':
            args.setdefault('horizon', self.horizon)
        try:
            return diffusions.make(self.model, **args)
        except TypeError as e:
            raise ConfigError('bad model_args for {}: {}'.format(self.model, e))

    def build_h(self, model=None):
        model = model if model is not None else self.build_model()
        start = (self.s, self.x)
        args = dict(self.conditioning_args)
        if self.conditioning == 'weak':
            family = args.pop('family')
            return weak_family(family, model, self.horizon, start, **args)
        return make_h(self.conditioning, model=model, horizon=self.horizon, start=start, **args)

    def build_bridge(self, model=None):
        return BridgeProcess.from_h(self.build_h(model))

    def build_grid(self):
        g = self.grid
        return make_grid(self.s, self.horizon, n_steps=int(g['n_steps']), refinement=g['refinement'],
                         gamma=float(g['gamma']), delta_min=g['delta_min'])

    def check(self):
        """Build every component once so parameter errors surface before simulating."""
        try:
            model = self.build_model()
            self.build_h(model)
            self.build_grid()
        except ConfigError:
            raise
        except BridgeSimError as e:
            raise ConfigError('invalid scenario: {}'.format(e))
        return model

# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

"""Path simulation for bridges and for the unconditioned diffusion.

Paths are simulated in chunks of CHUNK paths. Path i draws all of its
randomness from its own stream (master_seed, i) (or (master_seed, i, attempt)
when it is resampled), so the ensemble does not depend on the number of
worker threads.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

import utils
from utils.errors import EnsembleError, NumericsError, ParamError, TimeError
from diffusions.diffusions import as_state, make
from .bridge import BridgeProcess
from .h_functions import StrongH
from .kernels import kernel_table, sample_terminal

CHUNK = 256
MAX_ATTEMPTS = 3
FAILURE_LIMIT = 0.01
DRIFT_CAP = 10.
EPS_DOM = 1e-12
PIN_TOL = 0.05


@dataclass(frozen=True)
class TimeGrid:
    """Nodes s = t_0 < ... < t_N; for bridge grids t_N = horizon - delta_min."""
    s: float
    horizon: float
    nodes: np.ndarray
    refinement: str = 'geometric'
    gamma: float = 2.

    @property
    def n_steps(self):
        return len(self.nodes) - 1

    @property
    def delta_min(self):
        return self.horizon - self.nodes[-1]

    def nearest(self, t):
        return int(np.argmin(np.abs(self.nodes - t)))

    @classmethod
    def uniform(cls, s, end, n_steps):
        """Grid ending exactly at `end`, for unconditioned paths."""
        if not end > s or int(n_steps) < 1:
            raise ParamError('uniform grid needs end > s and n_steps >= 1')
        return cls(float(s), float(end), np.linspace(s, end, int(n_steps) + 1), 'uniform', 1.)

    @classmethod
    def from_nodes(cls, nodes, horizon):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 1 or np.any(np.diff(nodes) <= 0):
            raise ParamError('grid nodes must be strictly increasing')
        if not nodes[-1] < horizon:
            raise ParamError('grid nodes must stay strictly before the horizon')
        return cls(float(nodes[0]), float(horizon), nodes, 'custom', 1.)


def make_grid(s, horizon, n_steps=2000, refinement='geometric', gamma=2., delta_min=None, end=None):
    """horizon - t_k = delta_min + (horizon - s - delta_min) (1 - k/N)^gamma.

    uniform is gamma = 1. With an infinite horizon the grid is uniform on
    [s, end].
    """
    s, horizon, n_steps = float(s), float(horizon), int(n_steps)
    if n_steps < 0:
        raise ParamError('n_steps must be >= 0, got {}'.format(n_steps))
    if not np.isfinite(horizon):
        if end is None:
            raise ParamError('an infinite horizon needs a finite grid end')
        if n_steps == 0:
            return TimeGrid(s, horizon, np.array([s]), 'uniform', 1.)
        return TimeGrid(s, horizon, np.linspace(s, float(end), n_steps + 1), 'uniform', 1.)
    if not s < horizon:
        raise TimeError('grid needs s < horizon, got s={} T*={}'.format(s, horizon))
    if refinement == 'uniform':
        gamma = 1.
    elif refinement != 'geometric':
        raise ParamError('unknown refinement {!r}'.format(refinement))
    gamma = float(gamma)
    if gamma < 1:
        raise ParamError('geometric refinement needs gamma >= 1, got {}'.format(gamma))
    span = horizon - s
    delta_min = 1e-4 * span if delta_min is None else float(delta_min)
    if not 0 < delta_min < span:
        raise ParamError('delta_min must lie in (0, T* - s), got {}'.format(delta_min))
    if n_steps == 0:
        return TimeGrid(s, horizon, np.array([s]), refinement, gamma)
    k = np.arange(n_steps + 1)
    nodes = horizon - (delta_min + (span - delta_min) * (1. - k / n_steps) ** gamma)
    nodes[0] = s
    return TimeGrid(s, horizon, nodes, refinement, gamma)


@dataclass
class Path:
    grid: TimeGrid
    states: np.ndarray
    terminal: Optional[np.ndarray]
    seed: tuple
    diagnostics: dict = field(default_factory=dict)

    @property
    def failed(self):
        return bool(self.diagnostics.get('failed', False))


@dataclass
class PathEnsemble:
    grid: TimeGrid
    states: np.ndarray
    terminal: Optional[np.ndarray]
    master_seed: int
    failed: np.ndarray
    diagnostics: dict
    method: str = 'euler'
    target: Optional[np.ndarray] = None

    @property
    def n_paths(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[-1]

    def at(self, t):
        return self.states[~self.failed, self.grid.nearest(t)]

    def final(self):
        return self.states[~self.failed, -1]

    def terminal_states(self):
        if self.terminal is None:
            return None
        return self.terminal[~self.failed]

    def path(self, i):
        term = None if self.terminal is None else self.terminal[i]
        return Path(self.grid, self.states[i], term, (self.master_seed, i),
                    {'failed': bool(self.failed[i])})

    def to_frame(self, stride=1):
        """Long format (path_id, t, x_1..x_d); failed paths are left out, ids are kept."""
        stride = max(int(stride), 1)
        sel = np.arange(0, self.grid.n_steps + 1, stride)
        times = self.grid.nodes[sel]
        ids = np.flatnonzero(~self.failed)
        block = self.states[ids][:, sel]
        if self.terminal is not None:
            times = np.append(times, self.grid.horizon)
            block = np.concatenate([block, self.terminal[ids][:, None, :]], axis=1)
        n, m, d = block.shape
        frame = pd.DataFrame(block.reshape(n * m, d), columns=['x_{}'.format(j + 1) for j in range(d)])
        frame.insert(0, 't', np.tile(times, n))
        frame.insert(0, 'path_id', np.repeat(ids, m))
        return frame

    def write_csv(self, path, stride=1):
        self.to_frame(stride).to_csv(path, index=False, float_format='%.17g')

    def summary(self, tol=PIN_TOL):
        ok = self.states[~self.failed]
        ddof = 1 if len(ok) > 1 else 0
        out = {
            'method': self.method,
            'n_paths': self.n_paths,
            'n_failed': int(self.failed.sum()),
            'master_seed': self.master_seed,
            'nodes': self.grid.nodes,
            'mean': ok.mean(axis=0),
            'var': ok.var(axis=0, ddof=ddof),
            'diagnostics': dict(self.diagnostics),
        }
        term = self.terminal_states()
        if term is not None:
            out['terminal'] = {'t': self.grid.horizon, 'mean': term.mean(axis=0),
                               'var': term.var(axis=0, ddof=ddof)}
        if self.target is not None:
            dist = np.linalg.norm(ok[:, -1] - self.target, axis=-1)
            out['pinning'] = {'tol': tol, 'fraction': float(np.mean(dist < tol)),
                              'q99': float(np.quantile(dist, 0.99))}
        return utils.to_jsonable(out)


def _counters():
    return {'h_floor': 0, 'projections': 0, 'capped_steps': 0, 'non_finite': 0}


def _euler_block(drift_fn, spec, grid, x0, noise, cap=True):
    """Vectorised Euler-Maruyama for m paths with pre-drawn noise (m, N, d)."""
    m = noise.shape[0]
    d = spec.dim
    nodes = grid.nodes
    X = np.broadcast_to(x0, (m, d)).astype(float)
    states = np.full((m, len(nodes), d), np.nan)
    states[:, 0] = X
    alive = np.ones(m, dtype=bool)
    counters = _counters()
    for k in range(grid.n_steps):
        idx = np.flatnonzero(alive)
        if not idx.size:
            break
        t, dt = nodes[k], nodes[k + 1] - nodes[k]
        Xa = X[idx]
        drift, floored = drift_fn(t, Xa)
        sig = spec.sigma(t, Xa)
        disp = drift * dt
        if cap:
            snorm = np.linalg.norm(sig, axis=(-2, -1))
            limit = DRIFT_CAP * snorm * np.sqrt(dt)
            dn = np.linalg.norm(disp, axis=-1)
            over = (snorm > 0) & (dn > limit)
            if over.any():
                disp[over] *= (limit[over] / dn[over])[:, None]
                counters['capped_steps'] += int(over.sum())
        Xn = Xa + disp + np.sqrt(dt) * np.einsum('mij,mj->mi', sig, noise[idx, k])
        bad_value = ~np.all(np.isfinite(Xn), axis=-1) & ~floored
        Xn, moved = spec.domain.project(np.where(np.isfinite(Xn), Xn, 0.), EPS_DOM)
        counters['projections'] += int((moved & ~floored & ~bad_value).sum())
        counters['h_floor'] += int(floored.sum())
        counters['non_finite'] += int(bad_value.sum())
        dead = floored | bad_value
        X[idx] = Xn
        states[idx[~dead], k + 1] = Xn[~dead]
        alive[idx[dead]] = False
    return states, alive, counters


def _draw_noise(rngs, n_steps, d):
    noise = np.stack([rng.standard_normal((n_steps, d)) for rng in rngs]) if rngs else np.empty((0, n_steps, d))
    extra = np.array([rng.random() for rng in rngs])
    return noise, extra


def _bridge_block(bp, grid, rngs):
    noise, v = _draw_noise(rngs, grid.n_steps, bp.dim)
    states, ok, counters = _euler_block(bp.drift_batch, bp.spec, grid, bp.x, noise)
    terminal = _terminal(bp, grid, states, ok, v)
    return states, terminal, ok, counters


def _terminal(bp, grid, states, ok, v):
    if not np.isfinite(bp.horizon):
        return None
    last = states[:, -1]
    terminal = np.full_like(last, np.nan)
    if bp.h.kind == 'strong':
        terminal[:] = bp.h.z
        return terminal
    if not ok.any():
        return terminal
    drawn = sample_terminal(bp.h, grid.nodes[-1], last[ok], v[ok])
    if drawn is None:
        return None
    terminal[ok] = drawn
    return terminal


def _exact_brownian_block(bp, grid, rngs):
    sigma = float(bp.h.model.params.get('sigma', 1.))
    d = bp.dim
    tau = grid.nodes - grid.s
    T = grid.horizon - grid.s
    z = bp.h.z
    steps = np.diff(np.append(tau, T))
    states = np.empty((len(rngs), len(tau), d))
    for i, rng in enumerate(rngs):
        xi = rng.standard_normal((len(tau), d))
        W = np.cumsum(np.sqrt(steps)[:, None] * xi, axis=0)
        W_nodes = np.vstack([np.zeros((1, d)), W[:-1]])
        W_T = W[-1]
        frac = (tau / T)[:, None]
        states[i] = bp.x + sigma * (W_nodes - frac * W_T) + (z - bp.x) * frac
    terminal = np.broadcast_to(z, (len(rngs), d)).copy()
    return states, terminal, np.ones(len(rngs), dtype=bool), _counters()


def _exact_markov_block(bp, grid, rngs):
    n = grid.n_steps
    states = np.empty((len(rngs), n + 1, 1))
    v_term = np.empty(len(rngs))
    for i, rng in enumerate(rngs):
        u = rng.random(n + 1)
        x = bp.x.copy()
        states[i, 0] = x
        for k in range(n):
            table = kernel_table(bp.h, grid.nodes[k], x, grid.nodes[k + 1])
            x = np.array([table.ppf(u[k])])
            states[i, k + 1] = x
        v_term[i] = u[n]
    ok = np.ones(len(rngs), dtype=bool)
    return states, _terminal(bp, grid, states, ok, v_term), ok, _counters()


def _unconditioned_block(spec, x0, grid, rngs):
    noise, _ = _draw_noise(rngs, grid.n_steps, spec.dim)

    def drift_fn(t, X):
        return spec.b(t, X), np.zeros(len(X), dtype=bool)

    states, ok, counters = _euler_block(drift_fn, spec, grid, x0, noise, cap=False)
    return states, None, ok, counters


def _run_chunk(block, master_seed, indices):
    """Simulate `indices`, resampling failed paths on fresh sub-streams."""
    indices = list(indices)
    rngs = [utils.streams.path_stream(master_seed, i) for i in indices]
    states, terminal, ok, counters = block(rngs)
    counters['resampled'] = 0
    for attempt in range(1, MAX_ATTEMPTS + 1):
        bad = np.flatnonzero(~ok)
        if not bad.size:
            break
        counters['resampled'] += int(bad.size)
        rngs = [utils.streams.path_stream(master_seed, indices[j], attempt) for j in bad]
        s2, t2, ok2, c2 = block(rngs)
        states[bad] = s2
        if terminal is not None and t2 is not None:
            terminal[bad] = t2
        ok[bad] = ok2
        for key, value in c2.items():
            counters[key] += value
    return states, terminal, ok, counters


def _simulate(block, grid, n_paths, master_seed, parallelism=None, progress=False, desc='paths'):
    n_paths = int(n_paths)
    if n_paths < 1:
        raise ParamError('n_paths must be >= 1, got {}'.format(n_paths))
    chunks = [range(i, min(i + CHUNK, n_paths)) for i in range(0, n_paths, CHUNK)]
    workers = max(1, int(parallelism or os.cpu_count() or 1))
    run = partial(_run_chunk, block, master_seed)
    timer = utils.Timer()
    if workers == 1 or len(chunks) == 1:
        results = [run(c) for c in tqdm(chunks, desc=desc, disable=not progress, leave=False)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(run, chunks), total=len(chunks), desc=desc,
                                disable=not progress, leave=False))
    states = np.concatenate([r[0] for r in results])
    terminal = None if results[0][1] is None else np.concatenate([r[1] for r in results])
    ok = np.concatenate([r[2] for r in results])
    diagnostics = {k: 0 for k in results[0][3]}
    for r in results:
        for k, v in r[3].items():
            diagnostics[k] += v
    diagnostics['failed'] = int((~ok).sum())
    utils.log('{}: {} paths x {} steps in {} ({})'.format(
        desc, n_paths, grid.n_steps, utils.time_str(timer.t()),
        ', '.join('{}={}'.format(k, v) for k, v in sorted(diagnostics.items()))), 'debug')
    return states, terminal, ~ok, diagnostics


METHODS = ('euler', 'exact_brownian', 'exact_markov')


def _check_grid(bp, grid):
    if abs(grid.s - bp.s) > 1e-12 * max(1., abs(bp.s)) or grid.horizon != bp.horizon:
        raise ParamError('grid [{}, {}) does not match the bridge [{}, {})'.format(
            grid.s, grid.horizon, bp.s, bp.horizon))


def _block_for(bp, method):
    if method == 'euler':
        return partial(_bridge_block, bp)
    if method == 'exact_brownian':
        if bp.h.kind != 'strong' or bp.h.model.name != 'brownian':
            raise ParamError('exact Brownian sampling needs a brownian model with strong conditioning')
        return partial(_exact_brownian_block, bp)
    if method == 'exact_markov':
        if bp.dim != 1 or bp.h.model is None:
            raise ParamError('exact Markov-bridge sampling needs a 1-D density model')
        return partial(_exact_markov_block, bp)
    raise ParamError('unknown simulation method {!r}, expected one of {}'.format(method, METHODS))


def simulate_ensemble(bp, grid, n_paths, master_seed, parallelism=None, method='euler', progress=False):
    _check_grid(bp, grid)
    block = _block_for(bp, method)
    states, terminal, failed, diagnostics = _simulate(lambda rngs: block(grid, rngs), grid, n_paths,
                                                      master_seed, parallelism, progress, desc=method)
    rate = diagnostics['failed'] / float(n_paths)
    if rate > FAILURE_LIMIT:
        raise EnsembleError('{} of {} paths failed after {} resampling attempts'.format(
            diagnostics['failed'], n_paths, MAX_ATTEMPTS), diagnostics)
    return PathEnsemble(grid, states, terminal, int(master_seed), failed, diagnostics, method, bp.target)


def _single(bp, grid, seed, index, method):
    _check_grid(bp, grid)
    block = _block_for(bp, method)
    states, terminal, ok, counters = _run_chunk(lambda rngs: block(grid, rngs), seed, [index])
    diagnostics = dict(counters, failed=not bool(ok[0]))
    if counters['non_finite'] and not ok[0]:
        raise NumericsError('path {} produced non-finite states'.format(index), diagnostics)
    term = None if terminal is None else terminal[0]
    return Path(grid, states[0], term, (int(seed), int(index)), diagnostics)


def euler_maruyama(bp, grid, seed, index=0):
    return _single(bp, grid, seed, index, 'euler')


def exact_markov_bridge(bp, grid, seed, index=0):
    return _single(bp, grid, seed, index, 'exact_markov')


def exact_brownian_bridge(x, z, horizon, grid, seed, index=0, s=0., sigma=1.):
    """x + sigma (W_u - (u/T) W_T) + (z - x) u/T with u = t - s, T = horizon - s."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    model = make('brownian', dim=len(x), sigma=sigma)
    bp = BridgeProcess.from_h(StrongH(model, horizon, z, start=(s, x)))
    return _single(bp, grid, seed, index, 'exact_brownian')


def simulate_unconditioned(model, grid, n_paths, master_seed, x0=None, parallelism=None, progress=False):
    """Euler paths of the base diffusion from x0 at grid.s; model may be a DensityModel or a DiffusionSpec."""
    spec = getattr(model, 'spec', model)
    if x0 is None:
        raise ParamError('simulate_unconditioned needs a start state x0')
    x0 = as_state(x0, spec.dim).reshape(spec.dim)
    block = partial(_unconditioned_block, spec, x0, grid)
    states, _, failed, diagnostics = _simulate(block, grid, n_paths, master_seed, parallelism, progress,
                                               desc='unconditioned')
    return PathEnsemble(grid, states, None, int(master_seed), failed, diagnostics, 'unconditioned')

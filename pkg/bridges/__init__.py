# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

from .h_functions import (make_h, register, h_functions, HFunction, StrongH, WeakH, IndicatorH,
                          ExplicitH, weak_family, h_eval, grad_h, H_FLOOR)
from .bridge import BridgeProcess, bridge_drift, h_transform_transition
from .kernels import KernelTable, kernel_table, terminal_table, sample_terminal
from .integrators import (TimeGrid, Path, PathEnsemble, make_grid, euler_maruyama, exact_brownian_bridge,
                          exact_markov_bridge, simulate_ensemble, simulate_unconditioned)
from .scenario import ScenarioConfig

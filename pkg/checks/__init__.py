# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

from .checks import (checks, register, run, VerificationReport, ks_one_sample, ks_two_sample, ks_critical,
                     within_se, with_rerun)
from .assumptions import (chapman_kolmogorov_check, dual_limit_check, density_sup_check, potential_density,
                          bounded_potential_check)
from .laws import (martingale_check, terminal_law_check, transition_law_check, bridge_hit_check,
                   local_martingale_residual, TestFunction, bump_function, h_test_function)
from .laplace import laplace_limit_check
from .preconditions import strong_solution_preconditions, lipschitz_estimate, nested_sets
from .suites import suites, run_suite

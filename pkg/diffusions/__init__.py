# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

from .diffusions import make, builtin_model, register, models
from .diffusions import (DomainBox, DiffusionSpec, ReferenceMeasure, DensityModel, a_matrix,
                         eval_density, eval_log_density, eval_grad_log, total_mass, fd_gradient)
from . import brownian
from . import ou
from . import bessel
from . import geometric_bm
from . import gaussian
from . import scale_speed

# ----------------------------------------------------------------------
# bridgesim: simulation and verification of Markov bridges.
# ----------------------------------------------------------------------

"""Counter-based random streams.

Every path (and every resampling attempt of a path) gets its own Philox
stream derived from (master_seed, path index[, attempt]). A path's draws
therefore never depend on how paths are batched or scheduled on threads.
"""

import numpy as np


def stream(master_seed, *key):
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def path_stream(master_seed, index, attempt=0):
    if attempt == 0:
        return stream(master_seed, index)
    return stream(master_seed, index, attempt)

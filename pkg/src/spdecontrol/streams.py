"""Counter-based random streams keyed by run seed and a purpose tuple.

Every stochastic quantity draws from its own Philox stream, keyed by
``(seed, purpose, ...indices)``, so results never depend on evaluation order
or on how work is split between threads.
"""

import numpy as np

TRUTH = 1
INITIAL = 2
PREDICT = 3
RESAMPLE = 4
SGD = 5
COST = 6
ORACLE = 7


def stream(seed, *key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key))))


def brownian_increments(rng, n_steps, n_channels, dt, substeps=1, batch=()):
    """Gaussian increments of variance ``dt``, shape ``(n_steps, *batch, n_channels)``.

    With ``substeps > 1`` the increments are drawn on a grid ``substeps`` times
    finer and summed, so a coarse run and a fine run keyed identically see the
    same Brownian path.
    """
    batch = tuple(batch)
    fine = rng.standard_normal((n_steps * substeps,) + batch + (n_channels,))
    fine *= np.sqrt(dt / substeps)
    if substeps == 1:
        return fine
    return fine.reshape((n_steps, substeps) + batch + (n_channels,)).sum(axis=1)

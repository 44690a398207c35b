"""Semi-implicit Euler-Maruyama stepping of the Galerkin-discretized state.

Each step solves

    (M + k K) x+ = M x + k F(x) + k M u + sum_i G_i(x) dW^i

with drift and noise loads taken at the old state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import DivergenceError
from .streams import brownian_increments


@dataclass
class PathRealization:
    """States ``x_n .. x_{N_T}`` with the increments that produced them.

    ``dW`` has shape ``(m, N)`` and ``dB`` shape ``(m, d)`` for ``m`` steps;
    ``base_index`` is the global index ``n`` of ``states[0]``.
    """

    states: np.ndarray
    dW: np.ndarray
    dB: np.ndarray
    base_index: int
    kappa: float

    @property
    def n_steps(self):
        return self.dW.shape[0]


@dataclass
class ObservationPath:
    """Observation increments ``dY_j`` over ``[t_j, t_{j+1}]``, shape ``(N_T, d)``."""

    increments: np.ndarray

    @property
    def dim(self):
        return self.increments.shape[1]

    def increment(self, n, u=None):
        return self.increments[n]


def step_state(prob, x, u, dW, kappa, *, solver=None, index=None):
    """One implicit step; ``x``/``dW`` may carry a leading batch axis."""
    ops = prob.ops
    solver = solver or ops.shifted(kappa)
    rhs = ops.mass.matvec(x) + kappa * ops.mass.matvec(np.broadcast_to(u, np.shape(x)))
    with np.errstate(over="ignore", invalid="ignore"):
        rhs = rhs + prob.explicit_load(x, dW, kappa)
    if not np.all(np.isfinite(rhs)):
        raise DivergenceError(f"state diverged at time index {index}", stage="state", index=index)
    return solver.solve(rhs)


def linear_recurrence(ops, solver, x0, forcing, reverse=False):
    """Iterate ``(M + k K) x_{j+1} = M x_j + forcing_j``.

    ``forcing`` has shape ``(m, *batch, dim)``; returns ``(m + 1, *batch, dim)``
    with ``x0`` first.  With ``reverse=True`` the recursion runs from the last
    slot backwards (``x0`` is then the terminal value and is stored last).
    """
    m = forcing.shape[0]
    out = np.empty((m + 1,) + np.shape(forcing)[1:])
    if reverse:
        forcing = forcing[::-1]
    if solver.diagonal and m > 1:
        a = ops.mass.diag * solver._inv
        b = forcing * solver._inv
        out[0] = x0
        for k in range(ops.dim):
            zi = (a[k] * np.asarray(x0)[..., k])[None]
            out[1:, ..., k] = lfilter([1.0], [1.0, -a[k]], b[..., k], axis=0, zi=zi)[0]
    else:
        out[0] = x0
        for j in range(m):
            out[j + 1] = solver.solve(ops.mass.matvec(out[j]) + forcing[j])
    if reverse:
        out = out[::-1]
    return out


def propagate(prob, x_start, controls, dW, kappa, *, base_index=0, fast=True):
    """States under the control sequence ``controls`` (shape ``(m, dim)``) and
    increments ``dW`` (shape ``(m, *batch, N)``)."""
    ops = prob.ops
    solver = ops.shifted(kappa)
    controls = np.asarray(controls, dtype=float)
    m = controls.shape[0]
    batch = np.shape(dW)[1:-1]
    x_start = np.broadcast_to(x_start, batch + (ops.dim,))
    if fast and prob.linear:
        u = controls.reshape((m,) + (1,) * len(batch) + (ops.dim,))
        forcing = kappa * ops.mass.matvec(u) + prob.noise.load(ops, None, dW)
        forcing = np.broadcast_to(forcing, (m,) + batch + (ops.dim,))
        if not np.all(np.isfinite(forcing)):
            raise DivergenceError("non-finite forcing", stage="state", index=base_index)
        return linear_recurrence(ops, solver, x_start, forcing)
    states = np.empty((m + 1,) + batch + (ops.dim,))
    states[0] = x_start
    for j in range(m):
        states[j + 1] = step_state(prob, states[j], controls[j], dW[j], kappa,
                                   solver=solver, index=base_index + j)
    if not np.all(np.isfinite(states[-1])):
        raise DivergenceError("state diverged", stage="state", index=base_index + m)
    return states


def simulate_path(prob, x_start, controls, rng=None, *, base_index=0, dW=None, dB=None, fast=True):
    """One controlled realization from ``x_start`` at ``t_n`` to ``T``.

    Increments are drawn from ``rng`` (first ``dW``, then ``dB``) unless given.
    """
    kappa = prob.dt
    m = np.shape(controls)[0]
    if dW is None:
        dW = brownian_increments(rng, m, prob.noise.n_modes, kappa)
    if dB is None:
        dB = brownian_increments(rng, m, prob.obs_dim, kappa)
    states = propagate(prob, x_start, controls, dW, kappa, base_index=base_index, fast=fast)
    return PathRealization(states, dW, dB, base_index, kappa)


def observation_increments(prob, states, dB):
    """``dY_j = h(x_{j+1}) k + dB_j``: the observation over a step uses the state
    at its end, matching the filter's one-step likelihood."""
    return prob.observe(states[1:]) * prob.dt + dB


def simulate_truth(prob, x0, controls, rng=None, *, dW=None, dB=None):
    """Ground-truth open-loop path plus the synthetic observation stream."""
    path = simulate_path(prob, x0, controls, rng, dW=dW, dB=dB)
    return path, ObservationPath(observation_increments(prob, path.states, path.dB))


class ClosedLoopTruth:
    """Ground truth driven by the controls as they are committed.

    Increments are fixed up front, so the realized noise does not depend on
    the controls.  ``increment(n, u)`` advances the hidden state from ``t_n``
    with control ``u`` and returns ``dY_n``.
    """

    def __init__(self, prob, rng, x0=None, substeps=1):
        self.prob = prob
        m = prob.n_steps
        self.dW = brownian_increments(rng, m, prob.noise.n_modes, prob.dt, substeps)
        self.dB = brownian_increments(rng, m, prob.obs_dim, prob.dt, substeps)
        self.states = np.empty((m + 1, prob.ops.dim))
        self.states[0] = prob.x0 if x0 is None else x0
        self.controls = np.zeros((m, prob.ops.dim))
        self.increments = np.full((m, prob.obs_dim), np.nan)
        self._solver = prob.ops.shifted(prob.dt)

    @property
    def dim(self):
        return self.prob.obs_dim

    def increment(self, n, u):
        self.controls[n] = u
        x = step_state(self.prob, self.states[n], u, self.dW[n], self.prob.dt,
                       solver=self._solver, index=n)
        self.states[n + 1] = x
        self.increments[n] = self.prob.observe(x) * self.prob.dt + self.dB[n]
        return self.increments[n]

    def observations(self):
        return ObservationPath(self.increments.copy())

"""Single-realization backward sweep for the adjoint pair ``(Q, q1)`` and ``(C, c2)``.

Conditional expectations in the backward scheme are replaced by the values of
one realization, so every quantity here is attached to a single forward path:

    c2_j = dB_j C_{j+1} / k
    C_j  = C_{j+1} + k L(x_j, u_j)
    q1_j = dW_j Q_{j+1} / k
    (M + k K) Q_j = M Q_{j+1} + k M_{F'(x_j)} Q_{j+1} + sum_i dW^i M_{G_i'(x_j)} Q_{j+1}
                    + k grad_x L(x_j, u_j) + k sum_k grad h^k(x_j)^* c2^k_j
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .forward import linear_recurrence


@dataclass
class AdjointPath:
    """Backward realization over ``t_n .. T`` (``m`` steps).

    ``Q`` is ``(m + 1, dim)``, ``C`` is ``(m + 1,)`` and ``c2`` is ``(m, d)``.
    ``q1`` is formed on demand from the stored increments since it is never
    needed by the gradient itself.
    """

    Q: np.ndarray
    C: np.ndarray
    c2: np.ndarray
    dW: np.ndarray
    base_index: int
    kappa: float

    @property
    def n_steps(self):
        return self.c2.shape[0]

    @property
    def q1(self):
        """``(m, N, dim)`` martingale loadings ``dW^i_j Q_{j+1} / k``."""
        return self.dW[:, :, None] * self.Q[1:, None, :] / self.kappa


def terminal_condition(prob, x_T):
    """``(Q_T, C_T)`` with ``M Q_T = grad Phi(x_T)`` and ``C_T = Phi(x_T)``."""
    ops = prob.ops
    Q = ops.mass_solve(prob.cost.terminal_grad(ops, x_T))
    return Q, float(prob.cost.terminal(ops, x_T))


def step_backward_C(prob, C_next, x, u, dB, kappa, index=0):
    """One step of the scalar backward equation; returns ``(C_j, c2_j)``."""
    c2 = np.asarray(dB, dtype=float) * C_next / kappa
    C = C_next + kappa * float(prob.cost.running(prob.ops, x, u, index))
    return C, c2


def step_backward_Q(prob, Q_next, x, u, dW, c2, kappa, *, solver=None, index=0):
    """One implicit step of the discrete backward SPDE; returns ``(Q_j, q1_j)``."""
    ops = prob.ops
    solver = solver or ops.shifted(kappa)
    dW = np.asarray(dW, dtype=float)
    rhs = ops.mass.matvec(Q_next)
    field = prob.adjoint_field(x, dW, kappa)
    if field is not None:
        rhs = rhs + ops.load(field * ops.evaluate(Q_next))
    rhs = (rhs + kappa * prob.cost.grad_x(ops, x, u, index)
           + kappa * prob.observation.adjoint_load(ops, x, c2))
    if not np.all(np.isfinite(rhs)):
        raise DivergenceError(f"adjoint diverged at time index {index}", stage="adjoint", index=index)
    q1 = dW[:, None] * np.asarray(Q_next)[None, :] / kappa
    return solver.solve(rhs), q1


def solve_adjoint_path(prob, path, controls, *, fast=True):
    """Backward sweep attached to ``path`` (a :class:`PathRealization`).

    ``controls`` is ``(m, dim)`` and aligned with ``path.states[:-1]``.
    """
    ops = prob.ops
    kappa = path.kappa
    x = path.states
    m = path.n_steps
    base = path.base_index
    controls = np.asarray(controls, dtype=float)

    Q_T, C_T = terminal_condition(prob, x[-1])
    running = prob.cost.running_path(ops, x[:-1], controls, base)
    # accumulate from the end in the same order as the sequential recursion
    seq = np.concatenate(([C_T], kappa * running[::-1]))
    C = np.cumsum(seq)[::-1]
    c2 = path.dB * (C[1:, None] / kappa)
    if not np.all(np.isfinite(C)):
        raise DivergenceError("non-finite cost along the path", stage="adjoint", index=base)

    solver = ops.shifted(kappa)
    # everything except the Q-coupling is known along the whole path up front
    forcing = kappa * (prob.cost.grad_x_path(ops, x[:-1], controls, base)
                       + prob.observation.adjoint_load(ops, x[:-1], c2))
    if not np.all(np.isfinite(forcing)):
        raise DivergenceError("non-finite adjoint forcing", stage="adjoint", index=base)
    field = prob.adjoint_field(x[:-1], path.dW, kappa) if m else None
    if field is None and fast:
        Q = linear_recurrence(ops, solver, Q_T, forcing, reverse=True)
    else:
        Q = np.empty((m + 1, ops.dim))
        Q[m] = Q_T
        for i in range(m - 1, -1, -1):
            rhs = ops.mass.matvec(Q[i + 1]) + forcing[i]
            if field is not None:
                rhs += ops.load(field[i] * ops.evaluate(Q[i + 1]))
            Q[i] = solver.solve(rhs)
    if not np.all(np.isfinite(Q)):
        raise DivergenceError("adjoint diverged", stage="adjoint", index=base)
    return AdjointPath(Q, C, c2, path.dW, base, kappa)

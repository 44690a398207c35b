"""Independent reference solutions used to check the solver: the scalar Riccati
equation, the scalar Kalman filter, and a discretization refinement study."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import streams
from .control import ControlSchedule, SgdConfig, evaluate_cost, inner_loop, run_fe_pf_sgd
from .filtering import run_filter
from .forward import ClosedLoopTruth, simulate_truth
from .problems import heat_problem, kalman_oracle_problem, lq_oracle_problem


def riccati(lam, T, n_steps):
    """``p`` on a uniform grid of ``n_steps`` intervals solving
    ``-p' = -2 lam p - p^2 + 1``, ``p(T) = 1``, by classical RK4 backwards in time."""
    h = T / n_steps
    rhs = lambda p: 2.0 * lam * p + p * p - 1.0  # noqa: E731  (dp/dt)
    p = np.empty(n_steps + 1)
    p[-1] = 1.0
    for k in range(n_steps, 0, -1):
        y = p[k]
        k1 = rhs(y)
        k2 = rhs(y - 0.5 * h * k1)
        k3 = rhs(y - 0.5 * h * k2)
        k4 = rhs(y - h * k3)
        p[k - 1] = y - h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return p


def riccati_on_grid(lam, T, dt, refine=100):
    """Riccati solution sampled on the time grid of step ``dt`` (integrated at ``dt / refine``)."""
    n = round(T / dt)
    return riccati(lam, T, n * refine)[::refine]


@dataclass
class RiccatiReport:
    optimal_cost: float
    sgd_cost: float
    cost_rel_err: float
    feedback: float
    committed: float
    feedback_rel_err: float
    controls: np.ndarray

    @property
    def passed(self):
        return self.cost_rel_err <= 0.02 and self.feedback_rel_err <= 0.05


def riccati_study(lam=1.0, T=1.0, x0=1.0, dt=1e-3, n_iterations=20000, learning_rate=0.5,
                  decay=100.0, seed=0):
    """Optimize the noise-free one-mode problem at ``t = 0`` with decaying-step SGD
    and compare to the Riccati solution."""
    prob = lq_oracle_problem(lam, T, x0, dt)
    p = riccati_on_grid(lam, T, dt)
    cfg = SgdConfig(learning_rate=learning_rate, n_iterations=n_iterations, decay=decay, seed=seed)
    schedule = inner_loop(prob, prob.x0[None, :], ControlSchedule.zeros(prob), cfg)
    optimal = 0.5 * p[0] * x0 * x0
    cost = evaluate_cost(prob, schedule.controls, 1, seed).total
    feedback = -p[0] * x0
    u0 = float(schedule.committed[0])
    return RiccatiReport(optimal, cost, abs(cost - optimal) / optimal, feedback, u0,
                         abs(u0 - feedback) / abs(feedback), schedule.controls[:, 0])


def kalman_filter(a, sigma, H, kappa, m0, P0, z):
    """Exact filter for ``x+ = a (x + sigma dW)``, ``z = H x+ + v``, ``v ~ N(0, kappa)``.

    Returns posterior means and variances at ``t_0 .. t_N``.
    """
    n = len(z)
    m = np.empty(n + 1)
    P = np.empty(n + 1)
    m[0], P[0] = m0, P0
    for j in range(n):
        mp = a * m[j]
        Pp = a * a * (P[j] + sigma * sigma * kappa)
        S = H * H * Pp + kappa
        K = Pp * H / S
        m[j + 1] = mp + K * (z[j] - H * mp)
        P[j + 1] = (1.0 - K * H) * Pp
    return m, P


@dataclass
class KalmanReport:
    sizes: tuple
    rmse: np.ndarray
    stationary_std: float

    @property
    def ratios(self):
        return self.rmse[1:] / self.rmse[:-1]

    @property
    def passed(self):
        return bool(self.ratios[-1] <= 0.6 and self.rmse[-1] <= 0.1 * self.stationary_std)


def kalman_study(sizes=(100, 1000, 10000), lam=1.0, sigma=1.0, gain=10.0, T=1.0, dt=0.01,
                 n_repeats=4, seed=0):
    """RMSE between particle and Kalman posterior means, pooled over time steps
    and ``n_repeats`` independent filter seeds on one observation record."""
    prob = kalman_oracle_problem(lam, sigma, gain, T, dt)
    rng = streams.stream(seed, streams.ORACLE)
    x0 = prob.x0 + prob.initial_std * rng.standard_normal(1)
    zero = np.zeros((prob.n_steps, 1))
    _, obs = simulate_truth(prob, x0, zero, rng)
    a = 1.0 / (1.0 + dt * lam)
    km, kP = kalman_filter(a, sigma, gain * dt, dt, prob.x0[0], prob.initial_std ** 2,
                           obs.increments[:, 0])
    rmse = []
    for S in sizes:
        err = [run_filter(prob, obs, zero, S, seed + 1000 * r + 1)[0][1:, 0] - km[1:]
               for r in range(n_repeats)]
        rmse.append(float(np.sqrt(np.mean(np.square(err)))))
    return KalmanReport(tuple(sizes), np.array(rmse), float(np.sqrt(kP[-1])))


@dataclass
class RefineReport:
    labels: list
    costs: np.ndarray
    pairs: list

    @property
    def variations(self):
        return [abs(self.costs[j] - self.costs[i]) / abs(self.costs[i]) for i, j in self.pairs]

    @property
    def passed(self):
        return all(v <= 0.10 for v in self.variations)


def smoke_heat_cost(n, dt, *, seed=0, n_particles=100, n_sgd=200, cost_replicas=500, fine_dt=None):
    """Smoke-scale heat run; noise is drawn on the ``fine_dt`` grid (default ``dt``)
    and summed, so runs at different steps see the same Brownian paths."""
    prob = heat_problem(n, dt=dt)
    fine_dt = dt if fine_dt is None else fine_dt
    sub = round(dt / fine_dt)
    truth = ClosedLoopTruth(prob, streams.stream(seed, streams.TRUTH), substeps=sub)
    res = run_fe_pf_sgd(prob, truth, SgdConfig(n_iterations=n_sgd, seed=seed), n_particles)
    return evaluate_cost(prob, res.controls, cost_replicas, seed, substeps=sub).total


def refine_study(seed=0, levels=(50, 100, 200), dt=0.02, fine_dt=0.01, time_level=100):
    """Smoke heat cost over mesh levels at step ``dt``, then at ``time_level``
    with step ``fine_dt`` (the two steps share Brownian paths)."""
    labels, costs = [], []
    for n in levels:
        labels.append(f"n={n},dt={dt}")
        costs.append(smoke_heat_cost(n, dt, seed=seed, fine_dt=fine_dt))
    labels.append(f"n={time_level},dt={fine_dt}")
    costs.append(smoke_heat_cost(time_level, fine_dt, seed=seed, fine_dt=fine_dt))
    k = len(levels)
    pairs = [(i, i + 1) for i in range(k - 1)] + [(list(levels).index(time_level), k)]
    return RefineReport(labels, np.array(costs), pairs)

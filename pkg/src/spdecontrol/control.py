"""Conditional stochastic gradient descent on control schedules and the outer
filter/optimize loop.

At every observation time ``t_n`` the remaining schedule ``u(t_n) .. u(t_{N-1})``
is improved by SGD, where each gradient sample comes from one forward path
started at a randomly chosen filter particle and its backward adjoint sweep.
The first entry is then committed and the filter assimilates ``dY_n``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from . import streams
from .adjoint import solve_adjoint_path
from .errors import DivergenceError
from .filtering import assimilate, initial_cloud, posterior_mean, posterior_variance
from .forward import propagate, simulate_path
from .streams import brownian_increments

log = logging.getLogger(__name__)


@dataclass
class ControlSchedule:
    """Conditional control estimates for ``t_j``, ``j = base_index .. N_T - 1``."""

    base_index: int
    controls: np.ndarray
    iteration: int = 0

    @classmethod
    def zeros(cls, prob, base_index=0):
        return cls(base_index, np.zeros((prob.n_steps - base_index, prob.ops.dim)))

    def shifted(self):
        """Warm start for the next observation time: drop the committed entry."""
        return ControlSchedule(self.base_index + 1, self.controls[1:].copy(), 0)

    @property
    def committed(self):
        return self.controls[0]


@dataclass(frozen=True)
class SgdConfig:
    """Step size ``alpha``, optionally decayed as ``alpha / (1 + iota / decay)``."""

    learning_rate: float = 0.1
    n_iterations: int = 1000
    precondition_mass: bool = True
    seed: int = 0
    decay: float | None = None
    batch: int = 1
    max_consecutive_failures: int = 10

    def __post_init__(self):
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValueError("learning rate must be finite and non-negative")
        if self.n_iterations < 1 or self.batch < 1:
            raise ValueError("iteration and batch counts must be at least 1")
        if self.decay is not None and self.decay <= 0:
            raise ValueError("decay scale must be positive")

    def step_size(self, iota):
        if self.decay is None:
            return self.learning_rate
        return self.learning_rate / (1.0 + iota / self.decay)


@dataclass
class CostReport:
    running: float
    terminal: float
    total: float
    mc_std_err: float
    n_replicas: int
    tracking: float = float("nan")


@dataclass
class RunResult:
    """Committed controls ``(N_T, dim)`` and filter summaries ``(N_T + 1, dim)``.

    ``completed`` counts committed steps; it is below ``N_T`` only for a
    partial result attached to a :class:`DivergenceError`.
    """

    controls: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    filtered_cost: float
    completed: int
    cost: CostReport | None = None
    schedules: list = field(default_factory=list, repr=False)


def gradient(prob, adj, controls):
    """Dual gradient ``M Q_j + grad_u L(u_j)`` for ``j`` along the realization."""
    ops = prob.ops
    u = np.asarray(controls, dtype=float)
    return ops.mass.matvec(adj.Q[:-1]) + prob.cost.grad_u(ops, u, u, 0)


def sgd_step(prob, schedule, grad, alpha, precondition_mass=True):
    """``u <- u - alpha M^{-1} g`` (or ``u - alpha g`` without preconditioning)."""
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(grad), axis=-1))[0])
        raise DivergenceError("non-finite gradient", stage="gradient",
                              index=(schedule.iteration, schedule.base_index + bad))
    direction = prob.ops.mass_solve(grad) if precondition_mass else grad
    return ControlSchedule(schedule.base_index, schedule.controls - alpha * direction,
                           schedule.iteration + 1)


def sample_gradient(prob, x_start, schedule, rng):
    """One forward/backward realization from ``x_start``; returns the gradient."""
    path = simulate_path(prob, x_start, schedule.controls, rng, base_index=schedule.base_index)
    adj = solve_adjoint_path(prob, path, schedule.controls)
    return gradient(prob, adj, schedule.controls)


def inner_loop(prob, particles, schedule, cfg: SgdConfig):
    """``cfg.n_iterations`` SGD updates of ``schedule`` from the particle set.

    Iteration ``iota`` draws a particle uniformly (with replacement) and its
    noise from the stream keyed ``(seed, SGD, n, iota)``.
    """
    n = schedule.base_index
    particles = np.atleast_2d(particles)
    failures = 0
    for iota in range(cfg.n_iterations):
        rng = streams.stream(cfg.seed, streams.SGD, n, iota)
        try:
            g = 0.0
            for _ in range(cfg.batch):
                s = rng.integers(particles.shape[0])
                g = g + sample_gradient(prob, particles[s], schedule, rng)
            schedule = sgd_step(prob, schedule, g / cfg.batch, cfg.step_size(iota), cfg.precondition_mass)
        except DivergenceError as err:
            failures += 1
            log.warning("time %d, iteration %d: %s", n, iota, err)
            if failures >= cfg.max_consecutive_failures:
                raise DivergenceError(
                    f"{failures} consecutive diverged realizations at time index {n}",
                    stage=err.stage, index=(iota, n), partial=schedule,
                    diagnostics={"last_error": str(err), "last_index": err.index}) from err
            schedule = replace(schedule, iteration=schedule.iteration + 1)
            continue
        failures = 0
    return schedule


def run_fe_pf_sgd(prob, observations, cfg: SgdConfig, n_particles, *, ess_threshold=None,
                  keep_schedules=False, progress=None):
    """Filter-and-optimize over the whole horizon.

    ``observations`` supplies ``increment(n, u)``: a recorded
    :class:`~spdecontrol.forward.ObservationPath` ignores ``u``, a
    :class:`~spdecontrol.forward.ClosedLoopTruth` advances a hidden truth with it.
    Only increments ``dY_0 .. dY_{n-1}`` are read before ``u(t_n)`` is committed.
    """
    ops = prob.ops
    m = prob.n_steps
    seed = cfg.seed
    controls = np.zeros((m, ops.dim))
    means = np.full((m + 1, ops.dim), np.nan)
    variances = np.full_like(means, np.nan)
    cloud = initial_cloud(prob, n_particles, streams.stream(seed, streams.INITIAL))
    schedule = ControlSchedule.zeros(prob)
    schedules = []
    filtered = 0.0
    n = 0
    try:
        for n in range(m):
            means[n], variances[n] = posterior_mean(cloud), posterior_variance(cloud)
            if n:
                schedule = schedule.shifted()
            schedule = inner_loop(prob, cloud.particles, schedule, cfg)
            u = schedule.committed
            controls[n] = u
            if keep_schedules:
                schedules.append(schedule.controls.copy())
            filtered += prob.dt * float(np.mean(prob.cost.running(ops, cloud.particles, u, n)))
            dY = observations.increment(n, u)
            cloud = assimilate(prob, cloud, u, dY, seed, ess_threshold)
            if progress is not None:
                progress(n + 1, m)
        n = m
        means[m], variances[m] = posterior_mean(cloud), posterior_variance(cloud)
        filtered += float(np.mean(prob.cost.terminal(ops, cloud.particles)))
    except DivergenceError as err:
        err.partial = RunResult(controls[:n], means, variances, np.nan, n, schedules=schedules)
        raise
    return RunResult(controls, means, variances, filtered, m, schedules=schedules)


def _cost_chunk(prob, controls, x0, seed, chunk, size, substeps):
    rng = streams.stream(seed, streams.COST, chunk)
    dW = brownian_increments(rng, prob.n_steps, prob.noise.n_modes, prob.dt, substeps, batch=(size,))
    x = propagate(prob, x0, controls, dW, prob.dt)
    ops = prob.ops
    running = prob.dt * np.sum(prob.cost.running_path(ops, x[:-1], controls), axis=0)
    terminal = prob.cost.terminal(ops, x[-1])
    e = x if prob.cost.reference is None else x - prob.cost.reference[:, None, :]
    tracking = prob.dt * np.sum(np.sqrt(np.sum(e[:-1] * ops.mass.matvec(e[:-1]), axis=-1)), axis=0)
    return running, terminal, tracking


def evaluate_cost(prob, controls, n_replicas=500, seed=0, *, x0=None, chunk_size=50, threads=1,
                  substeps=1):
    """Monte Carlo estimate of ``E[sum_j k L(x_j, u_j) + Phi(x_N)]`` over fresh paths.

    Replicas are split into fixed chunks, each with its own stream, so the
    estimate does not depend on ``threads``.  ``tracking`` is the mean of
    ``sum_j k |x_j - r_j|`` (distance to the cost's reference, or to zero).
    ``substeps > 1`` draws the noise on a finer grid and sums it, which lets a
    coarse-step estimate share Brownian paths with a fine-step one.
    """
    if n_replicas < 1:
        raise ValueError("need at least one replica")
    controls = np.asarray(controls, dtype=float)
    x0 = prob.x0 if x0 is None else x0
    sizes = [min(chunk_size, n_replicas - k) for k in range(0, n_replicas, chunk_size)]
    jobs = [(prob, controls, x0, seed, c, size, substeps) for c, size in enumerate(sizes)]
    with threadpool_limits(1):
        if threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(threads) as pool:
                parts = list(pool.map(lambda a: _cost_chunk(*a), jobs))
        else:
            parts = [_cost_chunk(*a) for a in jobs]
    running = np.concatenate([p[0] for p in parts])
    terminal = np.concatenate([p[1] for p in parts])
    tracking = np.concatenate([p[2] for p in parts])
    total = running + terminal
    se = float(np.std(total, ddof=1) / np.sqrt(n_replicas)) if n_replicas > 1 else float("nan")
    r, t = float(running.mean()), float(terminal.mean())
    return CostReport(r, t, r + t, se, n_replicas, float(tracking.mean()))

"""End-to-end commands: build the problem from a config, run, and persist tables."""

from __future__ import annotations

import logging
import os

import numpy as np

from . import __version__, streams
from .config import manifest_text
from .control import SgdConfig, evaluate_cost, run_fe_pf_sgd
from .errors import DivergenceError
from .filtering import run_filter
from .forward import ClosedLoopTruth, ObservationPath, simulate_truth
from .problems import heat_problem, lq_oracle_problem, nagumo_problem
from .tables import coefficient_rows, field_rows, read_observations, write_table

log = logging.getLogger(__name__)


def build_problem(cfg):
    kw = dict(T=cfg.T, dt=cfg.dt, amplitude=cfg.amplitude, n_noise=cfg.n_noise, d=cfg.d)
    if cfg.problem == "heat":
        return heat_problem(cfg.n, **kw)
    if cfg.problem == "nagumo":
        return nagumo_problem(cfg.n, **kw)
    return lq_oracle_problem(T=cfg.T, dt=cfg.dt)


def sgd_config(cfg):
    return SgdConfig(learning_rate=cfg.alpha, n_iterations=cfg.n_sgd,
                     precondition_mass=cfg.precondition_mass, seed=cfg.seed,
                     decay=cfg.alpha_decay, batch=cfg.batch)


def spatial_grid(ops):
    """Points used for tidy field tables: mesh nodes, or a uniform grid for modes."""
    L = ops.spec.domain_length
    if ops.spec.kind == "fe_hat":
        return np.linspace(0.0, L, ops.spec.n_elements + 1)
    return np.linspace(0.0, L, max(ops.dim - 1, 16) + 1)


def times(prob, count, start=0):
    return (start + np.arange(count)) * prob.dt


class Artifact:
    """Writer for one output directory."""

    def __init__(self, out_dir, cfg, prob):
        self.dir = out_dir
        self.prob = prob
        self.xi = spatial_grid(prob.ops)
        os.makedirs(out_dir, exist_ok=True)
        with open(self.path("manifest.txt"), "w") as fh:
            fh.write(manifest_text(cfg, __version__))

    def path(self, name):
        return os.path.join(self.dir, name)

    def field(self, name, coeffs):
        coeffs = np.asarray(coeffs)
        values = self.prob.ops.values_at(coeffs, self.xi) if len(coeffs) else np.empty((0, len(self.xi)))
        write_table(self.path(name), ["t", "xi", "value"],
                    field_rows(times(self.prob, len(coeffs)), self.xi, values))

    def coefficients(self, name, means, variances):
        write_table(self.path(name), ["t", "k", "mean", "variance"],
                    coefficient_rows(times(self.prob, len(means)), means, variances))

    def observations(self, increments):
        header = ["t"] + [f"dY_{k}" for k in range(1, increments.shape[1] + 1)]
        rows = np.column_stack([times(self.prob, len(increments)), increments])
        write_table(self.path("observations.csv"), header, rows)

    def cost(self, items):
        write_table(self.path("cost.csv"), ["quantity", "value"], [(k, v) for k, v in items])


def cost_items(report, prefix=""):
    return [(prefix + "running", report.running), (prefix + "terminal", report.terminal),
            (prefix + "total", report.total), (prefix + "mc_std_err", report.mc_std_err),
            (prefix + "n_replicas", report.n_replicas), (prefix + "tracking", report.tracking)]


def cmd_run(cfg, progress=None):
    """Truth, FE-PF-SGD, cost evaluation and persistence.  Returns the cost rows.

    On divergence the completed part is written and the error re-raised.
    """
    prob = build_problem(cfg)
    art = Artifact(cfg.output_dir, cfg, prob)
    truth = ClosedLoopTruth(prob, streams.stream(cfg.seed, streams.TRUTH))
    if prob.cost.reference is not None:
        art.field("reference.csv", prob.cost.reference)
    try:
        result = run_fe_pf_sgd(prob, truth, sgd_config(cfg), cfg.S,
                               ess_threshold=cfg.ess_threshold, progress=progress)
    except DivergenceError as err:
        part = err.partial
        if part is not None:
            k = part.completed
            art.field("controls.csv", part.controls[:k])
            art.field("truth.csv", truth.states[:k + 1])
            art.field("estimate.csv", part.means[:k + 1])
            art.coefficients("particles.csv", part.means[:k + 1], part.variances[:k + 1])
            art.observations(truth.increments[:k])
        raise
    art.field("controls.csv", result.controls)
    art.field("truth.csv", truth.states)
    art.field("estimate.csv", result.means)
    art.coefficients("particles.csv", result.means, result.variances)
    art.observations(truth.increments)
    report = evaluate_cost(prob, result.controls, cfg.cost_replicas, cfg.seed, threads=cfg.threads)
    zero = evaluate_cost(prob, np.zeros_like(result.controls), cfg.cost_replicas, cfg.seed,
                         threads=cfg.threads)
    items = cost_items(report) + [("filtered_cost", result.filtered_cost)] + cost_items(zero, "zero_control_")
    art.cost(items)
    return items


def cmd_simulate_truth(cfg):
    """Uncontrolled truth and its observation record (same streams as ``run``)."""
    prob = build_problem(cfg)
    art = Artifact(cfg.output_dir, cfg, prob)
    path, obs = simulate_truth(prob, prob.x0, np.zeros((prob.n_steps, prob.ops.dim)),
                               streams.stream(cfg.seed, streams.TRUTH))
    art.field("truth.csv", path.states)
    art.observations(obs.increments)
    return obs


def cmd_filter_only(cfg, obs_path):
    """Particle filter under zero control on a recorded observation file."""
    prob = build_problem(cfg)
    increments = read_observations(obs_path, prob.n_steps, prob.dt, prob.obs_dim)
    art = Artifact(cfg.output_dir, cfg, prob)
    zero = np.zeros((prob.n_steps, prob.ops.dim))
    means, variances = run_filter(prob, ObservationPath(increments), zero, cfg.S, cfg.seed,
                                  cfg.ess_threshold)
    art.coefficients("particles.csv", means, variances)
    art.field("estimate.csv", means)
    return means, variances

"""Bootstrap particle filter for the Galerkin state.

Each assimilation step predicts every particle through the controlled
transition kernel, weights it by the one-step Gaussian likelihood of the
observation increment, ``dY ~ N(h(x) k, k I)``, and resamples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import streams
from .errors import DegenerateLikelihoodError, DivergenceError
from .forward import step_state


@dataclass
class ParticleCloud:
    """``particles`` is ``(S, dim)``; ``weights`` sums to one."""

    particles: np.ndarray
    weights: np.ndarray
    time_index: int = 0

    @property
    def size(self):
        return self.particles.shape[0]

    @property
    def ess(self):
        return 1.0 / np.sum(self.weights ** 2)


def initial_cloud(prob, n_particles, rng):
    """Particles from the initial law: ``x0`` plus i.i.d. Gaussian coefficient noise
    of standard deviation ``prob.initial_std`` (a point mass when it is zero)."""
    if n_particles < 1:
        raise ValueError("need at least one particle")
    x = np.tile(prob.x0, (n_particles, 1))
    if prob.initial_std > 0:
        x += prob.initial_std * rng.standard_normal(x.shape)
    return ParticleCloud(x, np.full(n_particles, 1.0 / n_particles), 0)


def predict(prob, cloud, u, rng):
    """Advance every particle one step with control ``u`` and its own noise draw."""
    kappa = prob.dt
    dW = rng.standard_normal((cloud.size, prob.noise.n_modes)) * np.sqrt(kappa)
    x = step_state(prob, cloud.particles, u, dW, kappa, index=cloud.time_index)
    if not np.all(np.isfinite(x)):
        bad = np.flatnonzero(~np.all(np.isfinite(x), axis=-1))
        raise DivergenceError(f"particles {bad.tolist()[:5]} diverged", stage="state",
                              index=cloud.time_index, diagnostics={"particles": bad.tolist()})
    return ParticleCloud(x, cloud.weights.copy(), cloud.time_index + 1)


def log_likelihood(prob, particles, dY):
    """``-|dY - h(x) k|^2 / (2 k)`` per particle (constants dropped)."""
    kappa = prob.dt
    r = np.asarray(dY) - prob.observe(particles) * kappa
    return -np.sum(r * r, axis=-1) / (2.0 * kappa)


def weight(prob, cloud, dY):
    """Multiply the current weights by the likelihood of ``dY`` and renormalize."""
    logw = np.log(cloud.weights) + log_likelihood(prob, cloud.particles, dY)
    top = np.max(logw)
    if not np.isfinite(top):
        raise DegenerateLikelihoodError("all particle weights vanished", top)
    w = np.exp(logw - top)
    w /= w.sum()
    return ParticleCloud(cloud.particles, w, cloud.time_index)


def resample(cloud, rng):
    """Multinomial resampling to equal weights."""
    S = cloud.size
    idx = rng.choice(S, size=S, p=cloud.weights)
    return ParticleCloud(cloud.particles[idx], np.full(S, 1.0 / S), cloud.time_index)


def posterior_mean(cloud):
    return cloud.weights @ cloud.particles


def posterior_variance(cloud):
    m = posterior_mean(cloud)
    return cloud.weights @ (cloud.particles - m) ** 2


def assimilate(prob, cloud, u, dY, seed, ess_threshold=None):
    """One predict/weight/resample cycle from ``t_n`` to ``t_{n+1}``.

    Randomness is keyed by ``(seed, purpose, n)``.  With ``ess_threshold`` set
    (a fraction of ``S``), resampling is skipped while the effective sample
    size stays above it.
    """
    n = cloud.time_index
    cloud = predict(prob, cloud, u, streams.stream(seed, streams.PREDICT, n))
    cloud = weight(prob, cloud, dY)
    if ess_threshold is None or cloud.ess < ess_threshold * cloud.size:
        cloud = resample(cloud, streams.stream(seed, streams.RESAMPLE, n))
    return cloud


def run_filter(prob, observations, controls, n_particles, seed, ess_threshold=None):
    """Filter a whole observation record under a fixed control sequence.

    Returns ``(means, variances)``, each ``(N_T + 1, dim)``.
    """
    m = prob.n_steps
    cloud = initial_cloud(prob, n_particles, streams.stream(seed, streams.INITIAL))
    means = np.empty((m + 1, prob.ops.dim))
    variances = np.empty_like(means)
    means[0], variances[0] = posterior_mean(cloud), posterior_variance(cloud)
    for n in range(m):
        cloud = assimilate(prob, cloud, controls[n], observations.increment(n), seed, ess_threshold)
        means[n + 1], variances[n + 1] = posterior_mean(cloud), posterior_variance(cloud)
    return means, variances

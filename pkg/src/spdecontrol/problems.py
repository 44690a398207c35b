"""Concrete control problems: stochastic heat, stochastic Nagumo, and small
linear-Gaussian problems used as oracles.

All evaluators take coefficient arrays with an optional leading batch and
return load vectors (``<g, phi_l>``) rather than coefficients, which is what
the implicit schemes consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .basis import BasisOperators, BasisSpec, assemble, project_l2
from .errors import InvalidSpecError

ADDITIVE = "additive"
MULTIPLICATIVE = "multiplicative"


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Finitely many scalar Brownian motions paired with spatial modes ``e_i``.

    Additive noise contributes ``amplitude * e_i dW^i``; multiplicative noise
    contributes ``amplitude * (X + 1) e_i dW^i``.  ``mode_values`` holds
    ``e_i`` at the quadrature nodes of the basis it was built for.
    """

    kind: str
    amplitude: float
    mode_values: np.ndarray
    mode_loads: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, ops: BasisOperators, kind, amplitude, modes):
        """``modes`` is a callable ``xi -> (N, len(xi))`` array of mode functions."""
        if kind not in (ADDITIVE, MULTIPLICATIVE):
            raise InvalidSpecError(f"unknown noise kind {kind!r}")
        values = np.atleast_2d(np.asarray(modes(ops.quad_nodes), dtype=float))
        return cls(kind, float(amplitude), values, ops.load(values))

    @property
    def n_modes(self):
        return self.mode_values.shape[0]

    def mode_coeffs(self, ops):
        """L2 projections of the modes onto the basis, one row per mode."""
        return ops.mass_solve(self.mode_loads)

    def load(self, ops, x, dW):
        """``sum_i <G_i(x), phi_l> dW^i`` for state ``x`` and increments ``dW``."""
        dW = np.asarray(dW, dtype=float)
        if self.amplitude == 0.0:
            return np.zeros(np.broadcast_shapes(np.shape(x), dW.shape[:-1] + (ops.dim,)))
        if self.kind == ADDITIVE:
            return self.amplitude * (dW @ self.mode_loads)
        w = dW @ self.mode_values
        return ops.load(self.amplitude * (ops.evaluate(x) + 1.0) * w)


@dataclass(frozen=True)
class PointwiseDrift:
    """Reaction term ``F(X)(xi) = f(X(xi))`` evaluated through the quadrature grid."""

    f: object
    df: object


def nagumo_reaction(v):
    return -v * (v - 0.5) * (v - 1.0)


def nagumo_reaction_derivative(v):
    return -(3.0 * v * v - 3.0 * v + 0.5)


@dataclass(frozen=True, eq=False)
class QuadraticTrackingCost:
    """``L = 1/2 (|x - r_j|^2 + |u|^2)`` and ``Phi = 1/2 |x - r_N|^2`` in L2.

    ``reference`` is an ``(N_T + 1, dim)`` coefficient trajectory, or ``None``
    for regulation to zero.
    """

    reference: np.ndarray | None = None
    state_weight: float = 1.0
    control_weight: float = 1.0
    terminal_weight: float = 1.0

    def _offset(self, x, j):
        if self.reference is None:
            return x
        return x - self.reference[j]

    def running(self, ops, x, u, j):
        e = self._offset(x, j)
        return 0.5 * (self.state_weight * np.sum(e * ops.mass.matvec(e), axis=-1)
                      + self.control_weight * np.sum(u * ops.mass.matvec(u), axis=-1))

    def grad_x(self, ops, x, u, j):
        return self.state_weight * ops.mass.matvec(self._offset(x, j))

    def grad_u(self, ops, x, u, j):
        return self.control_weight * ops.mass.matvec(np.broadcast_to(u, np.shape(x)))

    def _path_offset(self, x, base):
        if self.reference is None:
            return x
        m = x.shape[0]
        ref = self.reference[base:base + m]
        return x - ref.reshape((m,) + (1,) * (x.ndim - 2) + ref.shape[-1:])

    def running_path(self, ops, x, u, base=0):
        """Running cost along a path: ``x`` is ``(m, *batch, dim)``, ``u`` is
        ``(m, dim)``, time index of ``x[0]`` is ``base``."""
        e = self._path_offset(x, base)
        u = np.asarray(u, dtype=float)
        u = u.reshape(u.shape[:1] + (1,) * (x.ndim - u.ndim) + u.shape[1:])
        return 0.5 * (self.state_weight * np.sum(e * ops.mass.matvec(e), axis=-1)
                      + self.control_weight * np.sum(u * ops.mass.matvec(u), axis=-1))

    def grad_x_path(self, ops, x, u, base=0):
        return self.state_weight * ops.mass.matvec(self._path_offset(x, base))

    def terminal(self, ops, x):
        e = self._offset(x, -1)
        return 0.5 * self.terminal_weight * np.sum(e * ops.mass.matvec(e), axis=-1)

    def terminal_grad(self, ops, x):
        return self.terminal_weight * ops.mass.matvec(self._offset(x, -1))

    @property
    def is_zero(self):
        return self.state_weight == 0 and self.control_weight == 0 and self.terminal_weight == 0


@dataclass(frozen=True, eq=False)
class ArctanObservation:
    """``h(x) = arctan(Sigma M x)``; rows of ``sigma`` are coefficient vectors of the
    observation functionals ``sigma_k``."""

    sigma: np.ndarray

    @classmethod
    def identity(cls, ops, d):
        if d > ops.dim:
            raise InvalidSpecError("observation dimension exceeds basis dimension")
        return cls(np.eye(d, ops.dim))

    @property
    def dim(self):
        return self.sigma.shape[0]

    def projections(self, ops, x):
        return ops.mass.matvec(x) @ self.sigma.T

    def __call__(self, ops, x):
        return np.arctan(self.projections(ops, x))

    def adjoint_load(self, ops, x, c):
        """``sum_k grad_x^* h^k(x) c^k`` as a load vector: ``M Sigma^T c~``."""
        z = self.projections(ops, x)
        ct = np.asarray(c) / (1.0 + z * z)
        return ops.mass.matvec(ct @ self.sigma)


@dataclass(frozen=True, eq=False)
class LinearObservation:
    """``h(x) = gain * Sigma M x``; unbounded, only for linear-Gaussian oracles."""

    sigma: np.ndarray
    gain: float = 1.0

    @property
    def dim(self):
        return self.sigma.shape[0]

    def __call__(self, ops, x):
        return self.gain * (ops.mass.matvec(x) @ self.sigma.T)

    def adjoint_load(self, ops, x, c):
        c = np.broadcast_to(np.asarray(c, dtype=float), np.shape(x)[:-1] + (self.dim,))
        return self.gain * ops.mass.matvec(c @ self.sigma)


@dataclass(frozen=True, eq=False)
class ZeroObservation:
    dim: int = 1

    def __call__(self, ops, x):
        return np.zeros(np.shape(x)[:-1] + (self.dim,))

    def adjoint_load(self, ops, x, c):
        return np.zeros(np.shape(x))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Discretized partially observed control problem.

    The control enters additively (``F(X, u) = F(X) + u``) and the noise does
    not depend on it, so ``grad_u F`` is the identity throughout.
    """

    name: str
    ops: BasisOperators
    noise: NoiseModel
    cost: QuadraticTrackingCost
    observation: object
    x0: np.ndarray
    T: float
    dt: float
    drift: PointwiseDrift | None = None
    initial_std: float = 0.0

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0):
            raise InvalidSpecError("T and dt must be positive")
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise InvalidSpecError(f"dt={self.dt} does not divide T={self.T}")
        if np.shape(self.x0) != (self.ops.dim,):
            raise InvalidSpecError("initial condition has the wrong length")

    @property
    def basis(self) -> BasisSpec:
        return self.ops.spec

    @property
    def n_steps(self):
        return round(self.T / self.dt)

    @property
    def obs_dim(self):
        return self.observation.dim

    @property
    def linear(self):
        """Drift-free with state-independent noise: the schemes become linear
        recurrences with precomputable forcing."""
        return self.drift is None and (self.noise.kind == ADDITIVE or self.noise.amplitude == 0.0)

    @property
    def pointwise(self):
        """True when the explicit terms need values on the quadrature grid."""
        return self.drift is not None or (self.noise.kind == MULTIPLICATIVE and self.noise.amplitude != 0.0)

    def explicit_load(self, x, dW, kappa):
        """``k F(x) + sum_i G_i(x) dW^i`` as a single load vector."""
        ops = self.ops
        if not self.pointwise:
            return np.broadcast_to(self.noise.load(ops, x, dW), np.shape(x))
        v = ops.evaluate(x)
        g = 0.0
        if self.drift is not None:
            g = kappa * self.drift.f(v)
        if self.noise.kind == MULTIPLICATIVE:
            g = g + self.noise.amplitude * (v + 1.0) * (np.asarray(dW) @ self.noise.mode_values)
        load = ops.load(g)
        if self.noise.kind == ADDITIVE:
            load = load + self.noise.load(ops, x, dW)
        return load

    def adjoint_field(self, x, dW, kappa):
        """Pointwise multiplier ``a`` with ``k M_{F'(x)} q + sum_i dW^i M_{G_i'(x)} q = <a q, phi>``.

        Works on a whole path at once (``x`` of shape ``(m, dim)``, ``dW`` of
        shape ``(m, N)``); returns ``None`` when the coupling vanishes.
        """
        if not self.pointwise:
            return None
        a = 0.0
        if self.drift is not None:
            a = kappa * self.drift.df(self.ops.evaluate(x))
        if self.noise.kind == MULTIPLICATIVE and self.noise.amplitude != 0.0:
            a = a + self.noise.amplitude * (np.asarray(dW) @ self.noise.mode_values)
        return a

    def observe(self, x):
        return self.observation(self.ops, x)

    def with_(self, **changes):
        return replace(self, **changes)


def dirichlet_sine_modes(length, n_modes):
    """Laplacian eigenfunctions ``sqrt(2/L) sin(i pi xi / L)``, ``i = 1..n_modes``."""
    i = np.arange(1, n_modes + 1)[:, None]
    return lambda xi: np.sqrt(2.0 / length) * np.sin(i * np.pi * np.asarray(xi)[None, :] / length)


def neumann_cosine_modes(length, n_modes):
    """Orthonormal cosines ``phi_0 .. phi_{n_modes-1}``."""
    k = np.arange(n_modes)[:, None]
    scale = np.where(k == 0, 1.0 / np.sqrt(length), np.sqrt(2.0 / length))
    return lambda xi: scale * np.cos(k * np.pi * np.asarray(xi)[None, :] / length)


def heat_problem(n=400, *, length=10.0, T=1.0, dt=0.01, amplitude=0.05, n_noise=50, d=3, x0=None):
    """Controlled stochastic heat equation on ``(0, 10)`` with Dirichlet boundary,
    hat-function basis on ``n`` subintervals, and arctan observations."""
    if n < 2 or int(n) != n:
        raise InvalidSpecError("heat problem needs n >= 2 subintervals")
    ops = assemble(BasisSpec.hat(int(n), length))
    noise = NoiseModel.build(ops, ADDITIVE, amplitude, dirichlet_sine_modes(length, n_noise))
    x0 = np.zeros(ops.dim) if x0 is None else project_l2(ops, x0)
    return ProblemSpec(
        name="heat", ops=ops, noise=noise, cost=QuadraticTrackingCost(),
        observation=ArctanObservation.identity(ops, d), x0=x0, T=T, dt=dt)


def nagumo_problem(n=400, *, length=20.0, T=1.0, dt=0.01, amplitude=0.05, n_noise=50, d=3,
                   plateau=(5.0, 15.0)):
    """Controlled stochastic Nagumo equation with Neumann boundary, cosine modes
    ``0..n`` and a reference trajectory from the noise-free uncontrolled flow."""
    if n < 1 or int(n) != n:
        raise InvalidSpecError("Nagumo problem needs n >= 1")
    ops = assemble(BasisSpec.cosine(int(n), length))
    noise = NoiseModel.build(ops, MULTIPLICATIVE, amplitude, neumann_cosine_modes(length, n_noise))
    a, b = plateau
    x0 = project_l2(ops, lambda xi: ((xi >= a) & (xi <= b)).astype(float))
    prob = ProblemSpec(
        name="nagumo", ops=ops, noise=noise, cost=QuadraticTrackingCost(),
        observation=ArctanObservation.identity(ops, d), x0=x0, T=T, dt=dt,
        drift=PointwiseDrift(nagumo_reaction, nagumo_reaction_derivative))
    ref = reference_state(prob, dt)
    return prob.with_(cost=QuadraticTrackingCost(reference=ref))


def reference_state(prob: ProblemSpec, kappa=None):
    """Deterministic, uncontrolled trajectory from ``prob.x0`` on the time grid."""
    from .forward import step_state

    kappa = prob.dt if kappa is None else kappa
    n_steps = round(prob.T / kappa)
    zeros_u = np.zeros(prob.ops.dim)
    zeros_w = np.zeros(prob.noise.n_modes)
    solver = prob.ops.shifted(kappa)
    out = np.empty((n_steps + 1, prob.ops.dim))
    out[0] = prob.x0
    for j in range(n_steps):
        out[j + 1] = step_state(prob, out[j], zeros_u, zeros_w, kappa, solver=solver, index=j)
    return out


def single_mode_operators(lam, length=None):
    """One-dimensional cosine basis whose only mode has Laplacian eigenvalue ``lam``."""
    if lam < 0:
        raise InvalidSpecError("eigenvalue must be non-negative")
    if lam == 0:
        return assemble(BasisSpec("cosine", 1.0 if length is None else length, 1, "neumann", 0))
    return assemble(BasisSpec("cosine", np.pi / np.sqrt(lam), 1, "neumann", 1))


def lq_oracle_problem(lam=1.0, T=1.0, x0=1.0, dt=1e-3):
    """Scalar problem ``dx = (-lam x + u) dt`` with cost ``1/2 int (x^2 + u^2) + 1/2 x(T)^2``.

    Noise-free; the single mode is observed through ``arctan``.
    """
    ops = single_mode_operators(lam)
    noise = NoiseModel.build(ops, ADDITIVE, 0.0, lambda xi: np.zeros((1, np.size(xi))))
    return ProblemSpec(
        name="lq_oracle", ops=ops, noise=noise, cost=QuadraticTrackingCost(),
        observation=ArctanObservation(np.ones((1, 1))), x0=np.array([float(x0)]), T=T, dt=dt)


def kalman_oracle_problem(lam=1.0, sigma=1.0, gain=10.0, T=1.0, dt=0.01, m0=0.0, s0=1.0):
    """Scalar linear-Gaussian filtering model: additive noise on the single
    mode, linear observation ``dY = gain * x dt + dB``, Gaussian initial law."""
    ops = single_mode_operators(lam)
    # the single mode function integrated against itself is 1, so unit amplitude
    # on the mode gives coefficient noise sigma dW
    basis_fn = lambda xi: ops.basis_values(xi)  # noqa: E731
    noise = NoiseModel.build(ops, ADDITIVE, sigma, basis_fn)
    return ProblemSpec(
        name="kalman_oracle", ops=ops, noise=noise,
        cost=QuadraticTrackingCost(state_weight=0.0, control_weight=0.0, terminal_weight=0.0),
        observation=LinearObservation(np.ones((1, 1)), gain), x0=np.array([float(m0)]),
        T=T, dt=dt, initial_std=float(s0))

"""Galerkin bases on an interval: P1 hat functions and cosine modes.

Coefficient vectors are plain ``numpy`` arrays whose last axis has length
``spec.dim``; leading axes are treated as a batch (particles, time steps,
replicas), so every routine here works on ``(dim,)`` and ``(B, dim)`` alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft
from scipy.linalg import lapack

from .errors import EvaluationError, InvalidSpecError

FE_HAT = "fe_hat"
COSINE = "cosine"
DIRICHLET = "dirichlet"
NEUMANN = "neumann"

_GAUSS_S, _GAUSS_W = np.polynomial.legendre.leggauss(4)
# map Gauss-Legendre from [-1, 1] to [0, 1]
_GAUSS_S = 0.5 * (_GAUSS_S + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W


@dataclass(frozen=True)
class BasisSpec:
    """Which Galerkin space to build.

    ``dim`` is the number of basis functions.  For hat functions on ``n``
    uniform subintervals this is ``n - 1`` (Dirichlet, interior hats only) or
    ``n + 1`` (Neumann, boundary half-hats kept).  Cosine bases use modes
    ``first_mode .. first_mode + dim - 1`` and require a Neumann boundary.
    """

    kind: str
    domain_length: float
    dim: int
    boundary: str
    first_mode: int = 0

    def __post_init__(self):
        if self.kind not in (FE_HAT, COSINE):
            raise InvalidSpecError(f"unknown basis kind {self.kind!r}")
        if self.boundary not in (DIRICHLET, NEUMANN):
            raise InvalidSpecError(f"unknown boundary {self.boundary!r}")
        if not (np.isfinite(self.domain_length) and self.domain_length > 0):
            raise InvalidSpecError("domain length must be positive")
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidSpecError("basis dimension must be a positive integer")
        if self.kind == COSINE and self.boundary != NEUMANN:
            raise InvalidSpecError("cosine basis requires a Neumann boundary")
        if self.kind == FE_HAT and self.boundary == NEUMANN and self.dim < 2:
            raise InvalidSpecError("Neumann hat basis needs at least two nodes")
        if self.first_mode < 0 or (self.kind == FE_HAT and self.first_mode):
            raise InvalidSpecError("first_mode only applies to cosine bases")

    @classmethod
    def hat(cls, n, length, boundary=DIRICHLET):
        """Hat functions on ``n`` uniform subintervals of ``(0, length)``."""
        if n < 1:
            raise InvalidSpecError("need at least one subinterval")
        dim = n - 1 if boundary == DIRICHLET else n + 1
        return cls(FE_HAT, float(length), dim, boundary)

    @classmethod
    def cosine(cls, n, length):
        """Cosine modes ``k = 0..n`` (dimension ``n + 1``)."""
        return cls(COSINE, float(length), n + 1, NEUMANN)

    @property
    def n_elements(self):
        if self.kind != FE_HAT:
            raise AttributeError("cosine bases have no mesh")
        return self.dim + 1 if self.boundary == DIRICHLET else self.dim - 1

    @property
    def mesh_width(self):
        return self.domain_length / self.n_elements


@dataclass(frozen=True)
class SymTridiag:
    """Symmetric tridiagonal matrix stored by its two distinct bands."""

    diag: np.ndarray
    off: np.ndarray

    @property
    def size(self):
        return self.diag.shape[0]

    @property
    def is_diagonal(self):
        return not np.any(self.off)

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        y = self.diag * x
        if self.off.size and not self.is_diagonal:
            y[..., :-1] += self.off * x[..., 1:]
            y[..., 1:] += self.off * x[..., :-1]
        return y

    def todense(self):
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def __add__(self, other):
        return SymTridiag(self.diag + other.diag, self.off + other.off)

    def scaled(self, c):
        return SymTridiag(c * self.diag, c * self.off)


@dataclass(frozen=True, eq=False)
class BasisOperators:
    """Assembled mass/stiffness matrices plus the quadrature used for loads."""

    spec: BasisSpec
    mass: SymTridiag
    stiffness: SymTridiag
    quad_nodes: np.ndarray
    quad_weights: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self):
        return self.spec.dim

    @property
    def eigenvalues(self):
        """Stiffness diagonal; the Laplacian eigenvalues for cosine bases."""
        return self.stiffness.diag

    # -- function <-> coefficient transforms --------------------------------

    def evaluate(self, coeffs):
        """Values of the expansion at the quadrature nodes, shape ``(..., n_q)``."""
        c = np.asarray(coeffs, dtype=float)
        if self.spec.kind == FE_HAT:
            full = self._full_nodal(c)
            s = _GAUSS_S
            vals = full[..., :-1, None] * (1.0 - s) + full[..., 1:, None] * s
            return vals.reshape(c.shape[:-1] + (-1,))
        n_int = self.quad_nodes.size - 1
        a = np.zeros(c.shape[:-1] + (n_int + 1,))
        k0 = self.spec.first_mode
        a[..., k0:k0 + self.dim] = c * self._cos_half_scale
        return fft.dct(a, type=1, axis=-1)

    def load(self, values):
        """Load vector ``<f, phi_l>`` from values of ``f`` at the quadrature nodes."""
        f = np.asarray(values, dtype=float)
        if self.spec.kind == FE_HAT:
            n = self.spec.n_elements
            h = self.spec.mesh_width
            fe = f.reshape(f.shape[:-1] + (n, _GAUSS_S.size))
            left = fe @ (h * _GAUSS_W * (1.0 - _GAUSS_S))
            right = fe @ (h * _GAUSS_W * _GAUSS_S)
            full = np.zeros(f.shape[:-1] + (n + 1,))
            full[..., :-1] += left
            full[..., 1:] += right
            return full[..., self._active]
        n_int = self.quad_nodes.size - 1
        h = self.spec.domain_length / n_int
        y = fft.dct(f, type=1, axis=-1)
        k0 = self.spec.first_mode
        return 0.5 * h * y[..., k0:k0 + self.dim] * self._cos_scale

    def values_at(self, coeffs, xi):
        """Point values at arbitrary locations ``xi`` (for tables and plots)."""
        c = np.asarray(coeffs, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if self.spec.kind == FE_HAT:
            full = self._full_nodal(c)
            nodes = np.linspace(0.0, self.spec.domain_length, self.spec.n_elements + 1)
            if full.ndim == 1:
                return np.interp(xi, nodes, full)
            return np.stack([np.interp(xi, nodes, row) for row in full.reshape(-1, full.shape[-1])]).reshape(
                c.shape[:-1] + xi.shape)
        return c @ self.basis_values(xi)

    def basis_values(self, xi):
        """Matrix ``phi_l(xi_m)`` of shape ``(dim, len(xi))``."""
        xi = np.asarray(xi, dtype=float)
        if self.spec.kind == FE_HAT:
            return np.stack([self.values_at(e, xi) for e in np.eye(self.dim)])
        L = self.spec.domain_length
        k = np.arange(self.spec.first_mode, self.spec.first_mode + self.dim)
        return self._cos_scale[:, None] * np.cos(np.pi * np.outer(k, xi) / L)

    # -- linear algebra ------------------------------------------------------

    def mass_matvec(self, x):
        return self.mass.matvec(x)

    def stiffness_matvec(self, x):
        return self.stiffness.matvec(x)

    def shifted(self, kappa):
        """Factorization of ``M + kappa K``, cached per ``kappa``."""
        key = float(kappa)
        solver = self._cache.get(key)
        if solver is None:
            solver = ShiftedSolver(self, key)
            self._cache[key] = solver
        return solver

    def mass_solve(self, rhs):
        return self.shifted(0.0).solve(rhs)

    # -- internals -----------------------------------------------------------

    @property
    def _active(self):
        n = self.spec.n_elements
        return slice(1, n) if self.spec.boundary == DIRICHLET else slice(0, n + 1)

    def _full_nodal(self, c):
        n = self.spec.n_elements
        if self.spec.boundary == NEUMANN:
            return c
        full = np.zeros(c.shape[:-1] + (n + 1,))
        full[..., 1:n] = c
        return full

    @property
    def _cos_scale(self):
        L = self.spec.domain_length
        k = np.arange(self.spec.first_mode, self.spec.first_mode + self.dim)
        return np.where(k == 0, 1.0 / np.sqrt(L), np.sqrt(2.0 / L))

    @property
    def _cos_half_scale(self):
        # DCT-I doubles interior terms, so the k >= 1 amplitudes are halved
        k = np.arange(self.spec.first_mode, self.spec.first_mode + self.dim)
        return self._cos_scale * np.where(k == 0, 1.0, 0.5)


class ShiftedSolver:
    """Direct solver for ``(M + kappa K) x = rhs``; reusable across time steps."""

    def __init__(self, ops: BasisOperators, kappa: float):
        if kappa < 0 or not np.isfinite(kappa):
            raise InvalidSpecError("kappa must be finite and non-negative")
        self.kappa = kappa
        self.matrix = ops.mass + ops.stiffness.scaled(kappa)
        self.diagonal = self.matrix.is_diagonal
        if self.diagonal:
            if np.any(self.matrix.diag <= 0):
                raise np.linalg.LinAlgError("shifted operator is singular")
            self._inv = 1.0 / self.matrix.diag
        else:
            d, e, info = lapack.dpttrf(self.matrix.diag, self.matrix.off)
            if info != 0:
                raise np.linalg.LinAlgError(f"tridiagonal factorization failed (info={info})")
            self._d, self._e = d, e

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if self.diagonal:
            return rhs * self._inv
        if rhs.ndim == 1:
            x, info = lapack.dpttrs(self._d, self._e, rhs)
        else:
            flat = rhs.reshape(-1, rhs.shape[-1])
            x, info = lapack.dpttrs(self._d, self._e, flat.T)
            x = x.T.reshape(rhs.shape)
        if info != 0:
            raise np.linalg.LinAlgError(f"tridiagonal solve failed (info={info})")
        return x


def assemble(spec: BasisSpec) -> BasisOperators:
    """Closed-form mass and stiffness matrices and the load quadrature grid."""
    L = spec.domain_length
    if spec.kind == FE_HAT:
        n = spec.n_elements
        h = L / n
        m_diag = np.full(spec.dim, 2.0 * h / 3.0)
        k_diag = np.full(spec.dim, 2.0 / h)
        if spec.boundary == NEUMANN:
            m_diag[[0, -1]] = h / 3.0
            k_diag[[0, -1]] = 1.0 / h
        mass = SymTridiag(m_diag, np.full(spec.dim - 1, h / 6.0))
        stiff = SymTridiag(k_diag, np.full(spec.dim - 1, -1.0 / h))
        nodes = ((np.arange(n)[:, None] + _GAUSS_S) * h).ravel()
        weights = np.tile(h * _GAUSS_W, n)
    else:
        k = np.arange(spec.first_mode, spec.first_mode + spec.dim)
        mass = SymTridiag(np.ones(spec.dim), np.zeros(spec.dim - 1))
        stiff = SymTridiag((k * np.pi / L) ** 2, np.zeros(spec.dim - 1))
        # at least 4 points per mode; padded to an FFT-friendly size
        n_int = 2 * fft.next_fast_len(2 * (spec.first_mode + spec.dim), real=True)
        nodes = np.linspace(0.0, L, n_int + 1)
        weights = np.full(n_int + 1, L / n_int)
        weights[[0, -1]] *= 0.5
    return BasisOperators(spec, mass, stiff, nodes, weights)


def project_l2(ops: BasisOperators, f) -> np.ndarray:
    """Discrete L2 projection of the pointwise function ``f`` onto the basis."""
    vals = np.asarray(f(ops.quad_nodes), dtype=float)
    if vals.shape != ops.quad_nodes.shape:
        vals = np.broadcast_to(vals, ops.quad_nodes.shape)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("function is not finite at the quadrature nodes")
    return ops.mass_solve(ops.load(vals))


def solve_shifted(ops: BasisOperators, kappa: float, rhs) -> np.ndarray:
    return ops.shifted(kappa).solve(rhs)


def inner(ops: BasisOperators, a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != ops.dim or b.shape[-1] != ops.dim:
        raise ValueError(f"expected coefficient vectors of length {ops.dim}")
    return np.sum(a * ops.mass.matvec(b), axis=-1)


def norm_l2(ops: BasisOperators, a):
    return np.sqrt(inner(ops, a, a))

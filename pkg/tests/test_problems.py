import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdecontrol.errors import InvalidSpecError
from spdecontrol.oracles import riccati
from spdecontrol.problems import (ADDITIVE, NoiseModel, heat_problem, lq_oracle_problem,
                                  nagumo_problem, nagumo_reaction, nagumo_reaction_derivative,
                                  reference_state)

STEP = 1e-6


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def fd_gradient(fun, x):
    """Centered differences along every coordinate."""
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = STEP
        g[i] = (fun(x + e) - fun(x - e)) / (2 * STEP)
    return g


def fd_directional(fun, x, v):
    return (fun(x + STEP * v) - fun(x - STEP * v)) / (2 * STEP)


def gradient_errors(prob, seed):
    """Worst relative error of every analytic derivative over 20 random points."""
    ops = prob.ops
    rng = np.random.default_rng(seed)
    silent = prob.with_(noise=NoiseModel(ADDITIVE, 0.0, prob.noise.mode_values, prob.noise.mode_loads))
    worst = {}

    def note(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for _ in range(20):
        x = prob.x0 + 0.3 * rng.standard_normal(ops.dim)
        u = 0.3 * rng.standard_normal(ops.dim)
        v = rng.standard_normal(ops.dim)
        j = int(rng.integers(prob.n_steps))
        cost = prob.cost
        note("grad_x L", rel_err(cost.grad_x(ops, x, u, j),
                                 fd_gradient(lambda y: cost.running(ops, y, u, j), x)))
        note("grad_u L", rel_err(cost.grad_u(ops, x, u, j),
                                 fd_gradient(lambda w: cost.running(ops, x, w, j), u)))
        note("grad Phi", rel_err(cost.terminal_grad(ops, x),
                                 fd_gradient(lambda y: cost.terminal(ops, y), x)))
        c = rng.standard_normal(prob.obs_dim)
        note("grad h", rel_err(prob.observation.adjoint_load(ops, x, c),
                               fd_gradient(lambda y: c @ prob.observe(y), x)))
        if prob.drift is not None:
            field = silent.adjoint_field(x, np.zeros(prob.noise.n_modes), 1.0)
            note("grad F", rel_err(ops.load(field * ops.evaluate(v)),
                                   fd_directional(lambda y: silent.explicit_load(
                                       y, np.zeros(prob.noise.n_modes), 1.0), x, v)))
        if prob.noise.kind != ADDITIVE:
            dW = rng.standard_normal(prob.noise.n_modes)
            noisy = prob.with_(drift=None)
            field = noisy.adjoint_field(x, dW, 1.0)
            note("grad G", rel_err(ops.load(field * ops.evaluate(v)),
                                   fd_directional(lambda y: noisy.explicit_load(y, dW, 1.0), x, v)))
    return worst


def test_heat_gradients_match_finite_differences():
    worst = gradient_errors(heat_problem(24), 0)
    assert set(worst) == {"grad_x L", "grad_u L", "grad Phi", "grad h"}
    assert max(worst.values()) <= 1e-5, worst


def test_nagumo_gradients_match_finite_differences():
    worst = gradient_errors(nagumo_problem(24), 1)
    assert {"grad F", "grad G"} <= set(worst)
    assert max(worst.values()) <= 1e-5, worst


@settings(max_examples=50, deadline=None)
@given(v=st.floats(-3, 3))
def test_nagumo_reaction_derivative(v):
    fd = (nagumo_reaction(v + STEP) - nagumo_reaction(v - STEP)) / (2 * STEP)
    assert abs(fd - nagumo_reaction_derivative(v)) <= 1e-5 * max(1.0, abs(fd))


def test_nagumo_reaction_values():
    assert nagumo_reaction(0.0) == nagumo_reaction(0.5) == nagumo_reaction(1.0) == 0.0
    assert nagumo_reaction(0.25) == pytest.approx(-3 / 64, rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(0, 1e6), seed=st.integers(0, 1000))
def test_observations_are_bounded(scale, seed):
    prob = heat_problem(10)
    x = scale * np.random.default_rng(seed).standard_normal(prob.ops.dim)
    assert np.all(np.abs(prob.observe(x)) <= np.pi / 2)


def test_heat_problem_defaults():
    prob = heat_problem(400)
    assert prob.drift is None and prob.linear and prob.ops.dim == 399
    assert prob.noise.n_modes == 50 and prob.obs_dim == 3 and prob.noise.amplitude == 0.05
    assert np.all(prob.x0 == 0) and np.all(prob.observe(prob.x0) == 0)
    x = np.random.default_rng(0).standard_normal(prob.ops.dim)
    assert prob.adjoint_field(x, np.ones(50), 0.01) is None


def test_nagumo_problem_defaults():
    prob = nagumo_problem(400)
    assert prob.noise.n_modes == 50 and prob.obs_dim == 3
    assert prob.ops.dim == 401 and prob.basis.domain_length == 20.0
    assert prob.cost.reference.shape == (101, 401)
    np.testing.assert_array_equal(prob.cost.reference[0], prob.x0)


def test_constant_states_are_fixed_points_of_the_reference():
    for plateau, level in [((0.0, 20.0), 1.0), ((30.0, 40.0), 0.0)]:
        prob = nagumo_problem(32, plateau=plateau)
        ref = prob.cost.reference
        vals = prob.ops.evaluate(ref)
        assert np.max(np.abs(vals - level)) < 1e-12


def test_reference_front_behaviour_against_fine_solve():
    prob = nagumo_problem(400)
    ref = prob.cost.reference
    vals = prob.ops.evaluate(ref)
    # t = 0 carries the Gibbs overshoot of the projected indicator; it is
    # damped out after one implicit step
    assert vals[1:].min() > -1e-3 and vals[1:].max() < 1 + 1e-3
    mid = prob.ops.values_at(ref, np.array([10.0]))[:, 0]
    assert np.all(np.diff(mid[20:]) <= 0)
    assert np.all(np.abs(mid - 1) < 1e-3)
    fine = nagumo_problem(800, dt=0.001)
    fine_ref = reference_state(fine)[::10]
    xi = np.linspace(0, 20, 201)
    diff = prob.ops.values_at(ref[10:], xi) - fine.ops.values_at(fine_ref[10:], xi)
    assert np.max(np.abs(diff)) < 1e-2


def test_riccati_oracle_against_closed_form():
    lam, T = 1.0, 1.0
    r1, r2 = -lam + np.sqrt(lam ** 2 + 1), -lam - np.sqrt(lam ** 2 + 1)
    t = np.linspace(0, T, 1001)
    # p' = (p - r1)(p - r2), p(T) = 1
    k = (1 - r1) / (1 - r2) * np.exp((r1 - r2) * (t - T))
    exact = (r1 - k * r2) / (1 - k)
    np.testing.assert_allclose(riccati(lam, T, 1000), exact, rtol=1e-10)
    np.testing.assert_allclose(riccati(0.0, 2.0, 100), 1.0, rtol=1e-14)
    assert riccati(1.0, 1e-4, 10)[0] == pytest.approx(1.0, abs=1e-3)


def test_lq_oracle_problem():
    prob = lq_oracle_problem(lam=2.0, x0=0.5)
    assert prob.ops.dim == 1 and prob.ops.eigenvalues[0] == pytest.approx(2.0, rel=1e-14)
    assert prob.noise.amplitude == 0 and prob.n_steps == 1000 and prob.x0[0] == 0.5


def test_invalid_problem_specs():
    with pytest.raises(InvalidSpecError):
        heat_problem(400, dt=0.03)
    with pytest.raises(InvalidSpecError):
        heat_problem(1)
    with pytest.raises(InvalidSpecError):
        nagumo_problem(0)
    with pytest.raises(InvalidSpecError):
        heat_problem(10).with_(x0=np.zeros(3))

import numpy as np
import pytest

from spdecontrol.adjoint import solve_adjoint_path
from spdecontrol.control import (ControlSchedule, SgdConfig, evaluate_cost, gradient, inner_loop,
                                 run_fe_pf_sgd, sample_gradient, sgd_step)
from spdecontrol.errors import DivergenceError
from spdecontrol.forward import ObservationPath, simulate_path
from spdecontrol.oracles import riccati_on_grid
from spdecontrol.problems import (ADDITIVE, NoiseModel, QuadraticTrackingCost, heat_problem,
                                  lq_oracle_problem, nagumo_problem, single_mode_operators)
from spdecontrol.streams import stream

ZERO_COST = QuadraticTrackingCost(state_weight=0.0, control_weight=0.0, terminal_weight=0.0)


def test_zero_step_is_identity():
    prob = heat_problem(10)
    sched = ControlSchedule(3, np.random.default_rng(0).standard_normal((97, prob.ops.dim)))
    out = sgd_step(prob, sched, np.ones_like(sched.controls), 0.0)
    assert np.array_equal(out.controls, sched.controls) and out.iteration == 1


def test_preconditioned_heat_update_is_u_minus_alpha_q_plus_u():
    prob = heat_problem(20)
    rng = np.random.default_rng(1)
    u = 0.1 * rng.standard_normal((prob.n_steps, prob.ops.dim))
    path = simulate_path(prob, prob.x0, u, stream(0, 5))
    adj = solve_adjoint_path(prob, path, u)
    out = sgd_step(prob, ControlSchedule(0, u), gradient(prob, adj, u), 0.3)
    np.testing.assert_allclose(out.controls, u - 0.3 * (adj.Q[:-1] + u), rtol=1e-10, atol=1e-14)
    plain = sgd_step(prob, ControlSchedule(0, u), gradient(prob, adj, u), 0.3, precondition_mass=False)
    np.testing.assert_allclose(plain.controls, u - 0.3 * prob.ops.mass.matvec(adj.Q[:-1] + u),
                               rtol=1e-10, atol=1e-14)
    # u = -Q is a fixed point of the update
    fixed = sgd_step(prob, ControlSchedule(0, -adj.Q[:-1]), gradient(prob, adj, -adj.Q[:-1]), 0.3)
    np.testing.assert_allclose(fixed.controls, -adj.Q[:-1], atol=1e-14)


def test_inner_loop_with_zero_step_keeps_schedule():
    prob = heat_problem(10)
    sched = ControlSchedule(50, np.full((50, prob.ops.dim), 0.2))
    out = inner_loop(prob, np.zeros((4, prob.ops.dim)), sched, SgdConfig(learning_rate=0.0, n_iterations=1))
    assert np.array_equal(out.controls, sched.controls) and out.iteration == 1 and out.base_index == 50


def test_zero_cost_gives_zero_controls():
    prob = heat_problem(12, T=0.2).with_(cost=ZERO_COST)
    obs = ObservationPath(np.random.default_rng(2).standard_normal((prob.n_steps, 3)) * 0.1)
    res = run_fe_pf_sgd(prob, obs, SgdConfig(n_iterations=5), 20)
    assert not np.any(res.controls) and res.filtered_cost == 0.0 and res.completed == prob.n_steps
    assert evaluate_cost(prob, res.controls, 20).total == 0.0


def test_one_mode_cost_is_riemann_sum():
    lam, kappa, x0 = 1.5, 0.01, 0.8
    prob = lq_oracle_problem(lam, 1.0, x0, kappa)
    rng = np.random.default_rng(3)
    u = rng.standard_normal((prob.n_steps, 1))
    x = [x0]
    for j in range(prob.n_steps):
        x.append((x[-1] + kappa * u[j, 0]) / (1 + kappa * lam))
    x = np.array(x)
    want = kappa * np.sum(0.5 * (x[:-1] ** 2 + u[:, 0] ** 2)) + 0.5 * x[-1] ** 2
    rep = evaluate_cost(prob, u, 3)
    assert rep.total == pytest.approx(want, rel=1e-12) and rep.mc_std_err == 0.0
    assert rep.tracking == pytest.approx(kappa * np.sum(np.abs(x[:-1])), rel=1e-12)


def test_cost_estimate_is_independent_of_thread_count():
    prob = nagumo_problem(16)
    u = np.zeros((prob.n_steps, prob.ops.dim))
    a = evaluate_cost(prob, u, 120, 7, threads=1)
    b = evaluate_cost(prob, u, 120, 7, threads=4)
    assert a == b


def test_cost_substeps_share_paths():
    prob = heat_problem(16)
    fine = heat_problem(16, dt=0.005)
    u = np.zeros((prob.n_steps, prob.ops.dim))
    a = evaluate_cost(prob, u, 200, 1, substeps=2).total
    b = evaluate_cost(fine, np.zeros((fine.n_steps, fine.ops.dim)), 200, 1).total
    c = evaluate_cost(prob, u, 200, 1).total
    # shared Brownian paths: the two steps agree far better than independent estimates
    assert abs(a - b) < 0.5 * abs(a - c)


def test_sgd_descends_on_lq_problem():
    prob = lq_oracle_problem(dt=0.01)
    sched = inner_loop(prob, prob.x0[None], ControlSchedule.zeros(prob), SgdConfig(learning_rate=0.5,
                                                                                   n_iterations=200))
    zero = evaluate_cost(prob, np.zeros((prob.n_steps, 1)), 1).total
    assert evaluate_cost(prob, sched.controls, 1).total < 0.8 * zero


def test_riccati_control_is_nearly_stationary():
    lam, kappa, x0 = 1.0, 1e-3, 1.0
    prob = lq_oracle_problem(lam, 1.0, x0, kappa)
    p = riccati_on_grid(lam, 1.0, kappa)
    u = np.empty((prob.n_steps, 1))
    x = x0
    for j in range(prob.n_steps):
        u[j] = -p[j] * x
        x = (x + kappa * u[j, 0]) / (1 + kappa * lam)
    at_zero = np.linalg.norm(sample_gradient(prob, prob.x0, ControlSchedule.zeros(prob), stream(0, 1)))
    at_opt = np.linalg.norm(sample_gradient(prob, prob.x0, ControlSchedule(0, u), stream(0, 1)))
    assert at_opt <= 0.05 * at_zero


def test_noisy_gradient_at_riccati_control_is_small_on_average():
    # one mode with additive noise: the open-loop optimum is still -p x along the mean path
    lam, kappa = 1.0, 0.01
    prob = lq_oracle_problem(lam, 1.0, 1.0, kappa)
    ops = single_mode_operators(lam)
    prob = prob.with_(noise=NoiseModel.build(ops, ADDITIVE, 0.3, ops.basis_values))
    p = riccati_on_grid(lam, 1.0, kappa)
    u = np.empty((prob.n_steps, 1))
    x = 1.0
    for j in range(prob.n_steps):
        u[j] = -p[j] * x
        x = (x + kappa * u[j, 0]) / (1 + kappa * lam)
    R = 400
    g0 = np.mean([sample_gradient(prob, prob.x0, ControlSchedule.zeros(prob), stream(r, 2))
                  for r in range(R)], axis=0)
    g = np.mean([sample_gradient(prob, prob.x0, ControlSchedule(0, u), stream(r, 2))
                 for r in range(R)], axis=0)
    assert np.linalg.norm(g) <= 0.05 * np.linalg.norm(g0)


def test_divergence_cap_after_consecutive_failures():
    prob = heat_problem(8)
    bad = np.full((3, prob.ops.dim), np.nan)
    with pytest.raises(DivergenceError) as info:
        inner_loop(prob, bad, ControlSchedule.zeros(prob, 5), SgdConfig(n_iterations=50))
    err = info.value
    assert err.index == (9, 5) and isinstance(err.partial, ControlSchedule)
    assert err.partial.iteration == 9


def test_run_reports_partial_result_on_divergence():
    prob = heat_problem(8)
    prob = prob.with_(x0=np.full(prob.ops.dim, np.nan))
    obs = ObservationPath(np.zeros((prob.n_steps, 3)))
    with pytest.raises(DivergenceError) as info:
        run_fe_pf_sgd(prob, obs, SgdConfig(n_iterations=20), 5)
    assert info.value.partial.completed == 0


def test_step_size_decay():
    cfg = SgdConfig(learning_rate=0.5, decay=100.0)
    assert cfg.step_size(0) == 0.5 and cfg.step_size(100) == 0.25 and cfg.step_size(300) == 0.125
    assert SgdConfig(learning_rate=0.3).step_size(10 ** 6) == 0.3
    with pytest.raises(ValueError):
        SgdConfig(learning_rate=-1.0)
    with pytest.raises(ValueError):
        SgdConfig(n_iterations=0)


def test_warm_start_drops_committed_entry():
    c = np.arange(12.0).reshape(4, 3)
    s = ControlSchedule(6, c, 17).shifted()
    assert s.base_index == 7 and s.iteration == 0
    assert np.array_equal(s.controls, c[1:]) and np.array_equal(s.committed, c[1])


def test_run_keeps_schedules_and_commits_first_entries():
    prob = heat_problem(10, T=0.1)
    obs = ObservationPath(np.zeros((prob.n_steps, 3)))
    res = run_fe_pf_sgd(prob, obs, SgdConfig(n_iterations=3, seed=2), 10, keep_schedules=True)
    assert len(res.schedules) == prob.n_steps
    for n, sched in enumerate(res.schedules):
        assert sched.shape == (prob.n_steps - n, prob.ops.dim)
        assert np.array_equal(sched[0], res.controls[n])
    assert np.all(np.isfinite(res.means)) and np.isfinite(res.filtered_cost)

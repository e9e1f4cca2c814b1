import dataclasses
import math

import numpy as np
import pytest
from scipy.linalg import expm

from eigensteer.errors import PreconditionError, StiffnessError
from eigensteer.moment_control import ControlSignal, build_moment_problem, solve_min_norm, zero_control
from eigensteer.simulator import (
    PiecewiseControl,
    SimConfig,
    Trajectory,
    check_apriori_v,
    check_apriori_w,
    duhamel_terminal,
    simulate_bilinear,
    simulate_linear_duhamel,
    spillover_check,
)
from eigensteer.spectral_problems import GALLERY, get_problem


def test_free_decay_is_exact(dirichlet):
    lam = dirichlet.eigenvalues(6)
    for k in range(1, 7):
        u0 = np.eye(6)[k - 1]
        tr = simulate_bilinear(dirichlet, u0, None, (0.0, 0.7), SimConfig(n_sim=6))
        assert np.array_equal(tr.final, np.exp(-lam * 0.7) * u0)
    # p = 0 given as a callable takes the splitting path, whose diagonal factors are exact
    tr = simulate_bilinear(dirichlet, np.ones(6), lambda t: 0.0, (0.0, 0.05), SimConfig(n_sim=6))
    assert np.allclose(tr.final, np.exp(-lam * 0.05), rtol=1e-13, atol=0)


def test_two_mode_matrix_exponential(dirichlet):
    A = np.diag(dirichlet.eigenvalues(2)) + 1.5 * dirichlet.b_matrix(2)
    u0 = np.array([0.3, -0.8])
    tr = simulate_bilinear(dirichlet, u0, 1.5, (0.0, 1.0), SimConfig(n_sim=2, dt_max=1e-3))
    assert np.linalg.norm(tr.final - expm(-A) @ u0) <= 1e-8


def test_order_two(dirichlet):
    n = 6
    u0 = np.linspace(1, 0.2, n)
    ref = expm(-(np.diag(dirichlet.eigenvalues(n)) + 2.5 * dirichlet.b_matrix(n)) * 0.4) @ u0
    errs = []
    for dt in (8e-3, 4e-3, 2e-3):
        tr = simulate_bilinear(dirichlet, u0, 2.5, (0, 0.4), SimConfig(n_sim=n, dt_max=dt, tol_step=10), record=False)
        errs.append(np.linalg.norm(tr.final - ref))
    assert 3.5 <= errs[0] / errs[1] <= 4.5
    assert 3.5 <= errs[1] / errs[2] <= 4.5


def test_window_offsets_and_recording(dirichlet):
    tr = simulate_bilinear(dirichlet, [1.0], 0.5, (2.0, 2.01), SimConfig(n_sim=3, dt_max=1e-3))
    assert tr.times[0] == 2.0 and tr.times[-1] == 2.01
    assert np.all(np.diff(tr.times) > 0)
    assert tr.states.shape == (len(tr.times), 3)
    short = simulate_bilinear(dirichlet, [1.0], 0.5, (2.0, 2.01), SimConfig(n_sim=3), record=False)
    assert len(short.times) == 2
    assert np.array_equal(short.final, tr.final)
    with pytest.raises(ValueError):
        simulate_bilinear(dirichlet, [1.0], 0.5, (1.0, 0.0))


def test_empty_window(dirichlet):
    tr = simulate_bilinear(dirichlet, [1.0, 2.0], 3.0, (0.5, 0.5), SimConfig(n_sim=2))
    assert tr.times.tolist() == [0.5]
    assert tr.final.tolist() == [1.0, 2.0]


def test_stiffness_guards(dirichlet):
    with pytest.raises(StiffnessError):
        simulate_bilinear(dirichlet, [1.0], 1e14, (0.0, 1.0), SimConfig(n_sim=2))
    with pytest.raises(StiffnessError):
        simulate_bilinear(dirichlet, [1.0], 1.0, (0.0, 1.0), SimConfig(n_sim=2, max_steps=10))


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n_sim=0)
    with pytest.raises(ValueError):
        SimConfig(scheme="rk4")
    with pytest.raises(ValueError):
        SimConfig(dt_max=0)


def test_duhamel_zero_control_is_pure_decay(dirichlet):
    y0 = np.linspace(1, 2, 5)
    y = duhamel_terminal(dirichlet, 1, y0, zero_control(0.3), 5)
    assert np.array_equal(y, np.exp(-dirichlet.eigenvalues(5) * 0.3) * y0)
    with pytest.raises(ValueError):
        duhamel_terminal(dirichlet, 1, y0, None, 5)


def test_duhamel_scalar_moment_identity():
    # one mode, shift lambda: q = m / T meets the moment, so the terminal state vanishes
    p = get_problem("dirichlet-x2")
    lam = p.eigenvalue(1)
    b = p.b_entry(1, 1)
    y0, T = 0.7, 0.4
    cs = ControlSignal(T, lam, np.array([y0 / b / T]), np.array([0.0]))
    assert abs(duhamel_terminal(p, 1, [y0], cs, 1)[0]) <= 1e-15


def test_linear_trajectory_endpoints(dirichlet):
    y0 = np.eye(10)[1]
    cs = solve_min_norm(build_moment_problem(dirichlet, 1, y0, 0.5, 10), window_offset=1.0)
    ys = simulate_linear_duhamel(dirichlet, 1, y0, cs, 10, t=[1.0, 1.5])
    assert np.array_equal(ys[0], y0)
    assert np.allclose(ys[1], duhamel_terminal(dirichlet, 1, y0, cs, 10), atol=1e-15)


@pytest.mark.parametrize("pid", list(GALLERY))
def test_stepper_matches_closed_form_linear_solution(pid):
    p = get_problem(pid)
    lin = dataclasses.replace(p, b_entry_fn=lambda j, k: 0.0)
    y0 = np.eye(10)[1]
    for T in (0.1, 0.5):
        cs = solve_min_norm(build_moment_problem(p, 1, y0, T, 10))
        tr = simulate_bilinear(lin, y0, cs, (0, T), SimConfig(n_sim=30), forcing=p.b_row(1, 30), record=False)
        assert np.linalg.norm(tr.final - duhamel_terminal(p, 1, y0, cs, 30)) <= 1e-6


def test_forcing_with_generic_callable_matches_exact_path(dirichlet):
    y0 = np.eye(10)[1] * 1e-3
    cs = solve_min_norm(build_moment_problem(dirichlet, 1, y0, 0.3, 10))
    f = dirichlet.b_row(1, 20)
    cfg = SimConfig(n_sim=20)
    exact = simulate_bilinear(dirichlet, y0, cs, (0, 0.3), cfg, forcing=f, record=False).final
    piecewise = simulate_bilinear(dirichlet, y0, PiecewiseControl([cs]), (0, 0.3), cfg, forcing=f, record=False).final
    assert np.linalg.norm(exact - piecewise) <= 1e-9


def test_piecewise_control():
    a = ControlSignal(1.0, 0.0, np.array([2.0]), np.array([0.0]), window_offset=0.0)
    b = ControlSignal(0.5, 0.0, np.array([-1.0]), np.array([0.0]), window_offset=1.0)
    pc = PiecewiseControl([b, a])
    assert pc(0.5) == 2.0 and pc(1.2) == -1.0 and pc(2.0) == 0.0 and pc(-1.0) == 0.0
    assert pc.support_end == 1.5 and len(pc) == 2
    assert pc.integral(0.5, 1.25) == pytest.approx(1.0 - 0.25)
    assert PiecewiseControl().support_end == 0.0


def test_apriori_v_free_decay(dirichlet):
    shifted = dirichlet.shifted(dirichlet.eigenvalue(1))
    v0 = np.eye(5)[1]
    tr = simulate_bilinear(shifted, v0, None, (0, 0.5), SimConfig(n_sim=5))
    chk = check_apriori_v(shifted, tr, None, 1.0, 0.0)
    assert chk.ok and chk.margin >= 0
    assert chk.rhs == pytest.approx(math.exp(shifted.b_norm * 0.5))


def test_apriori_w_cases(dirichlet):
    assert check_apriori_w(dirichlet, 0.0, 0.0, 0.5, 3.0).ok
    a = check_apriori_w(dirichlet, 0.0, 0.1, 0.5, 3.0)
    b = check_apriori_w(dirichlet, 0.0, 0.2, 0.5, 3.0)
    assert b.rhs == pytest.approx(4 * a.rhs, rel=1e-14)
    lenient = check_apriori_w(dirichlet, 0.0, 1.0, 0.5, 3.0)
    assert not lenient.precondition_ok and lenient.note
    with pytest.raises(PreconditionError):
        check_apriori_w(dirichlet, 0.0, 1.0, 0.5, 3.0, strict=True)


def test_spillover_bound(dirichlet):
    shifted = dirichlet.shifted(dirichlet.eigenvalue(1))
    v0 = np.zeros(30)
    v0[1], v0[14] = 1e-3, 1e-4
    cs = solve_min_norm(build_moment_problem(shifted, 1, v0[:10], 0.3, 10))
    tr = simulate_bilinear(shifted, v0, cs, (0, 0.3), SimConfig(n_sim=30), forcing=shifted.b_row(1, 30))
    chk = spillover_check(shifted, v0, tr, cs, 10)
    assert chk.ok and chk.margin >= 0
    assert spillover_check(shifted, v0, Trajectory(tr.times, tr.states[:, :10], 10), cs, 10).ok

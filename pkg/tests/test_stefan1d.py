"""Front-fixed 1D solver against the closed-form similarity references.

The two-phase reference is built inside the test from the classical pair
``u = 1 - erf(xi)/erf(lam)``, ``w = g_inf (1 - erfc(xi)/erfc(lam))`` with the
root of ``lam sqrt(pi) e^(lam^2) = k1/erf(lam) + k2 g_inf/erfc(lam)``; both
phases are caloric, vanish at ``s(t) = 2 lam sqrt(t)``, and satisfy the jump
law by construction.
"""

import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import erf, erfc

from meltfront import (
    FrontTrajectory,
    Grid,
    Stefan1DState,
    StefanSpec1D,
    front_gradient,
    physical_trajectory,
    similarity_oracle,
    solve_stefan,
    step_stefan,
    transcendental_residual,
    write_front_csv,
)
from meltfront.stefan1d import StefanResult

# bisection roots of lam e^(lam^2) erf(lam) = St/sqrt(pi), frozen
LAMBDA = {
    1e-6: 7.071066633354626e-4,
    0.1: 0.22001627274293786,
    0.5: 0.4647859206462444,
    1.0: 0.620062633313596,
    2.0: 0.8006013628056082,
}


# ---------------------------------------------------------------------------
# similarity oracle
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("st,lam", sorted(LAMBDA.items()))
def test_oracle_roots_frozen(st, lam):
    sol = similarity_oracle(st)
    assert sol.lam == pytest.approx(lam, abs=1e-12)
    assert abs(transcendental_residual(sol.lam, st)) <= 1e-12


def test_oracle_small_stefan_asymptote():
    # lam -> sqrt(St/2) as St -> 0
    assert similarity_oracle(1e-6).lam == pytest.approx(math.sqrt(5e-7), abs=1e-9)


def test_oracle_rejects_nonpositive_stefan():
    with pytest.raises(ValueError):
        similarity_oracle(0.0)


def test_similarity_solution_shape():
    sol = similarity_oracle(1.0)
    t = 0.5
    s = sol.front(t)
    assert s == 2.0 * sol.lam * math.sqrt(t)
    assert sol.temperature(0.0, t) == pytest.approx(1.0)
    assert sol.temperature(s, t) == pytest.approx(0.0, abs=1e-15)
    # clamped to zero past the front, raw profile goes negative
    assert sol.temperature(2.0 * s, t) == 0.0
    assert sol.profile(2.0 * s, t) < 0.0


def test_similarity_gradient_and_velocity_consistent():
    """s' = -St * u_x(s-, t) is the transcendental identity itself."""
    sol = similarity_oracle(1.0)
    for t in (0.25, 1.0, 4.0):
        v = sol.front_velocity(t)
        assert v == pytest.approx(-sol.stefan_number * sol.gradient_at_front(t),
                                  rel=1e-12)
        # finite-difference cross-checks of the closed forms
        eps = 1e-6
        fd_v = (sol.front(t + eps) - sol.front(t - eps)) / (2 * eps)
        assert fd_v == pytest.approx(v, rel=1e-8)
        s = float(sol.front(t))
        fd_g = (sol.profile(s, t) - sol.profile(s - eps, t)) / eps
        assert fd_g == pytest.approx(sol.gradient_at_front(t), rel=1e-6)


# ---------------------------------------------------------------------------
# gradients and stepping
# ---------------------------------------------------------------------------

def test_front_gradient_exact_on_quadratics():
    xi = np.linspace(0.0, 1.0, 11)
    s = 0.7
    # u(x) = 2 - 3x + x^2 sampled on x = xi * s
    u = 2.0 - 3.0 * (xi * s) + (xi * s) ** 2
    got = front_gradient(u, s)
    assert got == pytest.approx(-3.0 + 2.0 * s, rel=1e-13)
    # solid side: first node is the front, width required
    w = 5.0 * (xi * 0.3)
    assert front_gradient(w, s, side="solid", width=0.3) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        front_gradient(u, s, side="solid")
    with pytest.raises(ValueError):
        front_gradient(u[:2], s)
    with pytest.raises(ValueError):
        front_gradient(u, s, side="middle")


def test_spec_validation():
    with pytest.raises(ValueError):
        StefanSpec1D(k1=0.0, b=1.0, duration=1.0)
    with pytest.raises(ValueError):
        StefanSpec1D(k1=1.0, b=-1.0, duration=1.0)
    with pytest.raises(ValueError):
        StefanSpec1D(k1=1.0, b=1.0, duration=1.0, nx=3)
    with pytest.raises(ValueError, match="length"):
        StefanSpec1D(k1=1.0, b=1.0, duration=1.0, k2=1.0)
    with pytest.raises(ValueError, match="length"):
        StefanSpec1D(k1=1.0, b=1.0, duration=1.0, k2=1.0, length=0.5)


def test_state_validation():
    with pytest.raises(ValueError):
        Stefan1DState(time=0.0, front=-1.0, liquid=np.zeros(5))
    with pytest.raises(ValueError):
        Stefan1DState(time=0.0, front=1.0, liquid=np.zeros(3))
    with pytest.raises(ValueError, match="mapped grid"):
        Stefan1DState(time=0.0, front=1.0, liquid=np.zeros(5), solid=np.zeros(6))


def test_front_trajectory_container():
    ft = FrontTrajectory(times=[0.0, 1.0], positions=[1.0, 2.0],
                         velocities=[1.0, 1.0])
    assert ft.interpolate(0.5) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        FrontTrajectory(times=[0.0], positions=[1.0, 2.0], velocities=[1.0])
    with pytest.raises(ValueError):
        FrontTrajectory(times=[0.0], positions=[0.0], velocities=[1.0])


def test_step_rejects_unstable_dt():
    sim = similarity_oracle(1.0)
    b = float(sim.front(0.25))
    nodes = sim.temperature(np.linspace(0, 1, 201) * b, 0.25)
    state = Stefan1DState(time=0.25, front=b, liquid=nodes)
    spec = StefanSpec1D(k1=1.0, b=b, duration=1.0, nx=200, t0=0.25)
    with pytest.raises(ValueError, match="stability"):
        step_stefan(spec, state, 1e-4)
    with pytest.raises(ValueError):
        step_stefan(spec, state, 0.0)
    with pytest.raises(ValueError, match="solid"):
        two = StefanSpec1D(k1=1.0, b=b, duration=1.0, k2=1.0, length=2.0,
                           nx=200, t0=0.25)
        step_stefan(two, state, 1e-6)


def test_single_step_tracks_similarity():
    sim = similarity_oracle(1.0)
    t0 = 0.25
    b = float(sim.front(t0))
    nodes = sim.temperature(np.linspace(0, 1, 201) * b, t0)
    state = Stefan1DState(time=t0, front=b, liquid=nodes)
    spec = StefanSpec1D(k1=1.0, b=b, duration=4e-6, nx=200, dt=4e-6, t0=t0)
    out = step_stefan(spec, state, 4e-6)
    assert abs(out.front - float(sim.front(t0 + 4e-6))) < 1e-9
    assert out.liquid[0] == 1.0
    assert out.liquid[-1] == 0.0


# ---------------------------------------------------------------------------
# full solves
# ---------------------------------------------------------------------------

def test_solve_tracks_similarity_front():
    sim = similarity_oracle(1.0)
    t0 = 0.25
    b = float(sim.front(t0))
    spec = StefanSpec1D(k1=1.0, b=b, duration=0.15, boundary=1.0,
                        initial=lambda x: sim.temperature(x, t0),
                        nx=100, t0=t0, snapshot_every=10**9)
    res = solve_stefan(spec)
    t_end = float(res.front.times[-1])
    rel = abs(float(res.front.positions[-1]) - sim.front(t_end)) / sim.front(t_end)
    assert rel < 1e-3
    rep = res.report
    assert rep["warmup_steps"] == 0
    assert rep["front_min_increment"] >= 0.0
    assert rep["max_principle_violations"] == 0
    assert rep["ut_violation_steps"] == 0


def test_degenerate_start_warms_up():
    """Zero initial data under positive heating takes 5 substepped steps."""
    spec = StefanSpec1D(k1=1.0, b=0.05, duration=2e-4, boundary=1.0,
                        nx=50, t0=0.0)
    res = solve_stefan(spec)
    assert res.report["warmup_steps"] == 5
    assert res.report["front_final"] > 0.05
    assert res.report["front_min_increment"] >= -1e-12
    assert res.report["u_min"] >= -1e-12


def test_negative_boundary_rejected():
    spec = StefanSpec1D(k1=1.0, b=0.05, duration=1e-3,
                        boundary=lambda t: -1.0, nx=50)
    with pytest.raises(ValueError, match="nonnegative"):
        solve_stefan(spec)


def test_initial_profile_checks():
    with pytest.raises(ValueError, match="vanish"):
        solve_stefan(StefanSpec1D(k1=1.0, b=1.0, duration=1e-3,
                                  initial=lambda x: np.ones_like(x), nx=50))
    with pytest.raises(ValueError, match="nonnegative"):
        solve_stefan(StefanSpec1D(k1=1.0, b=1.0, duration=1e-3,
                                  initial=lambda x: x - 1.0, nx=50))


def test_two_phase_matches_jump_similarity():
    k1, k2, ginf = 1.0, 0.5, -0.5

    def resid(lam):
        return (lam * math.sqrt(math.pi) * math.exp(lam * lam)
                - k1 / erf(lam) - k2 * ginf / erfc(lam))

    lam = brentq(resid, 1e-6, 2.0, xtol=1e-15, rtol=8.9e-16)
    assert lam == pytest.approx(0.5345871613901705, abs=1e-12)

    def u_exact(x, t):
        return np.maximum(1.0 - erf(np.asarray(x) / (2 * math.sqrt(t))) / erf(lam), 0.0)

    def w_exact(x, t):
        return ginf * (1.0 - erfc(np.asarray(x) / (2 * math.sqrt(t))) / erfc(lam))

    t0, length, duration = 0.2, 1.5, 0.2
    b = 2 * lam * math.sqrt(t0)
    spec = StefanSpec1D(
        k1=k1, k2=k2, b=b, length=length, duration=duration, boundary=1.0,
        # the finite wall carries the exact far-field trace, so the
        # truncated problem stays the similarity problem
        far_boundary=lambda t: float(w_exact(length, t)),
        initial=lambda x: u_exact(x, t0),
        initial_solid=lambda x: np.minimum(w_exact(x, t0), 0.0),
        nx=100, t0=t0,
    )
    res = solve_stefan(spec)
    t_end = float(res.front.times[-1])
    s_ref = 2 * lam * math.sqrt(t_end)
    assert abs(float(res.front.positions[-1]) - s_ref) / s_ref < 1e-4

    xi = np.linspace(0, 1, spec.nx + 1)
    s_f = res.snapshot_fronts[-1]
    t_f = res.trajectory.snapshots[-1].time
    liq_err = np.max(np.abs(res.trajectory.snapshots[-1].values
                            - u_exact(xi * s_f, t_f)))
    sol_err = np.max(np.abs(res.solid_trajectory.snapshots[-1].values
                            - w_exact(s_f + xi * (length - s_f), t_f)))
    assert liq_err < 1e-4
    assert sol_err < 1e-4
    assert res.report["max_principle_violations"] == 0


def test_solid_ramp_freezes_the_front():
    """With no liquid heat, a subcooled solid pulls the front backward."""
    spec = StefanSpec1D(
        k1=1.0, k2=1.0, b=0.5, length=1.0, duration=5e-4,
        boundary=0.0, far_boundary=-1.0,
        initial_solid=lambda x: -2.0 * (x - 0.5),
        nx=50,
    )
    res = solve_stefan(spec)
    assert res.report["front_final"] < 0.5
    assert res.report["front_min_increment"] < 0.0


# ---------------------------------------------------------------------------
# resampling and export
# ---------------------------------------------------------------------------

def test_physical_trajectory_matches_similarity():
    sim = similarity_oracle(1.0)
    t0 = 0.25
    b = float(sim.front(t0))
    spec = StefanSpec1D(k1=1.0, b=b, duration=0.05, boundary=1.0,
                        initial=lambda x: sim.temperature(x, t0),
                        nx=100, t0=t0, snapshot_every=10**9)
    res = solve_stefan(spec)
    grid = Grid(origin=(0.0,), extent=(1.0,), counts=(64,))
    phys = physical_trajectory(res, grid)
    xs = grid.axis_centers(0)
    final = phys.snapshots[-1]
    np.testing.assert_allclose(final.values, sim.temperature(xs, final.time),
                               atol=5e-3)
    # zero past the front in one-phase runs
    assert np.all(final.values[xs > res.snapshot_fronts[-1]] == 0.0)
    with pytest.raises(ValueError):
        physical_trajectory(res, Grid(origin=(0., 0.), extent=(1., 1.),
                                      counts=(8, 8)))
    bare = StefanResult(trajectory=res.trajectory, front=res.front,
                        report=res.report, snapshot_fronts=res.snapshot_fronts)
    with pytest.raises(ValueError, match="spec"):
        physical_trajectory(bare, grid)


def test_front_csv_format(tmp_path):
    ft = FrontTrajectory(times=[0.0, 0.5], positions=[1.0, 1.25],
                         velocities=[0.5, 0.5])
    path = tmp_path / "front.csv"
    write_front_csv(ft, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,s,sdot"
    assert [float(v) for v in lines[1].split(",")] == [0.0, 1.0, 0.5]
    assert [float(v) for v in lines[2].split(",")] == [0.5, 1.25, 0.5]

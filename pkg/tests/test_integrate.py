import numpy as np
import pytest

from sgalign import (
    ConfigError,
    ControllerSpec,
    NetworkSystem,
    NumericDomainError,
    goal_value,
    make_custom,
    make_oscillator,
    make_pendulum,
)
from sgalign.integrate import IntegratorSpec, simulate, step_rk4, step_rk45


def pure_integrator():
    return make_custom(
        1,
        drift=lambda x: np.zeros(1),
        input_map=lambda x: np.ones(1),
        output=lambda x: float(x[0]),
        output_gradient=lambda x: np.ones(1),
        label="integrator",
    )


class TestStepRk4:
    def test_oscillator_matches_rotation(self):
        h = 0.01
        new = step_rk4(make_oscillator(1.0), [np.array([1.0, 0.0])], None, h)
        assert np.allclose(new[0], [np.cos(h), -np.sin(h)], atol=1e-9)

    def test_one_step_consistency_richardson(self):
        net = NetworkSystem((make_oscillator(1.0), make_pendulum(1, 1, 1)))
        spec = ControllerSpec(kind="alignment", gain=0.5)
        states = [np.array([0.7, 0.2]), np.array([1.1, -0.4])]
        slopes = []
        for h in (1e-6, 1e-7):
            new = step_rk4(net, states, spec, h)
            slopes.append(np.concatenate([(n - s) / h for n, s in zip(new, states)]))
        # both difference quotients approximate the same vector field
        assert np.allclose(slopes[0], slopes[1], atol=1e-5)

    def test_pure_integrator_exact(self):
        model = pure_integrator()
        spec = ControllerSpec(kind="tracking", gain=1.0, target=1.0)
        # h(x)=x, target 1, gain 1: u = -(x-1), so xdot = 1 at x=0
        new = step_rk4(model, [np.zeros(1)], spec, 0.5)
        # exact flow of xdot = 1-x over 0.5 is 1-exp(-0.5); RK4 agrees to O(h^5)
        assert new[0][0] == pytest.approx(1.0 - np.exp(-0.5), abs=5e-4)

    def test_constant_input_linear_flow(self):
        # zero drift, u fixed by a saturated controller at 1: x advances by h*u
        model = pure_integrator()
        spec = ControllerSpec(kind="tracking", gain=1e6, target=1e9, saturation=1.0)
        new = step_rk4(model, [np.zeros(1)], spec, 0.5)
        assert new[0][0] == pytest.approx(0.5, abs=1e-12)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(Exception):
            step_rk4(make_oscillator(1.0), [np.array([1.0, 0.0])], None, 0.0)


class TestSimulateOpenLoop:
    @pytest.mark.parametrize("model,x0", [
        (make_pendulum(1, 1, 1), [1.0, 0.0]),
        (make_oscillator(1.0), [1.0, 0.0]),
    ])
    def test_invariance_of_output(self, model, x0):
        traj = simulate(model, [x0], None,
                        IntegratorSpec(step=1e-3, horizon=100.0), record_every=10)
        drift = np.max(np.abs(traj.outputs[:, 0] - traj.outputs[0, 0]))
        assert drift <= 1e-7

    def test_open_loop_controls_are_zero(self):
        net = NetworkSystem((make_oscillator(1.0), make_oscillator(2.0)))
        traj = simulate(net, [[1.0, 0.0], [0.3, 0.2]], None,
                        IntegratorSpec(step=1e-3, horizon=1.0), record_every=100)
        assert np.all(traj.controls == 0.0)

    def test_goal_recomputation_identity(self):
        net = NetworkSystem((make_oscillator(1.0), make_pendulum(1, 1, 1)))
        spec = ControllerSpec(kind="alignment", gain=0.5)
        traj = simulate(net, [[1.0, 0.4], [0.3, 0.2]], spec,
                        IntegratorSpec(step=1e-3, horizon=2.0), record_every=7)
        for k in range(traj.records):
            assert traj.goal[k] == pytest.approx(goal_value(traj.outputs[k]), rel=1e-15)

    def test_times_strictly_increasing_and_lengths_match(self):
        traj = simulate(make_oscillator(1.0), [[1.0, 0.0]], None,
                        IntegratorSpec(step=1e-3, horizon=1.0), record_every=3)
        assert np.all(np.diff(traj.times) > 0)
        r = traj.records
        assert traj.outputs.shape[0] == r
        assert traj.controls.shape[0] == r
        assert traj.goal.shape[0] == r
        assert traj.goal_rate_bound.shape[0] == r
        assert all(s.shape[0] == r for s in traj.states)
        assert traj.times[-1] == pytest.approx(1.0)


class TestSimulateClosedLoop:
    def test_two_oscillator_leveling(self):
        net = NetworkSystem((make_oscillator(1.0), make_oscillator(1.0)))
        spec = ControllerSpec(kind="alignment", gain=0.5)
        integ = IntegratorSpec(step=1e-3, horizon=200.0)
        traj = simulate(net, [[1.0, 1.0], [0.5, 0.5]], spec, integ, record_every=10)
        spread = abs(traj.outputs[-1, 0] - traj.outputs[-1, 1])
        assert spread < 1e-3
        # integrator independence: same conclusion at half the step
        traj2 = simulate(net, [[1.0, 1.0], [0.5, 0.5]], spec,
                         IntegratorSpec(step=5e-4, horizon=200.0), record_every=20)
        assert abs(traj2.outputs[-1, 0] - traj2.outputs[-1, 1]) < 1e-3

    def test_aligned_start_is_invariant_manifold(self):
        net = NetworkSystem((make_oscillator(1.0), make_oscillator(1.0)))
        spec = ControllerSpec(kind="alignment", gain=0.5)
        traj = simulate(net, [[1.0, 0.0], [0.0, 1.0]], spec,
                        IntegratorSpec(step=1e-3, horizon=50.0), record_every=10)
        assert np.max(traj.goal) <= 1e-12
        assert np.max(np.abs(traj.controls)) <= 1e-12

    def test_monotone_goal(self):
        net = NetworkSystem((make_pendulum(1, 1, 1), make_oscillator(1.0)))
        spec = ControllerSpec(kind="alignment", gain=0.3)
        traj = simulate(net, [[1.2, 0.0], [0.2, 0.1]], spec,
                        IntegratorSpec(step=1e-3, horizon=50.0), record_every=10)
        assert np.all(np.diff(traj.goal) <= 1e-9)

    def test_goal_rate_bound_matches_numerical_derivative(self):
        net = NetworkSystem((make_oscillator(1.0), make_oscillator(1.0)))
        spec = ControllerSpec(kind="alignment", gain=0.5)
        traj = simulate(net, [[1.0, 1.0], [0.5, 0.5]], spec,
                        IntegratorSpec(step=1e-3, horizon=20.0), record_every=10)
        t, q, r = traj.times, traj.goal, traj.goal_rate_bound
        dt = t[1] - t[0]
        checked = 0
        for k in range(3, len(t) - 3):
            if abs(r[k]) <= 1e-8:
                continue
            fd = (-q[k - 3] + 9 * q[k - 2] - 45 * q[k - 1]
                  + 45 * q[k + 1] - 9 * q[k + 2] + q[k + 3]) / (60 * dt)
            assert abs(fd - r[k]) / abs(r[k]) <= 1e-3
            checked += 1
        assert checked > 100

    def test_step_halving_is_order_four(self):
        errs = []
        for h in (1e-2, 5e-3):
            traj = simulate(make_oscillator(1.0), [[1.0, 0.0]], None,
                            IntegratorSpec(step=h, horizon=10.0),
                            record_every=10 ** 9)
            exact = np.array([np.cos(10.0), -np.sin(10.0)])
            errs.append(np.linalg.norm(traj.states[0][-1] - exact))
        ratio = errs[0] / errs[1]
        assert 16.0 * 0.8 <= ratio <= 16.0 * 1.2

    def test_determinism_bit_identical(self):
        net = NetworkSystem((make_oscillator(1.0), make_pendulum(1, 1, 1)))
        spec = ControllerSpec(kind="alignment", gain=0.5)
        integ = IntegratorSpec(step=1e-3, horizon=5.0)
        a = simulate(net, [[1.0, 0.4], [0.3, 0.2]], spec, integ, record_every=10)
        b = simulate(net, [[1.0, 0.4], [0.3, 0.2]], spec, integ, record_every=10)
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a.states, b.states))
        assert a.goal.tobytes() == b.goal.tobytes()

    def test_blowup_attaches_partial_trajectory(self):
        # xdot = x^2 escapes to infinity in finite time
        blowup = make_custom(
            1,
            drift=lambda x: x * x,
            input_map=lambda x: np.zeros(1),
            output=lambda x: float(x[0]),
            output_gradient=lambda x: np.ones(1),
            label="blowup",
        )
        with pytest.raises(NumericDomainError) as exc_info, \
                np.errstate(over="ignore", invalid="ignore"):
            simulate(blowup, [[1.0]], None,
                     IntegratorSpec(step=1e-2, horizon=5.0), record_every=1)
        err = exc_info.value
        assert err.time is not None and err.time < 1.5
        assert err.partial is not None and err.partial.records >= 1


class TestRk45:
    def test_one_period_returns_to_start(self):
        rel_tol = 1e-8
        traj = simulate(make_oscillator(1.0), [[1.0, 0.0]], None,
                        IntegratorSpec(method="rk45", step=1e-2,
                                       horizon=2 * np.pi, rel_tol=rel_tol),
                        record_every=1)
        assert np.linalg.norm(traj.states[0][-1] - [1.0, 0.0]) <= rel_tol * 10

    def test_agrees_with_rk4(self):
        net = NetworkSystem((make_oscillator(1.0), make_oscillator(1.0)))
        spec = ControllerSpec(kind="alignment", gain=0.5)
        a = simulate(net, [[1.0, 1.0], [0.5, 0.5]], spec,
                     IntegratorSpec(method="rk45", step=1e-3, horizon=10.0,
                                    rel_tol=1e-10, abs_tol=1e-12),
                     record_every=10 ** 9)
        b = simulate(net, [[1.0, 1.0], [0.5, 0.5]], spec,
                     IntegratorSpec(step=1e-4, horizon=10.0),
                     record_every=10 ** 9)
        for sa, sb in zip(a.states, b.states):
            assert np.allclose(sa[-1], sb[-1], atol=1e-6)

    def test_single_step_interface(self):
        new, accepted, next_h = step_rk45(
            make_oscillator(1.0), [np.array([1.0, 0.0])], None,
            h=1e-3, rel_tol=1e-8, abs_tol=1e-10)
        assert accepted
        assert next_h > 0
        assert np.allclose(new[0], [np.cos(1e-3), -np.sin(1e-3)], atol=1e-12)

    def test_zero_tolerance_rejected(self):
        with pytest.raises(ConfigError):
            IntegratorSpec(method="rk45", step=1e-3, horizon=1.0, rel_tol=0.0)
        with pytest.raises(ConfigError):
            step_rk45(make_oscillator(1.0), [np.array([1.0, 0.0])], None,
                      h=1e-3, rel_tol=0.0, abs_tol=1e-10)


class TestSpecValidation:
    def test_step_must_be_below_horizon(self):
        with pytest.raises(ConfigError):
            IntegratorSpec(step=2.0, horizon=1.0)

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            IntegratorSpec(method="euler")

    def test_tracking_needs_single_subsystem(self):
        net = NetworkSystem((make_oscillator(1.0), make_oscillator(1.0)))
        spec = ControllerSpec(kind="tracking", gain=1.0, target=1.0)
        with pytest.raises(ConfigError):
            simulate(net, [[1.0, 0.0], [0.0, 1.0]], spec,
                     IntegratorSpec(step=1e-3, horizon=1.0))

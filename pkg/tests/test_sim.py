"""Simulation-layer contracts: sensor geometry, the Euler update, trial
outcomes, and the exact mirror symmetry of trajectories."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from morpho.sim import (
    CANONICAL_DESIGN,
    PROFILES,
    START_DISTANCE,
    BodyDesign,
    Environment,
    EnvironmentSet,
    Policy,
    Pose,
    SimProfile,
    default_environment_set,
    evaluate_all,
    sensor_value,
    sensor_world_position,
    simulate,
    step,
    trial_distances,
)
from morpho.landscape import mirror_design, mirror_environment


class TestTypes:
    def test_design_bounds_enforced(self):
        with pytest.raises(ValueError):
            BodyDesign(l1=(0.6, 0.0), l2=(0.0, 0.0))
        with pytest.raises(ValueError):
            BodyDesign(l1=(0.0, 0.0), l2=(0.0, -0.51))

    def test_policy_bounds_enforced(self):
        with pytest.raises(ValueError):
            Policy(1.2, 0.0)

    def test_pose_requires_finite(self):
        with pytest.raises(ValueError):
            Pose(float("nan"), 0.0, 0.0)

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            SimProfile(dt=0.0, steps=10)
        with pytest.raises(ValueError):
            SimProfile(dt=0.1, steps=0)
        with pytest.raises(ValueError):
            SimProfile(dt=0.1, steps=10, success_radius=0.075, sensor_floor=0.075)

    def test_default_environment_set(self):
        envset = default_environment_set()
        assert len(envset) == 4
        d = START_DISTANCE
        starts = [(e.start.x, e.start.y) for e in envset]
        assert starts == [(d, d), (d, -d), (-d, d), (-d, -d)]
        for e in envset:
            assert e.start.alpha == 0.0
            assert math.hypot(e.start.x, e.start.y) == pytest.approx(4.0)

    def test_environment_set_rejects_inside_start(self, desk):
        bad = EnvironmentSet((Environment(Pose(0.01, 0.0, 0.0)),))
        with pytest.raises(ValueError):
            bad.validate_against(desk)

    def test_environment_count_prefix(self):
        assert len(default_environment_set(count=2)) == 2
        with pytest.raises(ValueError):
            default_environment_set(count=5)


class TestSensorGeometry:
    def test_zero_offset_identity(self):
        assert sensor_world_position(Pose(3, 0, 0), (0, 0)) == pytest.approx([3, 0])

    def test_quarter_turn(self):
        got = sensor_world_position(Pose(3, 0, math.pi / 2), (0.5, 0))
        assert got == pytest.approx([3.0, 0.5])

    def test_half_turn(self):
        got = sensor_world_position(Pose(0, 0, math.pi), (0.5, 0.5))
        assert got == pytest.approx([-0.5, -0.5])

    def test_inverse_square_values(self):
        assert sensor_value(Pose(3, 0, 0), (0, 0), 1e-3) == pytest.approx(1 / 9)
        assert sensor_value(Pose(0, 2, 0), (0, 0), 1e-3) == pytest.approx(0.25)
        assert sensor_value(Pose(3, 0, math.pi / 2), (0.5, 0), 1e-3) == pytest.approx(1 / 9.25)

    def test_floor_caps_intensity(self):
        assert sensor_value(Pose(0, 0, 0), (0, 0), 1e-3) == pytest.approx(1e6)

    @given(
        x=st.floats(-5, 5), y=st.floats(-5, 5), a=st.floats(-10, 10),
        ox=st.floats(-0.5, 0.5), oy=st.floats(-0.5, 0.5),
    )
    def test_intensity_bounded_by_floor(self, x, y, a, ox, oy):
        v = sensor_value(Pose(x, y, a), (ox, oy), 1e-3)
        assert 0 < v <= 1e6
        assert math.isfinite(v)


class TestStep:
    def test_zero_policy_is_fixed_point(self):
        pose = Pose(1.5, -2.0, 0.7)
        nxt = step(pose, CANONICAL_DESIGN, Policy(0, 0), 0.1, 1e-3)
        assert nxt == pose

    def test_forward_hand_value(self):
        d = BodyDesign((0, 0), (0, 0))
        got = step(Pose(3, 0, 0), d, Policy(1, 1), 0.1, 1e-3)
        assert got.x == pytest.approx(3.0111111, abs=1e-6)
        assert got.y == 0.0
        assert got.alpha == 0.0

    def test_pure_turn_hand_value(self):
        d = BodyDesign((0, 0), (0, 0))
        got = step(Pose(3, 0, 0), d, Policy(1, -1), 0.1, 1e-3)
        assert got.x == 3.0
        assert got.y == 0.0
        assert got.alpha == pytest.approx(0.0222222, abs=1e-6)

    def test_position_uses_pre_step_heading(self):
        # An off-center single sensor turns the robot; the position update
        # must still use the old heading.
        d = BodyDesign((0, 0.5), (0, -0.5))
        pose = Pose(2.0, 0.0, 0.0)
        nxt = step(pose, d, Policy(1, 0), 0.5, 1e-3)
        s1 = sensor_value(pose, d.l1, 1e-3)
        assert nxt.y == 0.0  # sin(old alpha) = 0 even though alpha changed
        assert nxt.x == pytest.approx(2.0 + 0.5 * s1 * 0.5 * 1.0)
        assert nxt.alpha == pytest.approx(s1 * 0.5)


class TestSimulate:
    def test_zero_policy_never_moves(self, envset, desk):
        res = simulate(BodyDesign((0, 0), (0, 0)), Policy(0, 0),
                       envset.environments[0], desk)
        assert not res.success
        assert res.min_distance == pytest.approx(4.0)
        assert res.end_distance == pytest.approx(4.0)
        assert res.steps_used == desk.steps

    def test_immediate_success_inside_radius(self, desk):
        env = Environment(Pose(0.05, 0.0, 0.0))
        res = simulate(CANONICAL_DESIGN, Policy(1, 1), env, desk)
        assert res.success
        assert res.steps_used == 0
        assert len(res.sensor_trace_1) == 1
        assert res.min_distance == pytest.approx(0.05)

    def test_straight_line_closest_approach(self):
        # Coincident centered sensors cancel turning for equal weights, so
        # the robot drives straight along y = -d; the closest approach to
        # the origin is d once it crosses x = 0. A quadrature oracle on
        # dx/dt = 1/(x^2 + d^2) bounds the crossing time well inside the
        # horizon.
        d = START_DISTANCE
        crossing_time, _ = quad(lambda x: x * x + d * d, -d, 0.0)
        profile = PROFILES["full"]
        assert crossing_time < profile.dt * profile.steps * 0.05
        res = simulate(BodyDesign((0, 0), (0, 0)), Policy(1, 1),
                       Environment(Pose(-d, -d, 0.0)), profile)
        assert not res.success
        assert res.min_distance == pytest.approx(d, abs=1e-3)

    def test_trace_lengths_and_success_invariant(self, envset, desk):
        res = simulate(CANONICAL_DESIGN, Policy(0.6, 0.98),
                       envset.environments[0], desk)
        assert len(res.sensor_trace_1) == res.steps_used + 1
        assert len(res.sensor_trace_2) == res.steps_used + 1
        assert res.success == (res.min_distance <= desk.success_radius)
        assert np.isfinite(res.sensor_trace_1).all()

    def test_min_distance_monotone_in_horizon(self, rng):
        design = BodyDesign((0.25, 0.5), (-0.5, -0.25))
        policy = Policy(0.9, -0.35)
        env = Environment(Pose(START_DISTANCE, START_DISTANCE, 0.0))
        last = math.inf
        for steps in (50, 100, 400, 1600, 3200):
            res = simulate(design, policy, env, SimProfile(dt=0.1, steps=steps),
                           stop_on_success=False)
            assert res.min_distance <= last + 1e-15
            last = res.min_distance

    def test_evaluate_all_matches_simulate(self, envset, short_profile):
        design = CANONICAL_DESIGN
        policy = Policy(0.4, 0.7)
        results = evaluate_all(design, policy, envset, short_profile)
        assert len(results) == 4
        for env, res in zip(envset, results):
            solo = simulate(design, policy, env, short_profile)
            assert solo.min_distance == res.min_distance
            assert solo.success == res.success
            assert solo.steps_used == res.steps_used

    def test_single_environment_reduction(self, short_profile):
        envset = default_environment_set(count=1)
        results = evaluate_all(CANONICAL_DESIGN, Policy(0.3, 0.3), envset,
                               short_profile)
        assert len(results) == 1

    def test_trial_distances_agrees_with_simulate(self, envset, short_profile):
        design = BodyDesign((-0.5, -0.25), (0.5, 0.25))
        policy = Policy(-0.85, 0.82)
        min_d, end_d, solved = trial_distances(design, policy,
                                               envset.start_array(), short_profile)
        results = evaluate_all(design, policy, envset, short_profile)
        np.testing.assert_array_equal(min_d, [r.min_distance for r in results])
        np.testing.assert_array_equal(end_d, [r.end_distance for r in results])
        assert solved == sum(r.success for r in results)


def _mirror_policy(policy: Policy) -> Policy:
    return Policy(policy.w2, policy.w1)


class TestMirrorSymmetry:
    """Reflecting design, policy, and start about the x-axis reproduces the
    trajectory's distance profile exactly (bit-for-bit)."""

    @settings(max_examples=60, deadline=None)
    @given(
        l1x=st.floats(-0.5, 0.5), l1y=st.floats(-0.5, 0.5),
        l2x=st.floats(-0.5, 0.5), l2y=st.floats(-0.5, 0.5),
        w1=st.floats(-1, 1), w2=st.floats(-1, 1),
        x0=st.floats(-4, 4), y0=st.floats(-4, 4),
        a0=st.floats(-3.2, 3.2),
    )
    def test_reflected_trial_is_identical(self, l1x, l1y, l2x, l2y,
                                          w1, w2, x0, y0, a0):
        profile = SimProfile(dt=0.1, steps=400)
        design = BodyDesign((l1x, l1y), (l2x, l2y))
        policy = Policy(w1, w2)
        env = Environment(Pose(x0, y0, a0))
        a = simulate(design, policy, env, profile)
        b = simulate(mirror_design(design), _mirror_policy(policy),
                     mirror_environment(env), profile)
        assert a.min_distance == b.min_distance
        assert a.success == b.success
        assert a.steps_used == b.steps_used
        np.testing.assert_array_equal(a.sensor_trace_1, b.sensor_trace_2)
        np.testing.assert_array_equal(a.sensor_trace_2, b.sensor_trace_1)

    def test_desk_profile_example(self, desk):
        design = BodyDesign((0.25, -0.5), (0.5, 0.125))
        policy = Policy(-0.3, 0.8)
        env = Environment(Pose(START_DISTANCE, START_DISTANCE, 0.0))
        a = simulate(design, policy, env, desk)
        b = simulate(mirror_design(design), _mirror_policy(policy),
                     mirror_environment(env), desk)
        assert a.min_distance == b.min_distance
        assert a.success == b.success


class TestConvergence:
    # The dt-halving robustness rate at the working profile is asserted as
    # an acceptance criterion in test_acceptance.py; trajectories passing
    # near the source are genuinely step-size sensitive (the intensity
    # field is stiff there), so no unit-level duplicate is kept here.

    def test_far_field_min_distance_converges(self, envset):
        # Away from the source the integrator's closest-approach estimate
        # is stable under refinement.
        design = BodyDesign((0, 0), (0, 0))
        policy = Policy(1, 1)  # straight line, closest approach START_DISTANCE
        env = Environment(Pose(-START_DISTANCE, -START_DISTANCE, 0.0))
        coarse = simulate(design, policy, env, SimProfile(dt=0.1, steps=20_000))
        fine = simulate(design, policy, env, SimProfile(dt=0.05, steps=40_000))
        assert coarse.min_distance == pytest.approx(fine.min_distance, abs=1e-6)

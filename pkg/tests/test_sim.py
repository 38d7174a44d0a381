import numpy as np
import pytest

from fgc.gait import GaitParams, ideal_body_position, phase_schedule, world_foot_position
from fgc.kinematics import rigid_inverse_position
from fgc.robot_model import LEG_IDS
from fgc.sim import (NoEquilibriumError, UnreachableAnchorError, compute_metrics, read_trial_csv, run_trial,
                     solve_equilibrium_pose, touchdown_check)
from oracles import closure_residuals


def _nominal(model, legs=LEG_IDS):
    """Rigid commands and world anchors for the nominal posture at the ideal start pose."""
    s = phase_schedule("amble", 16.0)
    p = GaitParams()
    body = ideal_body_position(0.0, p.speed, model)
    anchors, q = {}, {}
    for leg_id in legs:
        a = world_foot_position(s, model, leg_id, 0.0, p.stride_m, p.step_height_m)[0]
        anchors[leg_id] = a
        q[leg_id] = rigid_inverse_position(model.leg(leg_id), a - body - model.leg(leg_id).shoulder_offset)
    return q, anchors, body


def test_zero_gravity_keeps_ideal_pose(model, env):
    q, anchors, body = _nominal(model)
    st = solve_equilibrium_pose(model, env.with_gravity(0.0), q, anchors)
    np.testing.assert_allclose(st.body_position, body, atol=1e-9)
    np.testing.assert_allclose(st.body_rpy, 0.0, atol=1e-9)
    for f in st.forces_world.values():
        np.testing.assert_allclose(f, 0.0, atol=1e-8)


def test_rigid_limit_keeps_ideal_pose(model, env):
    q, anchors, body = _nominal(model)
    st = solve_equilibrium_pose(model.scaled_stiffness(1e9), env, q, anchors)
    np.testing.assert_allclose(st.body_position, body, atol=1e-9)
    np.testing.assert_allclose(st.body_rpy, 0.0, atol=1e-8)


def test_equilibrium_closes(model, env):
    q, anchors, _ = _nominal(model, ("RF", "LH", "RH"))
    st = solve_equilibrium_pose(model, env, q, anchors)
    gap, force, moment = closure_residuals(model, env, st)
    assert gap < 1e-9 and force < 1e-8 and moment < 1e-8
    assert st.body_position[2] < ideal_body_position(0.0, 0.0, model)[2]  # ceiling: body sags away from the plane


def test_needs_two_legs(model, env):
    q, anchors, _ = _nominal(model, ("RF",))
    with pytest.raises(NoEquilibriumError):
        solve_equilibrium_pose(model, env, q, anchors)


def test_unreachable_anchor(model, env):
    q, anchors, _ = _nominal(model, ("RF", "LH"))
    anchors["RF"] = anchors["RF"] + np.array([1.0, 0.0, 0.0])
    with pytest.raises(UnreachableAnchorError):
        solve_equilibrium_pose(model, env, q, anchors)


def test_touchdown_thresholds(model, env):
    q, anchors, _ = _nominal(model)
    st = solve_equilibrium_pose(model, env.with_gravity(0.0), q, anchors)
    exact = touchdown_check(st, model, "LF", q["LF"], anchors["LF"])
    assert exact.success and exact.position_error_mm < 1e-5
    off = touchdown_check(st, model, "LF", q["LF"], anchors["LF"] + [0.006, 0.0, 0.0])
    assert not off.success and off.position_error_mm == pytest.approx(6.0, abs=1e-5)
    strict = touchdown_check(solve_equilibrium_pose(model, env, q, anchors), model, "LF", q["LF"],
                             anchors["LF"], thresholds=(0.0, 0.0))
    assert not strict.success


def test_compute_metrics():
    s = compute_metrics({"a": [1.0, -1.0, 0.5], "b": [3.0, 3.0]})
    assert s["a"].peak_to_peak == 2.0 and s["a"].median == 0.5
    assert s["b"].peak_to_peak == 0.0
    with pytest.raises(ValueError):
        compute_metrics({"c": []})


@pytest.fixture(scope="module")
def short_trial(model, env):
    return run_trial(model, env, cycles=1, samples_per_phase=3)


def test_trial_csv_round_trip(short_trial):
    channels, touchdowns = read_trial_csv(short_trial.to_csv())
    np.testing.assert_array_equal(channels["t_s"], short_trial.t)
    for c in short_trial.channels:
        np.testing.assert_array_equal(channels[c], short_trial.channels[c])
    assert len(touchdowns) == len(short_trial.touchdowns) == 4


def test_trial_is_deterministic(model, env, short_trial):
    again = run_trial(model, env, cycles=1, samples_per_phase=3)
    assert again.to_csv() == short_trial.to_csv()


def test_zero_gravity_trial_on_equals_off(model, env):
    flat = env.with_gravity(0.0)
    on = run_trial(model, flat, cycles=1, samples_per_phase=2)
    off = run_trial(model, flat, fgc=False, cycles=1, samples_per_phase=2)
    assert on.to_csv() == off.to_csv()
    assert on.success and max(on.peak_to_peak(c) for c in on.channels) < 1e-6


def test_trot_completes(model, env):
    m = run_trial(model, env, GaitParams(kind="trot"), cycles=1, samples_per_phase=3)
    assert m.error is None
    assert len(m.touchdowns) == 4
    assert set(m.summary()) >= {"gait", "fgc", "success", "touchdown_failures"}


def test_bad_arguments(model, env):
    with pytest.raises(ValueError):
        run_trial(model, env, cycles=0)

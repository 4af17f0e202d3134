import numpy as np
import pytest

from slipgait.control import (
    Controller,
    Gains,
    combined_feedback,
    open_loop_controller,
    slip_only_feedback,
    stacked_decoupling,
)
from slipgait.errors import NearSingularDecoupling, SlipChannelSingular
from slipgait.gait import holonomic_output
from slipgait.slip import SlipLaw, DEFAULT_A_ROW


def near_gait_state(gait, rng, s=0.4, noise=0.02):
    q = gait.configuration(s) + rng.normal(scale=noise, size=7)
    q[1] = 0.0
    dq = gait.tangent(s) * 0.6 + rng.normal(scale=noise, size=7)
    dq[1] = 0.0
    return q, dq


def accelerations(model, q, dq, u):
    return model.forward_dynamics(q, dq, u, return_forces=True)


# gains -------------------------------------------------------------------------

def test_gains_scalar_expansion_and_roundtrip(tmp_path):
    g = Gains(5.0, 4.0, 3.0)
    assert np.array_equal(g.Kp, 4.0 * np.eye(6))
    p = tmp_path / "g.json"
    g.to_json(p)
    g2 = Gains.from_json(p)
    assert g2.k_s == 5.0 and np.array_equal(g2.Kd, g.Kd)
    assert Gains.from_dict({"k_s": 1, "Kp": 2, "Kd": 3}).Kp[0, 0] == 2.0
    full = Gains(1.0, np.diag(np.arange(1.0, 7.0)), 1.0)
    assert Gains.from_dict(full.to_dict()).Kp[5, 5] == 6.0


@pytest.mark.parametrize("kwargs,msg", [
    ({"k_s": 0.0}, "k_s must be positive"),
    ({"Kp": -1.0}, "Kp must be positive definite"),
    ({"Kd": np.diag([1, 1, 1, 1, 1, 0.0])}, "Kd must be positive definite"),
    ({"Kp": np.ones((3, 3))}, "6 x 6"),
])
def test_gains_validation(kwargs, msg):
    with pytest.raises(ValueError, match=msg):
        Gains(**kwargs)


def test_gains_unknown_field():
    with pytest.raises(ValueError, match="unknown"):
        Gains.from_dict({"ki": 1.0})


def test_controller_mode_validation(model, gait):
    with pytest.raises(ValueError):
        Controller(model, gait, Gains(), "pid")


# closed-loop identities -------------------------------------------------------

def test_combined_imposes_both_channels(model, gait, gains, rng):
    law = SlipLaw(np.array(DEFAULT_A_ROW), 0.58)
    for _ in range(10):
        q, dq = near_gait_state(gait, rng, s=rng.uniform(0.1, 0.9))
        ce = combined_feedback(q, dq, gains, gait, law, model)
        ddq, lam = accelerations(model, q, dq, ce.u)
        # the law's contact force is the one the contact model produces
        assert lam.lambda_n == pytest.approx(ce.lam.lambda_n, rel=1e-8, abs=1e-8)
        out = holonomic_output(q, dq, gait)
        eta_dot = law.A_at(q) @ ddq
        assert eta_dot == pytest.approx(-gains.k_s * ce.eta_s, abs=1e-7)
        ydd = out.Jy @ ddq + out.Jy_dot_dq
        assert np.abs(ydd + gains.Kd @ out.ydot + gains.Kp @ out.y).max() < 1e-7


def test_combined_gauge_no_actuator_load_on_normal(model, gait, gains, rng):
    law = SlipLaw(np.array(DEFAULT_A_ROW), 0.58)
    q, dq = near_gait_state(gait, rng)
    ce = combined_feedback(q, dq, gains, gait, law, model)
    Jn = model.evaluate(q).J_f[1]
    assert abs(Jn @ (model.B @ ce.u)) < 1e-9


def test_slip_only_imposes_slip_channel(model, gait, gains, rng):
    law = SlipLaw(np.array(DEFAULT_A_ROW), 0.58)
    for _ in range(10):
        q, dq = near_gait_state(gait, rng, s=rng.uniform(0.1, 0.9))
        ce = slip_only_feedback(q, dq, gains, gait, law, model)
        ddq, lam = accelerations(model, q, dq, ce.u)
        assert lam.lambda_n == pytest.approx(ce.lam.lambda_n, rel=1e-8)
        assert law.A_at(q) @ ddq == pytest.approx(-gains.k_s * ce.eta_s, abs=1e-7)


def test_open_loop_imposes_holonomic_channel(model, gait, gains, rng):
    law = SlipLaw(np.array(DEFAULT_A_ROW), 0.58)
    q, dq = near_gait_state(gait, rng)
    ce = open_loop_controller(q, dq, gains, gait, law, model)
    ddq, lam = accelerations(model, q, dq, ce.u)
    out = holonomic_output(q, dq, gait)
    ydd = out.Jy @ ddq + out.Jy_dot_dq
    assert np.abs(ydd + gains.Kd @ out.ydot + gains.Kp @ out.y).max() < 1e-7


def test_decoupling_matrix_right_inverse(model, gait, gains, rng):
    law = SlipLaw(np.array(DEFAULT_A_ROW), 0.58)
    q, dq = near_gait_state(gait, rng)
    ce = combined_feedback(q, dq, gains, gait, law, model)
    A = ce.A_mat
    assert A.shape == (7, 7)
    assert np.abs(A @ np.linalg.inv(A) - np.eye(7)).max() < 1e-9
    assert ce.sigma_min_A == pytest.approx(np.linalg.svd(A, compute_uv=False)[-1])
    assert ce.norm_Ms == pytest.approx(np.linalg.norm(A[0]))


def test_stacked_decoupling_shapes():
    A, s = stacked_decoupling(np.ones(7), np.eye(7)[1:])
    assert A.shape == (7, 7) and s > 0


def test_zero_slip_row_is_singular(model, gait, gains, rng):
    # a zero slip row gives M_s = 0
    q, dq = near_gait_state(gait, rng)
    law = SlipLaw(np.zeros(7), 0.0)
    with pytest.raises(NearSingularDecoupling):
        combined_feedback(q, dq, gains, gait, law, model)
    with pytest.raises(SlipChannelSingular):
        slip_only_feedback(q, dq, gains, gait, law, model)


def test_slip_row_in_holonomic_span_is_singular(model, gait, gains, rng):
    q, dq = near_gait_state(gait, rng)
    # a slip row equal to one of the regulated outputs duplicates a row of A
    law = SlipLaw(holonomic_output(q, dq, gait).Jy[2], 0.0)
    with pytest.raises(NearSingularDecoupling):
        combined_feedback(q, dq, gains, gait, law, model)


def test_controller_call_matches_function(model, gait, gains, rng):
    law = SlipLaw(np.array(DEFAULT_A_ROW), 0.58)
    q, dq = near_gait_state(gait, rng)
    c = Controller(model, gait, gains, "slip_only")
    assert np.array_equal(c(q, dq, law).u, slip_only_feedback(q, dq, gains, gait, law, model).u)


def test_sigma_min_bounded_by_curve_direction(model, gait, gains):
    # with v = D t and t tangent to the gait curve (Jy t = 0), A v = [A t; 0],
    # so sigma_min(A) <= |A t| / ||D t||; ||D t|| is at least the total mass
    law = SlipLaw(np.array(DEFAULT_A_ROW), 0.58)
    for s in np.linspace(0.0, 1.0, 11):
        q = gait.configuration(s)
        t = gait.tangent(s)
        ce = combined_feedback(q, t * 0.6, gains, gait, law, model)
        bound = abs(law.A_at(q) @ t) / np.linalg.norm(model.mass_matrix(q) @ t)
        assert ce.sigma_min_A <= bound * (1 + 1e-9)
        assert bound < 0.05

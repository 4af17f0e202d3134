import logging

import numpy as np
import pytest

from slipgait.errors import DegreeTooLow
from slipgait.gait import (
    GaitSpec,
    bezier_eval,
    default_h_select,
    holonomic_output,
    output_accel_decomposition,
    phase,
)
from slipgait.dynamics import ContactForces


def line_gait(M=3):
    # every output rises linearly from 0 to 1 across the step
    alpha = np.tile(np.linspace(0.0, 1.0, M + 1), (6, 1))
    return GaitSpec(alpha, -0.2, 0.2)


def test_bezier_endpoints_and_slopes():
    a = np.array([0.3, -1.0, 2.0, 0.7])
    M = 3
    e0, e1 = bezier_eval(a, 0.0), bezier_eval(a, 1.0)
    assert e0.value == pytest.approx(0.3) and e1.value == pytest.approx(0.7)
    assert e0.d1 == pytest.approx(M * (a[1] - a[0]))
    assert e1.d1 == pytest.approx(M * (a[3] - a[2]))
    assert e0.d2 == pytest.approx(M * (M - 1) * (a[2] - 2 * a[1] + a[0]))


def test_bezier_reproduces_linear_function():
    a = np.linspace(1.0, 3.0, 6)
    for s in np.linspace(0, 1, 9):
        e = bezier_eval(a, s)
        assert e.value == pytest.approx(1.0 + 2.0 * s)
        assert e.d1 == pytest.approx(2.0) and abs(e.d2) < 1e-10


def test_bezier_clamps_with_warning(caplog):
    a = np.array([0.0, 1.0, 4.0])
    with caplog.at_level(logging.WARNING):
        e = bezier_eval(a, 1.3)
    assert e.value == pytest.approx(4.0)
    assert "clamping" in caplog.text
    # continuation of s^2 * 4 - ... : polynomial value at 1.3
    ext = bezier_eval(a, 1.3, extrapolate=True)
    s = 1.3
    assert ext.value == pytest.approx(2 * s * (1 - s) * 1.0 + s * s * 4.0)


def test_degree_too_low():
    with pytest.raises(DegreeTooLow):
        bezier_eval([0.0, 1.0], 0.5)
    with pytest.raises(DegreeTooLow):
        GaitSpec(np.zeros((6, 2)), 0.0, 1.0)


def test_spec_validation():
    with pytest.raises(ValueError, match="theta_max"):
        GaitSpec(np.zeros((6, 4)), 1.0, 1.0)
    bad = default_h_select().copy()
    bad[0] = np.eye(7)[0]  # regulates the phasing coordinate
    with pytest.raises(ValueError):
        GaitSpec(np.zeros((6, 4)), 0.0, 1.0, h_select=bad)


def test_phase_normalization_and_flag():
    g = line_gait()
    q = np.zeros(7)
    q[0] = -0.2
    assert phase(q, g).theta == 0.0 and phase(q, g).in_range
    q[0] = 0.3
    ph = phase(q, g)
    assert ph.theta == 1.0 and not ph.in_range
    assert ph.theta_unclamped == pytest.approx(1.25)
    assert np.allclose(ph.dtheta_dq, np.eye(7)[0] / 0.4)


def test_output_vanishes_on_curve(gait, rng):
    for s in rng.uniform(0, 1, 10):
        q = gait.configuration(s)
        t = gait.tangent(s)
        out = holonomic_output(q, t * 0.7, gait)
        assert np.abs(out.y).max() < 1e-12
        assert np.abs(out.ydot).max() < 1e-12


def test_output_jacobian_and_drift_match_fd(gait, rng):
    q = gait.configuration(0.4) + rng.normal(scale=0.02, size=7)
    dq = rng.normal(size=7)
    out = holonomic_output(q, dq, gait)
    h = 1e-6
    num = np.column_stack([
        (holonomic_output(q + h * e, dq, gait).y - holonomic_output(q - h * e, dq, gait).y) / (2 * h)
        for e in np.eye(7)])
    assert np.abs(num - out.Jy).max() < 1e-7
    # d/dt(Jy dq) at fixed dq along the flow equals Jy_dot_dq
    Jp = holonomic_output(q + h * dq, dq, gait).Jy
    Jm = holonomic_output(q - h * dq, dq, gait).Jy
    assert np.abs((Jp - Jm) / (2 * h) @ dq - out.Jy_dot_dq).max() < 1e-6


def test_output_accel_decomposition_matches_dynamics(gait, model, rng):
    q = gait.configuration(0.3)
    dq = gait.tangent(0.3) * 0.6 + rng.normal(scale=0.05, size=7)
    u = rng.normal(size=7) * 10
    ddq, lam = model.forward_dynamics(q, dq, u, return_forces=True)
    dec = output_accel_decomposition(q, dq, lam, gait, model)
    out = holonomic_output(q, dq, gait)
    assert np.abs(dec.H + dec.M_h @ u - (out.Jy @ ddq + out.Jy_dot_dq)).max() < 1e-9
    dec2 = output_accel_decomposition(q, dq, ContactForces(*lam.as_array()), gait, model)
    assert np.allclose(dec.H, dec2.H)


def test_configuration_and_tangent_consistent(gait):
    h = 1e-6
    for s in (0.1, 0.5, 0.9):
        fd = (gait.configuration(s + h) - gait.configuration(s - h)) / (2 * h * gait.span)
        assert np.abs(fd - gait.tangent(s)).max() < 1e-6


def test_spec_json_roundtrip(tmp_path, gait):
    p = tmp_path / "g.json"
    gait.to_json(p)
    g2 = GaitSpec.from_json(p)
    assert np.array_equal(g2.alpha, gait.alpha) and g2.theta_min == gait.theta_min
    d = gait.to_dict()
    d["degree"] = 9
    with pytest.raises(ValueError, match="degree"):
        GaitSpec.from_dict(d)


def test_alpha_is_immutable():
    g = line_gait()
    with pytest.raises(ValueError):
        g.alpha[0, 0] = 1.0

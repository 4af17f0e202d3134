import json

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from slipgait.dynamics import (
    N_DOF,
    POINT_NAMES,
    BipedModel,
    ContactForces,
    ModelParams,
    State,
)
from slipgait.errors import SingularMass


def random_q(rng):
    q = rng.uniform(-0.6, 0.6, N_DOF)
    q[1] = rng.uniform(-0.05, 0.05)
    return q


def fd5(f, x, h=1e-4):
    """Five-point central difference of ``f`` with respect to each entry of ``x``."""
    cols = []
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h))
    return np.stack(cols, axis=-1)


def standing_pose():
    # symmetric stance with both feet on the ground
    q = np.zeros(N_DOF)
    q[3], q[4], q[5], q[6] = 0.3, 0.25, -0.05, -0.25
    return q


# ModelParams -----------------------------------------------------------------

def test_params_defaults_and_total_mass():
    p = ModelParams()
    assert p.total_mass == pytest.approx(36.0)
    assert p.actuation.shape == (7, 7)


@pytest.mark.parametrize("field,value,msg", [
    ("link_masses", (20, 5, 5, 0, 3), "strictly positive"),
    ("link_lengths", (0.5, -0.4, 0.4, 0.4, 0.4), "strictly positive"),
    ("link_inertias", (1, 1, 1, 1, 0), "strictly positive"),
    ("mu_kinetic", -0.1, "non-negative"),
    ("actuation", np.ones((7, 7)), "full column rank"),
    ("link_masses", (20, 5, 4, 3, 3), "legs must be identical"),
])
def test_params_invariants(field, value, msg):
    with pytest.raises(ValueError, match=msg):
        ModelParams(**{field: value})


def test_params_json_roundtrip(tmp_path):
    p = ModelParams(mu_kinetic=0.3, contact_law="coulomb")
    path = tmp_path / "model.json"
    p.to_json(path)
    q = ModelParams.from_json(path)
    assert q.to_dict() == p.to_dict()
    d = json.loads(path.read_text())
    assert set(d) >= {"link_masses", "link_lengths", "link_com_offsets", "link_inertias",
                      "gravity", "mu_kinetic", "actuation"}


def test_params_identity_shorthand_and_unknown_field():
    p = ModelParams.from_dict({"actuation": "identity"})
    assert np.array_equal(p.actuation, np.eye(7))
    with pytest.raises(ValueError, match="unknown"):
        ModelParams.from_dict({"wheel_radius": 0.1})


def test_state_rejects_nonfinite():
    with pytest.raises(ValueError):
        State(np.full(7, np.nan), np.zeros(7))
    x = np.arange(14.0)
    assert np.array_equal(State.from_vector(x).as_vector(), x)


# mass matrix -------------------------------------------------------------------

def test_mass_matrix_symmetric_and_total_mass(model, rng):
    for _ in range(50):
        D = model.mass_matrix(random_q(rng))
        assert np.abs(D - D.T).max() < 1e-12
        assert D[0, 0] == pytest.approx(36.0, abs=1e-12)


def test_mass_matrix_positive_definite(model, rng):
    for _ in range(100):
        q = random_q(rng)
        v = rng.normal(size=N_DOF)
        assert v @ model.mass_matrix(q) @ v > 0
        assert np.linalg.eigvalsh(model.mass_matrix(q)).min() > 0


def test_singular_mass_raises():
    from slipgait.dynamics import ModelEval

    D = np.diag([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1e-14])
    ev = ModelEval(np.zeros(7), np.zeros(7), D, None, None, None, None, np.eye(7))
    with pytest.raises(SingularMass):
        ev.solve(np.ones(7))


def test_mass_matrix_derivative_matches_fd(model, rng):
    for _ in range(5):
        q = random_q(rng)
        num = fd5(model.mass_matrix, q)  # (n, n, k)
        ana = np.moveaxis(model.mass_matrix_derivative(q), 0, -1)
        assert np.abs(num - ana).max() < 1e-6 * max(1.0, np.abs(ana).max())


# bias forces -------------------------------------------------------------------

def test_bias_zero_without_gravity_and_velocity(rng):
    m = BipedModel(ModelParams(gravity=0.0))
    assert np.abs(m.bias_forces(random_q(rng), np.zeros(7))).max() == 0.0


def test_gravity_is_potential_gradient(model, rng):
    for _ in range(10):
        q = random_q(rng)
        G = model.bias_forces(q, np.zeros(7))
        num = fd5(model.potential_energy, q)
        assert np.abs(G - num).max() < 1e-6


def test_christoffel_bias_matches_kernel(model, rng):
    for _ in range(10):
        q, dq = random_q(rng), rng.normal(size=7)
        C = model.coriolis_matrix(q, dq)
        G = model.bias_forces(q, np.zeros(7))
        assert np.abs(C @ dq + G - model.bias_forces(q, dq)).max() < 1e-10


def test_skew_symmetry_along_flow(model, rng):
    for _ in range(10):
        q, dq = random_q(rng), rng.normal(size=7)
        h = 1e-5
        Ddot = (model.mass_matrix(q + h * dq) - model.mass_matrix(q - h * dq)) / (2 * h)
        N = Ddot - 2 * model.coriolis_matrix(q, dq)
        v = rng.normal(size=7)
        assert abs(v @ N @ v) < 1e-9 * max(1.0, np.abs(N).max())
        assert abs(dq @ N @ dq) < 1e-9 * max(1.0, np.abs(N).max())


# kinematics --------------------------------------------------------------------

def test_contact_jacobian_base_block(model, rng):
    g = model.contact_geometry(random_q(rng))
    assert np.array_equal(g.J_f[:, :2], np.eye(2))
    assert np.array_equal(g.J_hsw, g.J_i[1])


@pytest.mark.parametrize("name", POINT_NAMES)
def test_point_jacobians_match_fd(model, rng, name):
    for _ in range(5):
        q = random_q(rng)
        num = fd5(lambda x: model.point(name, x), q)
        ana = model.point_jacobian(name, q)
        assert np.abs(num - ana).max() < 1e-6 * max(1.0, np.abs(ana).max())


def test_point_velocity_derivative_matches_fd(model, rng):
    # J(q) dq differentiated along dq equals the stored Jdot dq
    q, dq = random_q(rng), rng.normal(size=7)
    ev = model.evaluate(q, dq)
    h = 1e-5
    Jp = model.evaluate(q + h * dq).J
    Jm = model.evaluate(q - h * dq).J
    num = np.einsum("pij,j->pi", (Jp - Jm) / (2 * h), dq)
    assert np.abs(num - model.evaluate(q, dq).Jdqd).max() < 1e-6
    assert ev is not None


def test_both_feet_on_ground(model):
    q = standing_pose()
    # place the swing foot on the ground by symmetry of the legs
    q[5], q[6] = 0.3, 0.25
    assert abs(model.contact_geometry(q).h_sw) < 1e-12


# contact -----------------------------------------------------------------------

def test_static_normal_force_equals_weight(model):
    q = standing_pose()
    G = model.bias_forces(q, np.zeros(7))
    u = np.concatenate([[0.0, 0.0], G[2:]])
    lam = model.contact_forces(q, np.zeros(7), u)
    assert lam.lambda_n == pytest.approx(9.81 * 36.0, abs=1e-8)
    assert lam.lambda_t == 0.0 and lam.valid


def test_frictionless_zero_tangential(model, rng):
    q, dq = random_q(rng), rng.normal(size=7)
    lam = model.contact_forces(q, dq, rng.normal(size=7) * 10)
    assert lam.lambda_t == 0.0


def test_coulomb_and_prescribed_laws(rng):
    q = standing_pose()
    dq = np.zeros(7)
    dq[0] = 0.3  # foot slides forward with the hip
    mc = BipedModel(ModelParams(mu_kinetic=0.4, contact_law="coulomb"))
    G = mc.bias_forces(q, dq)
    lam = mc.contact_forces(q, dq, G)
    assert lam.lambda_t == pytest.approx(-0.4 * lam.lambda_n, rel=1e-12)
    mp = BipedModel(ModelParams(contact_law="prescribed", prescribed_force=7.5))
    assert mp.contact_forces(q, dq, G).lambda_t == 7.5


def test_negative_normal_force_flagged(model):
    q = standing_pose()
    u = np.zeros(7)
    u[1] = 2000.0  # lift the whole body
    lam = model.contact_forces(q, np.zeros(7), u)
    assert lam.lambda_n < 0 and not lam.valid


def test_normal_acceleration_residual(model, rng):
    for _ in range(20):
        q, dq = random_q(rng), rng.normal(size=7)
        q[1], dq[1] = 0.0, 0.0
        u = rng.normal(size=7) * 20
        ddq, lam = model.forward_dynamics(q, dq, u, return_forces=True)
        ev = model.evaluate(q, dq)
        acc = ev.J_f[1] @ ddq + ev.Jdqd[6, 1]
        assert abs(acc) < 1e-9


def test_forward_dynamics_residual(model, rng):
    for _ in range(20):
        q, dq, u = random_q(rng), rng.normal(size=7), rng.normal(size=7) * 20
        ddq, lam = model.forward_dynamics(q, dq, u, return_forces=True)
        assert np.abs(model.equation_residual(q, dq, ddq, u, lam)).max() < 1e-10


def test_force_free_equilibrium(rng):
    m = BipedModel(ModelParams(gravity=0.0))
    q = random_q(rng)
    q[1] = 0.0
    ddq, lam = m.forward_dynamics(q, np.zeros(7), np.zeros(7), return_forces=True)
    assert abs(lam.lambda_n) < 1e-12 and np.abs(ddq).max() < 1e-12


def conservative_drift(model, T=0.3):
    """Relative energy drift of an unactuated frictionless stance phase."""
    q0 = standing_pose()
    dq0 = np.zeros(7)
    dq0[0], dq0[3] = 0.4, -0.5

    def f(t, x):
        return np.concatenate([x[7:], model.forward_dynamics(x[:7], x[7:], np.zeros(7))])

    sol = solve_ivp(f, (0, T), np.concatenate([q0, dq0]), method="DOP853", rtol=1e-11,
                    atol=1e-12, dense_output=True)
    E = [model.total_energy(x[:7], x[7:]) for x in sol.sol(np.linspace(0, T, 61)).T]
    return (max(E) - min(E)) / abs(E[0]), sol


def test_conservative_energy_drift(model):
    drift, sol = conservative_drift(model)
    assert drift < 1e-6
    # the foot stays on the ground under the stabilized constraint
    assert abs(sol.y[1, -1]) < 1e-8


def test_power_balance(model, rng):
    q, dq, u = standing_pose(), rng.normal(size=7), rng.normal(size=7) * 10
    dq[1] = 0.0
    ddq, lam = model.forward_dynamics(q, dq, u, return_forces=True)
    h = 1e-6
    E = lambda s: model.total_energy(q + s * dq + 0.5 * s * s * ddq, dq + s * ddq)
    dE = (E(h) - E(-h)) / (2 * h)
    power = dq @ (u + model.evaluate(q).J_f.T @ lam.as_array())
    assert dE == pytest.approx(power, rel=1e-6, abs=1e-6)


def test_contact_forces_dataclass():
    c = ContactForces(1.0, 2.0)
    assert np.array_equal(c.as_array(), [1.0, 2.0]) and c.valid

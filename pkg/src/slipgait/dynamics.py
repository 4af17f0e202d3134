"""Planar five-link floating-base biped.

Generalized coordinates (n = 7)::

    q[0]  x      horizontal hip position in the step frame   [m]
    q[1]  y      vertical position of the stance foot         [m]
    q[2]  phi    torso pitch from the upward vertical          [rad]
    q[3]  a1     stance hip   (thigh relative to torso axis)   [rad]
    q[4]  k1     stance knee  (flexion positive)               [rad]
    q[5]  a2     swing hip                                     [rad]
    q[6]  k2     swing knee                                    [rad]

``(q[0], q[1])`` is a pure translation of the whole chain; its horizontal
component is referenced to the hip and its vertical component to the stance
foot, so stance contact is the linear constraint ``q[1] = 0``.  Absolute link
angles are ``beta = C @ q`` with torso ``phi`` pointing up and leg segments
``a - phi`` (thigh) and ``a - phi - k`` (shank) pointing down, positive when
the distal end is ahead of the proximal joint.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _backend
from .errors import SingularContact, SingularMass

N_DOF = 7

# link table order used by ModelParams
LINKS = ("torso", "thigh_1", "thigh_2", "shank_1", "shank_2")
# body order used internally: torso, stance thigh, stance shank, swing thigh, swing shank
_BODY_FROM_LINK = (0, 1, 3, 2, 4)

POINT_NAMES = (
    "com_torso", "com_thigh_1", "com_shank_1", "com_thigh_2", "com_shank_2",
    "hip", "stance_foot", "swing_foot", "knee_1", "knee_2",
)
PT = {name: i for i, name in enumerate(POINT_NAMES)}

BAUMGARTE_OMEGA = 50.0
V_EPS = 1e-6
CONTACT_LAWS = ("frictionless", "coulomb", "prescribed")


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Inertial and contact parameters of the biped.

    Per-link arrays follow ``LINKS`` = (torso, thigh_1, thigh_2, shank_1,
    shank_2).  Centre-of-mass offsets are measured from the proximal joint
    (hip for torso and thighs, knee for shanks).
    """

    link_masses: tuple = (20.0, 5.0, 5.0, 3.0, 3.0)
    link_lengths: tuple = (0.5, 0.4, 0.4, 0.4, 0.4)
    link_com_offsets: tuple = (0.2, 0.2, 0.2, 0.2, 0.2)
    link_inertias: tuple = (20.0 * 0.5**2 / 12, 5.0 * 0.4**2 / 12, 5.0 * 0.4**2 / 12,
                            3.0 * 0.4**2 / 12, 3.0 * 0.4**2 / 12)
    gravity: float = 9.81
    mu_kinetic: float = 0.0
    actuation: np.ndarray = field(default_factory=lambda: np.eye(N_DOF))
    contact_law: str = "frictionless"
    prescribed_force: float = 0.0

    def __post_init__(self):
        for name in ("link_masses", "link_lengths", "link_com_offsets", "link_inertias"):
            arr = tuple(float(v) for v in getattr(self, name))
            if len(arr) != 5:
                raise ValueError(f"{name} needs 5 entries, got {len(arr)}")
            object.__setattr__(self, name, arr)
        B = np.array(self.actuation, dtype=float)
        B.setflags(write=False)
        object.__setattr__(self, "actuation", B)
        object.__setattr__(self, "gravity", float(self.gravity))
        object.__setattr__(self, "mu_kinetic", float(self.mu_kinetic))
        object.__setattr__(self, "prescribed_force", float(self.prescribed_force))
        self.validate()

    def validate(self):
        for name in ("link_masses", "link_lengths", "link_inertias"):
            if min(getattr(self, name)) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        for off, length in zip(self.link_com_offsets, self.link_lengths):
            if not 0.0 <= off <= length:
                raise ValueError("link_com_offsets must lie within [0, link length]")
        if self.mu_kinetic < 0.0:
            raise ValueError("mu_kinetic must be non-negative")
        if self.contact_law not in CONTACT_LAWS:
            raise ValueError(f"contact_law must be one of {CONTACT_LAWS}")
        B = self.actuation
        if B.ndim != 2 or B.shape[0] != N_DOF:
            raise ValueError("actuation must be an n x m matrix with n = 7")
        if B.shape[1] != N_DOF or np.linalg.matrix_rank(B) != N_DOF:
            raise ValueError("actuation matrix must have full column rank m = 7")
        # leg swap relabels the legs, so they must be identical
        for i, j in ((1, 2), (3, 4)):
            for name in ("link_masses", "link_lengths", "link_com_offsets", "link_inertias"):
                vals = getattr(self, name)
                if vals[i] != vals[j]:
                    raise ValueError(f"{name}: legs must be identical ({LINKS[i]} vs {LINKS[j]})")

    @property
    def total_mass(self):
        return float(sum(self.link_masses))

    # serialization -------------------------------------------------------
    def to_dict(self):
        return {
            "link_masses": list(self.link_masses),
            "link_lengths": list(self.link_lengths),
            "link_com_offsets": list(self.link_com_offsets),
            "link_inertias": list(self.link_inertias),
            "gravity": self.gravity,
            "mu_kinetic": self.mu_kinetic,
            "actuation": self.actuation.tolist(),
            "contact_law": self.contact_law,
            "prescribed_force": self.prescribed_force,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        act = d.pop("actuation", "identity")
        if isinstance(act, str):
            if act != "identity":
                raise ValueError(f"unknown actuation shorthand {act!r}")
            act = np.eye(N_DOF)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown ModelParams fields: {sorted(unknown)}")
        return cls(actuation=np.asarray(act, dtype=float), **d)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class State:
    q: np.ndarray
    dq: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(N_DOF)
        dq = np.array(self.dq, dtype=float).reshape(N_DOF)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(dq))):
            raise ValueError("state entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "dq", dq)

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[:N_DOF], x[N_DOF:])

    def as_vector(self):
        return np.concatenate([self.q, self.dq])


@dataclass(frozen=True)
class ContactForces:
    lambda_t: float
    lambda_n: float
    valid: bool = True

    def as_array(self):
        return np.array([self.lambda_t, self.lambda_n])


@dataclass(frozen=True)
class ContactGeometry:
    p_f: np.ndarray
    p_sw: np.ndarray
    J_f: np.ndarray
    J_i: np.ndarray
    h_sw: float
    J_hsw: np.ndarray


class ModelEval:
    """Everything the model knows at one ``(q, dq)``."""

    __slots__ = ("q", "dq", "D", "bias", "pos", "J", "Jdqd", "B", "_chol")

    def __init__(self, q, dq, D, bias, pos, J, Jdqd, B):
        self.q = q
        self.dq = dq
        self.D = D
        self.bias = bias
        self.pos = pos
        self.J = J
        self.Jdqd = Jdqd
        self.B = B
        self._chol = None

    @property
    def J_f(self):
        return self.J[PT["stance_foot"]]

    @property
    def J_i(self):
        return self.J[PT["swing_foot"]]

    def solve(self, rhs):
        """``D^{-1} rhs``; raises SingularMass for a degenerate mass matrix."""
        if self._chol is None:
            try:
                c = cho_factor(self.D, lower=True, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise SingularMass("mass matrix is not positive definite") from exc
            d = np.abs(np.diag(c[0]))
            if d.min() <= 0.0 or (d.max() / d.min()) ** 2 > 1e12:
                raise SingularMass("mass matrix condition number exceeds 1e12")
            self._chol = c
        return cho_solve(self._chol, rhs, check_finite=False)


def _tables(params: ModelParams):
    m_t, m_th, _, m_sh, _ = params.link_masses
    l_t, L1, _, L2, _ = params.link_lengths
    c_t, c1, _, c2, _ = params.link_com_offsets
    # link angle rows: torso, thigh_1, shank_1, thigh_2, shank_2
    C = np.zeros((5, N_DOF))
    C[0, 2] = 1.0
    C[1, [2, 3]] = (-1.0, 1.0)
    C[2, [2, 3, 4]] = (-1.0, 1.0, -1.0)
    C[3, [2, 5]] = (-1.0, 1.0)
    C[4, [2, 5, 6]] = (-1.0, 1.0, -1.0)

    WX = np.zeros((len(POINT_NAMES), 5))
    WY = np.zeros((len(POINT_NAMES), 5))
    hipY = np.array([0.0, L1, L2, 0.0, 0.0])
    rows = {
        "com_torso": ([c_t, 0, 0, 0, 0], hipY + [c_t, 0, 0, 0, 0]),
        "com_thigh_1": ([0, c1, 0, 0, 0], hipY + [0, -c1, 0, 0, 0]),
        "com_shank_1": ([0, L1, c2, 0, 0], hipY + [0, -L1, -c2, 0, 0]),
        "com_thigh_2": ([0, 0, 0, c1, 0], hipY + [0, 0, 0, -c1, 0]),
        "com_shank_2": ([0, 0, 0, L1, c2], hipY + [0, 0, 0, -L1, -c2]),
        "hip": ([0, 0, 0, 0, 0], hipY),
        "stance_foot": ([0, L1, L2, 0, 0], hipY + [0, -L1, -L2, 0, 0]),
        "swing_foot": ([0, 0, 0, L1, L2], hipY + [0, 0, 0, -L1, -L2]),
        "knee_1": ([0, L1, 0, 0, 0], hipY + [0, -L1, 0, 0, 0]),
        "knee_2": ([0, 0, 0, L1, 0], hipY + [0, 0, 0, -L1, 0]),
    }
    for name, (wx, wy) in rows.items():
        WX[PT[name]] = wx
        WY[PT[name]] = wy
    mass = np.array([params.link_masses[i] for i in _BODY_FROM_LINK])
    inertia = np.array([params.link_inertias[i] for i in _BODY_FROM_LINK])
    return WX, WY, C, mass, inertia


class BipedModel:
    """Euler-Lagrange quantities, contact kinematics and stance dynamics."""

    n = N_DOF

    def __init__(self, params: ModelParams | None = None):
        self.params = params or ModelParams()
        self.WX, self.WY, self.C, self.mass, self.inertia = _tables(self.params)
        self.B = np.asarray(self.params.actuation)
        self._cache = None

    # core evaluation -----------------------------------------------------
    def evaluate(self, q, dq=None) -> ModelEval:
        q = np.asarray(q, dtype=float)
        dq = np.zeros(N_DOF) if dq is None else np.asarray(dq, dtype=float)
        key = (q.tobytes(), dq.tobytes())
        cached = self._cache
        if cached is not None and cached[0] == key:
            return cached[1]
        D, bias, pos, J, Jdqd = _backend.eval_model(
            self.WX, self.WY, self.C, self.mass, self.inertia,
            self.params.gravity, q, dq)
        ev = ModelEval(q, dq, D, bias, pos, J, Jdqd, self.B)
        self._cache = (key, ev)
        return ev

    def mass_matrix(self, q):
        return self.evaluate(q).D.copy()

    def bias_forces(self, q, dq):
        """``C(q, dq) dq + G(q)``."""
        return self.evaluate(q, dq).bias.copy()

    def gravity_vector(self, q):
        return self.evaluate(q).bias.copy()

    def potential_energy(self, q):
        pos = self.evaluate(q).pos
        return self.params.gravity * float(self.mass @ pos[:5, 1])

    def kinetic_energy(self, q, dq):
        D = self.evaluate(q).D
        dq = np.asarray(dq, dtype=float)
        return 0.5 * float(dq @ D @ dq)

    def mass_matrix_derivative(self, q):
        """``dD[k] = dD/dq_k`` as an (n, n, n) array."""
        q = np.asarray(q, dtype=float)
        ev = self.evaluate(q)
        beta = self.C @ q
        s, c = np.sin(beta), np.cos(beta)
        Jb = ev.J[:5]
        # H[b, k, r, :] = d J_b[r, :] / d q_k
        Cj = self.C
        outer = Cj[:, :, None] * Cj[:, None, :]  # (L, n, n): C_jk C_jl
        Hx = -np.einsum("bj,jkl->bkl", self.WX[:5] * s, outer)
        Hy = -np.einsum("bj,jkl->bkl", self.WY[:5] * c, outer)
        dD = np.einsum("b,bki,bj->kij", self.mass, Hx, Jb[:, 0, :])
        dD += np.einsum("b,bki,bj->kij", self.mass, Hy, Jb[:, 1, :])
        dD = dD + dD.transpose(0, 2, 1)
        return dD

    def coriolis_matrix(self, q, dq):
        """Coriolis matrix from Christoffel symbols of the first kind."""
        dq = np.asarray(dq, dtype=float)
        dD = self.mass_matrix_derivative(q)
        # C[k, j] = 1/2 sum_i (dD_kj/dq_i + dD_ki/dq_j - dD_ij/dq_k) dq_i
        t1 = np.einsum("ikj,i->kj", dD, dq)
        t2 = np.einsum("jki,i->kj", dD, dq)
        t3 = np.einsum("kij,i->kj", dD, dq)
        return 0.5 * (t1 + t2 - t3)

    # kinematics ------------------------------------------------------------
    def point(self, name, q):
        return self.evaluate(q).pos[PT[name]].copy()

    def point_jacobian(self, name, q):
        return self.evaluate(q).J[PT[name]].copy()

    def hip_position(self, q):
        return self.point("hip", q)

    def contact_geometry(self, q) -> ContactGeometry:
        ev = self.evaluate(q)
        J_i = ev.J[PT["swing_foot"]].copy()
        p_sw = ev.pos[PT["swing_foot"]].copy()
        return ContactGeometry(
            p_f=ev.pos[PT["stance_foot"]].copy(),
            p_sw=p_sw,
            J_f=ev.J[PT["stance_foot"]].copy(),
            J_i=J_i,
            h_sw=float(p_sw[1]),
            J_hsw=J_i[1].copy(),
        )

    # contact + dynamics ----------------------------------------------------
    def _tangential_law(self, v_t):
        """Return (slope, offset) with lambda_t = slope * lambda_n + offset."""
        p = self.params
        if p.contact_law == "frictionless" or (p.contact_law == "coulomb" and p.mu_kinetic == 0.0):
            return 0.0, 0.0
        if p.contact_law == "prescribed":
            return 0.0, p.prescribed_force
        sgn = np.sign(v_t) if abs(v_t) > V_EPS else v_t / V_EPS
        return -p.mu_kinetic * sgn, 0.0

    def contact_forces(self, q, dq, u, ev: ModelEval | None = None) -> ContactForces:
        """Ground reaction enforcing zero normal acceleration of the stance foot.

        The normal channel carries Baumgarte terms
        ``-2 w v_n - w^2 p_n`` (w = 50 1/s) so that drift is damped.
        """
        ev = ev or self.evaluate(q, dq)
        dq = ev.dq
        J_f = ev.J[PT["stance_foot"]]
        Jt, Jn = J_f[0], J_f[1]
        p_n = ev.pos[PT["stance_foot"], 1]
        v_t = float(Jt @ dq)
        v_n = float(Jn @ dq)
        a_target = -2.0 * BAUMGARTE_OMEGA * v_n - BAUMGARTE_OMEGA**2 * p_n
        slope, offset = self._tangential_law(v_t)
        rhs = np.column_stack([self.B @ np.asarray(u, dtype=float) - ev.bias + Jt * offset,
                               Jn + slope * Jt])
        sol = ev.solve(rhs)
        op = float(Jn @ sol[:, 1])
        if abs(op) < 1e-10:
            raise SingularContact(f"normal contact operator {op:.3e} below 1e-10")
        lam_n = (a_target - ev.Jdqd[PT["stance_foot"], 1] - float(Jn @ sol[:, 0])) / op
        lam_t = slope * lam_n + offset
        return ContactForces(float(lam_t), float(lam_n), bool(lam_n >= 0.0))

    def generalized_contact_force(self, q, forces: ContactForces):
        J_f = self.evaluate(q).J[PT["stance_foot"]]
        return J_f.T @ forces.as_array()

    def forward_dynamics(self, q, dq, u, return_forces=False):
        """Stance-phase accelerations ``D^{-1}(B u + J_c^T lambda - C dq - G)``."""
        ev = self.evaluate(q, dq)
        lam = self.contact_forces(q, dq, u, ev)
        f = self.B @ np.asarray(u, dtype=float) + ev.J[PT["stance_foot"]].T @ lam.as_array() - ev.bias
        ddq = ev.solve(f)
        if return_forces:
            return ddq, lam
        return ddq

    def equation_residual(self, q, dq, ddq, u, forces: ContactForces):
        ev = self.evaluate(q, dq)
        return (ev.D @ ddq + ev.bias - self.B @ np.asarray(u, dtype=float)
                - ev.J[PT["stance_foot"]].T @ forces.as_array())

    def total_energy(self, q, dq):
        return self.kinetic_energy(q, dq) + self.potential_energy(q)

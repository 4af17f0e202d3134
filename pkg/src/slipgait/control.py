"""Input-output linearizing feedback for the slip and holonomic outputs.

All three laws are affine in the normal contact force once the tangential
law is fixed, ``u = u0 + lambda_n u1``.  The contact force used inside the
law is chosen to agree with the reaction the contact model produces for the
resulting torque.  When that agreement holds for every ``lambda_n`` (the
actuation can substitute for the ground reaction) the solution in which the
actuators exert no generalized force along the contact normal is used.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .dynamics import BAUMGARTE_OMEGA, N_DOF, PT, BipedModel, ContactForces
from .errors import HolonomicChannelSingular, NearSingularDecoupling, SlipChannelSingular
from .gait import N_OUTPUTS, GaitSpec, holonomic_output
from .slip import SlipLaw

SIGMA_SINGULAR = 1e-8
MS_SINGULAR = 1e-10
# |1 - c| below this means the contact force is not fixed by consistency
GAUGE_TOL = 1e-6
CONTROL_MODES = ("combined", "slip_only", "open_loop")


def _as_gain_matrix(v, name):
    A = np.asarray(v, dtype=float)
    if A.ndim == 0:
        A = float(A) * np.eye(N_OUTPUTS)
    if A.shape != (N_OUTPUTS, N_OUTPUTS):
        raise ValueError(f"{name} must be a scalar or a 6 x 6 matrix")
    return A


@dataclass(frozen=True, eq=False)
class Gains:
    k_s: float = 20.0
    Kp: np.ndarray = 100.0
    Kd: np.ndarray = 20.0

    def __post_init__(self):
        object.__setattr__(self, "k_s", float(self.k_s))
        object.__setattr__(self, "Kp", _as_gain_matrix(self.Kp, "Kp"))
        object.__setattr__(self, "Kd", _as_gain_matrix(self.Kd, "Kd"))
        if self.k_s <= 0:
            raise ValueError("k_s must be positive")
        for name in ("Kp", "Kd"):
            M = getattr(self, name)
            sym = 0.5 * (M + M.T)
            if np.linalg.eigvalsh(sym).min() <= 0:
                raise ValueError(f"{name} must be positive definite")

    def to_dict(self):
        def enc(M):
            s = M[0, 0]
            return float(s) if np.array_equal(M, s * np.eye(N_OUTPUTS)) else M.tolist()

        return {"k_s": self.k_s, "kp": enc(self.Kp), "kd": enc(self.Kd)}

    @classmethod
    def from_dict(cls, d):
        """Accepts ``kp``/``kd`` (file schema) or ``Kp``/``Kd``."""
        d = {{"kp": "Kp", "kd": "Kd"}.get(k, k): v for k, v in d.items()}
        unknown = set(d) - {"k_s", "Kp", "Kd"}
        if unknown:
            raise ValueError(f"unknown Gains fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


class ControlEval(NamedTuple):
    u: np.ndarray
    lam: ContactForces
    eta_s: float
    y: np.ndarray
    ydot: np.ndarray
    sigma_min_A: float
    norm_Ms: float
    A_mat: np.ndarray
    theta: float


class _Terms(NamedTuple):
    """Drift split into a lambda-free part and the lambda_n sensitivity."""
    X0: np.ndarray   # D^-1 (J_t^T offset - bias)
    X1: np.ndarray   # D^-1 (J_n + slope J_t)^T
    XB: np.ndarray   # D^-1 B
    slope: float
    offset: float
    out: object
    eta_s: float
    A: np.ndarray
    extra_s: float
    ev: object


def _terms(q, dq, model: BipedModel, spec: GaitSpec, law: SlipLaw) -> _Terms:
    ev = model.evaluate(q, dq)
    J_f = ev.J[PT["stance_foot"]]
    Jt, Jn = J_f[0], J_f[1]
    slope, offset = model._tangential_law(float(Jt @ dq))
    sol = ev.solve(np.column_stack([Jt * offset - ev.bias, Jn + slope * Jt, model.B]))
    A = law.A_at(q)
    return _Terms(sol[:, 0], sol[:, 1], sol[:, 2:], slope, offset,
                  holonomic_output(q, dq, spec), float(A @ dq) - law.b_at(q), A,
                  law.extra_drift(q, dq), ev)


def _resolve_lambda(t: _Terms, u0, u1, model: BipedModel, dq):
    """Normal force consistent with the contact model for ``u = u0 + lam u1``."""
    ev = t.ev
    Jn = ev.J[PT["stance_foot"], 1]
    p_n = ev.pos[PT["stance_foot"], 1]
    v_n = float(Jn @ dq)
    a_target = -2.0 * BAUMGARTE_OMEGA * v_n - BAUMGARTE_OMEGA**2 * p_n
    op = float(Jn @ t.X1)
    alpha = (a_target - ev.Jdqd[PT["stance_foot"], 1] - float(Jn @ (t.XB @ u0))
             - float(Jn @ t.X0)) / op
    c = -float(Jn @ (t.XB @ u1)) / op
    if abs(1.0 - c) > GAUGE_TOL:
        return alpha / (1.0 - c)
    # gauge: no actuator load along the contact normal
    g1 = float(Jn @ (model.B @ u1))
    if abs(g1) > 1e-12:
        return -float(Jn @ (model.B @ u0)) / g1
    # degenerate gauge; two fixed-point sweeps from the static estimate
    lam = model.params.total_mass * model.params.gravity
    for _ in range(2):
        lam = alpha + c * lam
    return lam


def _pack(t: _Terms, u0, u1, lam_n, sigma, nMs, Amat):
    u = u0 + lam_n * u1
    lam = ContactForces(t.slope * lam_n + t.offset, float(lam_n), bool(lam_n >= 0.0))
    return ControlEval(u, lam, t.eta_s, t.out.y, t.out.ydot, sigma, nMs, Amat, t.out.theta)


def _blocks(t: _Terms):
    """Slip and holonomic rows: (Gamma0, Gamma1, M_s), (H0, H1, M_h)."""
    Jy = t.out.Jy
    G0 = float(t.A @ t.X0) + t.extra_s
    G1 = float(t.A @ t.X1)
    M_s = t.A @ t.XB
    H0 = Jy @ t.X0 + t.out.Jy_dot_dq
    H1 = Jy @ t.X1
    M_h = Jy @ t.XB
    return G0, G1, M_s, H0, H1, M_h


def stacked_decoupling(M_s, M_h):
    """``A = [M_s; M_h]`` and its smallest singular value."""
    A = np.vstack([np.atleast_2d(M_s), M_h])
    return A, float(np.linalg.svd(A, compute_uv=False)[-1])


def combined_feedback(q, dq, gains: Gains, spec: GaitSpec, law: SlipLaw,
                      model: BipedModel) -> ControlEval:
    """Exact decoupling of both output channels.

    ``u = A^-1 [-Gamma_s - k_s eta_s; -H - Kd ydot - Kp y]``.
    """
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    t = _terms(q, dq, model, spec, law)
    G0, G1, M_s, H0, H1, M_h = _blocks(t)
    Amat, sigma = stacked_decoupling(M_s, M_h)
    if sigma < SIGMA_SINGULAR:
        raise NearSingularDecoupling(f"sigma_min(A) = {sigma:.3e}")
    v = np.concatenate([[-gains.k_s * t.eta_s], -gains.Kd @ t.out.ydot - gains.Kp @ t.out.y])
    rhs0 = v - np.concatenate([[G0], H0])
    rhs1 = -np.concatenate([[G1], H1])
    sol = np.linalg.solve(Amat, np.column_stack([rhs0, rhs1]))
    u0, u1 = sol[:, 0], sol[:, 1]
    lam_n = _resolve_lambda(t, u0, u1, model, dq)
    return _pack(t, u0, u1, lam_n, sigma, float(np.linalg.norm(M_s)), Amat)


def slip_only_feedback(q, dq, gains: Gains, spec: GaitSpec, law: SlipLaw,
                       model: BipedModel) -> ControlEval:
    """Minimum-norm input that drives only the slip channel."""
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    t = _terms(q, dq, model, spec, law)
    G0, G1, M_s, H0, H1, M_h = _blocks(t)
    nMs = float(np.linalg.norm(M_s))
    if nMs < MS_SINGULAR:
        raise SlipChannelSingular(f"||M_s|| = {nMs:.3e}")
    pinv = M_s / nMs**2
    u0 = pinv * (-G0 - gains.k_s * t.eta_s)
    u1 = pinv * (-G1)
    lam_n = _resolve_lambda(t, u0, u1, model, dq)
    Amat, sigma = stacked_decoupling(M_s, M_h)
    return _pack(t, u0, u1, lam_n, sigma, nMs, Amat)


def open_loop_controller(q, dq, gains: Gains, spec: GaitSpec, law: SlipLaw,
                         model: BipedModel) -> ControlEval:
    """Holonomic channel only; the slip constraint is left unregulated."""
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    t = _terms(q, dq, model, spec, law)
    G0, G1, M_s, H0, H1, M_h = _blocks(t)
    if np.linalg.matrix_rank(M_h, tol=1e-10) < N_OUTPUTS:
        raise HolonomicChannelSingular("M_h lost row rank")
    pinv = np.linalg.pinv(M_h)
    u0 = pinv @ (-H0 - gains.Kd @ t.out.ydot - gains.Kp @ t.out.y)
    u1 = pinv @ (-H1)
    lam_n = _resolve_lambda(t, u0, u1, model, dq)
    Amat, sigma = stacked_decoupling(M_s, M_h)
    return _pack(t, u0, u1, lam_n, sigma, float(np.linalg.norm(M_s)), Amat)


_LAWS = {
    "combined": combined_feedback,
    "slip_only": slip_only_feedback,
    "open_loop": open_loop_controller,
}


class Controller:
    """Binds a control mode to a model, gait and gains; ``law`` changes per step."""

    def __init__(self, model: BipedModel, spec: GaitSpec, gains: Gains | None = None,
                 mode="combined"):
        if mode not in _LAWS:
            raise ValueError(f"mode must be one of {CONTROL_MODES}")
        self.model = model
        self.spec = spec
        self.gains = gains or Gains()
        self.mode = mode
        self._fn = _LAWS[mode]

    def __call__(self, q, dq, law: SlipLaw) -> ControlEval:
        return self._fn(q, dq, self.gains, self.spec, law, self.model)

"""Virtual holonomic constraints parameterized by Bezier polynomials."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _backend
from .dynamics import N_DOF, PT, BipedModel, ContactForces
from .errors import DegreeTooLow

logger = logging.getLogger(__name__)

N_OUTPUTS = 6
# phasing coordinate: horizontal hip position measured from the stance
# contact point at step start, which is q[0] in the step frame
PHASE_ROW = np.eye(N_DOF)[0]


def default_h_select():
    """Regulate every coordinate except the horizontal progression."""
    return np.eye(N_DOF)[1:]


class BezierEval(NamedTuple):
    value: float
    d1: float
    d2: float


def bezier_eval(alpha_row, theta, extrapolate=False):
    """Value and first two theta-derivatives of a Bezier polynomial.

    ``theta`` outside [0, 1] is clamped with a warning unless
    ``extrapolate`` is set, in which case the polynomial is continued.
    """
    alpha_row = np.asarray(alpha_row, dtype=float)
    M = alpha_row.shape[0] - 1
    if M < 2:
        raise DegreeTooLow(f"Bezier degree {M} < 2; relative degree two needs M >= 2")
    theta = float(theta)
    if not extrapolate and not 0.0 <= theta <= 1.0:
        logger.warning("theta=%.6g outside [0, 1]; clamping", theta)
        theta = min(max(theta, 0.0), 1.0)
    b0, b1, b2 = _backend.bernstein(M, theta)
    return BezierEval(float(alpha_row @ b0), float(alpha_row @ b1), float(alpha_row @ b2))


@dataclass(frozen=True, eq=False)
class GaitSpec:
    alpha: np.ndarray
    theta_min: float
    theta_max: float
    h_select: np.ndarray = None

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        if alpha.ndim != 2 or alpha.shape[0] != N_OUTPUTS:
            raise ValueError(f"alpha must be {N_OUTPUTS} x (M+1)")
        if alpha.shape[1] - 1 < 2:
            raise DegreeTooLow(f"Bezier degree {alpha.shape[1] - 1} < 2")
        H = default_h_select() if self.h_select is None else np.array(self.h_select, dtype=float)
        alpha.setflags(write=False)
        H.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "h_select", H)
        object.__setattr__(self, "theta_min", float(self.theta_min))
        object.__setattr__(self, "theta_max", float(self.theta_max))
        if not self.theta_max > self.theta_min:
            raise ValueError("theta_max must exceed theta_min")
        if H.shape != (N_OUTPUTS, N_DOF) or np.linalg.matrix_rank(H) != N_OUTPUTS:
            raise ValueError("h_select must be a full-row-rank 6 x 7 matrix")
        if np.linalg.matrix_rank(np.vstack([H, PHASE_ROW])) != N_DOF:
            raise ValueError("h_select rows must be independent of the phasing coordinate")

    @property
    def degree(self):
        return self.alpha.shape[1] - 1

    @property
    def span(self):
        return self.theta_max - self.theta_min

    def desired(self, theta):
        """``h_d``, ``dh_d/dtheta``, ``d2h_d/dtheta2`` for all outputs (no clamping)."""
        b0, b1, b2 = _backend.bernstein(self.degree, float(theta))
        a = self.alpha
        return a @ b0, a @ b1, a @ b2

    def configuration(self, theta):
        """Configuration on the constraint surface ``y = 0`` at normalized phase ``theta``."""
        hd, _, _ = self.desired(theta)
        theta_raw = self.theta_min + theta * self.span
        A = np.vstack([PHASE_ROW, self.h_select])
        return np.linalg.solve(A, np.concatenate([[theta_raw], hd]))

    def tangent(self, theta):
        """``dq/dtheta_raw`` along the constraint surface."""
        _, d1, _ = self.desired(theta)
        A = np.vstack([PHASE_ROW, self.h_select])
        return np.linalg.solve(A, np.concatenate([[1.0], d1 / self.span]))

    # serialization ---------------------------------------------------------
    def to_dict(self):
        return {
            "degree": self.degree,
            "alpha": self.alpha.tolist(),
            "theta_min": self.theta_min,
            "theta_max": self.theta_max,
            "h_select": self.h_select.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        alpha = np.asarray(d["alpha"], dtype=float)
        if "degree" in d and int(d["degree"]) != alpha.shape[1] - 1:
            raise ValueError("degree does not match the number of Bezier coefficients")
        return cls(alpha=alpha, theta_min=d["theta_min"], theta_max=d["theta_max"],
                   h_select=d.get("h_select"))

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


class Phase(NamedTuple):
    theta: float
    dtheta_dq: np.ndarray
    in_range: bool
    theta_unclamped: float


def phase(q, spec: GaitSpec) -> Phase:
    """Normalized phasing variable; clamped to [0, 1] and flagged outside."""
    raw = float(PHASE_ROW @ np.asarray(q, dtype=float))
    s = (raw - spec.theta_min) / spec.span
    ok = 0.0 <= s <= 1.0
    return Phase(min(max(s, 0.0), 1.0), PHASE_ROW / spec.span, ok, s)


class OutputEval(NamedTuple):
    y: np.ndarray
    Jy: np.ndarray
    ydot: np.ndarray
    theta: float
    dtheta: float
    hd_dd: np.ndarray

    @property
    def Jy_dot_dq(self):
        """``d/dt(Jy) @ dq``; the phase gradient is constant."""
        return -self.hd_dd * self.dtheta**2


def holonomic_output(q, dq, spec: GaitSpec) -> OutputEval:
    """``y = h_select q - h_d(theta(q))`` with its Jacobian and rate.

    The Bezier polynomial is continued outside [0, 1] so the output stays
    smooth when an impact lands slightly past the nominal end of the step.
    """
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    ph = phase(q, spec)
    s = ph.theta_unclamped
    hd, hd1, hd2 = spec.desired(s)
    grad = ph.dtheta_dq
    y = spec.h_select @ q - hd
    Jy = spec.h_select - np.outer(hd1, grad)
    dtheta = float(grad @ dq)
    return OutputEval(y, Jy, Jy @ dq, s, dtheta, hd2)


class OutputAccel(NamedTuple):
    H: np.ndarray
    M_h: np.ndarray


def output_accel_decomposition(q, dq, lam, spec: GaitSpec, model: BipedModel,
                               out: OutputEval | None = None) -> OutputAccel:
    """Split ``ydd = H + M_h u`` along the stance dynamics with contact force ``lam``."""
    ev = model.evaluate(q, dq)
    out = out or holonomic_output(q, dq, spec)
    lam = lam.as_array() if isinstance(lam, ContactForces) else np.asarray(lam, dtype=float)
    drift = ev.J[PT["stance_foot"]].T @ lam - ev.bias
    sol = ev.solve(np.column_stack([drift, model.B]))
    H = out.Jy @ sol[:, 0] + out.Jy_dot_dq
    M_h = out.Jy @ sol[:, 1:]
    return OutputAccel(H, M_h)

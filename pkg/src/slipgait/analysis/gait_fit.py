"""Fit a nominal periodic gait as Bezier virtual constraints."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _backend
from ..dynamics import N_DOF, BipedModel, ModelParams
from ..errors import InfeasibleTargets
from ..gait import N_OUTPUTS, GaitSpec, default_h_select

KNEE_MAX = 2.5  # rad


@dataclass(frozen=True)
class GaitTargets:
    """Kinematic targets of the nominal walking cycle.

    The hip moves at constant height ``hip_height`` from ``-L/2`` to ``+L/2``
    over the stance foot while the swing foot travels from ``-L`` to ``+L``
    with peak clearance ``clearance``.  ``duration`` sets the nominal speed
    through :func:`nominal_speed`.
    """

    step_length: float = 0.35
    duration: float = 0.5
    clearance: float = 0.05
    hip_height: float = 0.77
    torso_pitch: float = 0.05
    # fraction of the clearance profile given nonzero end slopes so that
    # the swing foot lifts off and touches down with a vertical velocity
    end_slope: float = 0.1


def _leg_ik(dx, dy, L1, L2, phi):
    """Hip and knee angles placing the foot at ``(dx, dy)`` from the hip."""
    r2 = dx * dx + dy * dy
    ck = (r2 - L1 * L1 - L2 * L2) / (2.0 * L1 * L2)
    if ck > 1.0 + 1e-12 or ck < -1.0:
        raise InfeasibleTargets(f"foot at distance {np.sqrt(r2):.4f} m is out of reach")
    k = float(np.arccos(min(ck, 1.0)))
    psi = np.arctan2(dx, -dy)
    beta1 = psi + np.arctan2(L2 * np.sin(k), L1 + L2 * np.cos(k))
    return beta1 + phi, k


def _smoothstep(s):
    return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def target_configuration(s, targets: GaitTargets, params: ModelParams):
    """Configuration at normalized phase ``s`` of the nominal cycle."""
    L = targets.step_length
    _, L1, _, L2, _ = params.link_lengths
    H, phi = targets.hip_height, targets.torso_pitch
    x_hip = -0.5 * L + L * s
    x_sw = -L + 2.0 * L * _smoothstep(s)
    w = targets.end_slope
    y_sw = targets.clearance * ((1.0 - w) * 16.0 * s * s * (1.0 - s) ** 2 + w * 4.0 * s * (1.0 - s))
    a1, k1 = _leg_ik(-x_hip, -H, L1, L2, phi)
    a2, k2 = _leg_ik(x_sw - x_hip, y_sw - H, L1, L2, phi)
    for k in (k1, k2):
        if not 0.0 <= k <= KNEE_MAX:
            raise InfeasibleTargets(f"knee angle {k:.3f} outside [0, {KNEE_MAX}]")
    return np.array([x_hip, 0.0, phi, a1, k1, a2, k2])


def _outputs(s, targets, params):
    return default_h_select() @ target_configuration(s, targets, params)


def _velocity_reset(q_minus, model: BipedModel):
    """Linear map from pre-impact to post-swap velocity at ``q_minus``."""
    from ..hybrid import impact_map, leg_swap

    R = np.zeros((N_DOF, N_DOF))
    for j in range(N_DOF):
        e = np.zeros(N_DOF)
        e[j] = 1.0
        xp = leg_swap(impact_map(np.concatenate([q_minus, e]), model)[0], model)
        R[:, j] = xp[N_DOF:]
    return R


def _interior_fit(alpha, targets, params, n_quad):
    M = alpha.shape[1] - 1
    free = list(range(2, M - 1))
    if not free:
        return alpha
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    s = 0.5 * (nodes + 1.0)
    w = np.sqrt(0.5 * weights)
    Bm = np.array([_backend.bernstein_values(M, si) for si in s])
    F = np.array([_outputs(si, targets, params) for si in s])
    fixed = [0, 1, M - 1, M]
    R = F - Bm[:, fixed] @ alpha[:, fixed].T
    coef, *_ = np.linalg.lstsq(w[:, None] * Bm[:, free], w[:, None] * R, rcond=None)
    alpha = alpha.copy()
    alpha[:, free] = coef.T
    return alpha


def fit_nominal_gait(targets: GaitTargets | None = None, degree=5,
                     params: ModelParams | None = None, n_quad=None,
                     A_row=None, impact_compatible=True) -> GaitSpec:
    """Least-squares Bezier fit of the target cycle.

    End values are matched exactly and the end slopes follow the targets;
    the interior coefficients minimize the L2 error, integrated with
    Gauss-Legendre quadrature.

    With ``impact_compatible`` the end slopes are adjusted so that the
    constraint curve is invariant under impact and leg swap: the joint rates
    before touchdown get the smallest change that makes the reset preserve
    ``A dq``, and the slopes after touchdown are the image of the pre-impact
    tangent.  A state on the curve with ``A dq = b`` then lands on the curve
    with the same ``A dq``.
    """
    targets = targets or GaitTargets()
    params = params or ModelParams()
    if degree < 3:
        raise InfeasibleTargets("degree >= 3 is needed to match end slopes")
    M = degree
    n_quad = n_quad or 4 * (M + 1)
    h = 1e-5
    f0, f1 = _outputs(0.0, targets, params), _outputs(1.0, targets, params)
    d0 = (-3 * f0 + 4 * _outputs(h, targets, params) - _outputs(2 * h, targets, params)) / (2 * h)
    d1 = (3 * f1 - 4 * _outputs(1 - h, targets, params) + _outputs(1 - 2 * h, targets, params)) / (2 * h)
    L = targets.step_length
    span = L

    if impact_compatible:
        if A_row is None:
            from ..slip import DEFAULT_A_ROW as A_row
        A = np.asarray(A_row, dtype=float)
        H = default_h_select()
        basis = np.vstack([np.eye(N_DOF)[0], H])
        q_minus = np.linalg.solve(basis, np.concatenate([[0.5 * L], f1]))
        Rv = _velocity_reset(q_minus, BipedModel(params))
        t1 = np.linalg.solve(basis, np.concatenate([[1.0], d1 / span]))
        # smallest change of the joint rates that preserves A dq across the reset
        g = A @ Rv - A
        gj = g.copy()
        gj[:2] = 0.0
        denom = float(gj @ gj)
        if denom < 1e-12:
            raise InfeasibleTargets("joint rates cannot balance the slip output across impact")
        t1 = t1 - (float(g @ t1) / denom) * gj
        d1 = span * (H @ t1)
        t0 = Rv @ t1
        if t0[0] <= 0:
            raise InfeasibleTargets("impact reverses the forward progression")
        d0 = span * (H @ t0) / t0[0]

    alpha = np.zeros((N_OUTPUTS, M + 1))
    alpha[:, 0] = f0
    alpha[:, M] = f1
    alpha[:, 1] = f0 + d0 / M
    alpha[:, M - 1] = f1 - d1 / M
    alpha = _interior_fit(alpha, targets, params, n_quad)
    return GaitSpec(alpha=alpha, theta_min=-0.5 * L, theta_max=0.5 * L)


def nominal_speed(spec: GaitSpec, A_row, duration):
    """Slip reference that traverses the gait curve in ``duration`` seconds.

    Along the curve ``A dq = b`` gives ``dt = A q'(x) dx / b``, so the
    traversal time is ``A (q_end - q_start) / b``.
    """
    A = np.asarray(A_row, dtype=float)
    dq = spec.configuration(1.0) - spec.configuration(0.0)
    return float(A @ dq) / float(duration)


def fit_residual(spec: GaitSpec, targets: GaitTargets, params: ModelParams | None = None, n=201):
    """Max abs deviation between the fitted polynomials and the targets."""
    params = params or ModelParams()
    err = 0.0
    for s in np.linspace(0.0, 1.0, n):
        err = max(err, float(np.abs(spec.desired(s)[0] - _outputs(s, targets, params)).max()))
    return err

"""Stance integration, impact reset, leg swap and the multi-step walking loop."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .control import Controller
from .dynamics import N_DOF, PT, BipedModel, State
from .errors import (
    Fall,
    NearSingularDecoupling,
    NoImpact,
    SingularImpact,
    SlipGaitError,
    StepFailed,
)
from .gait import holonomic_output
from .slip import SlipLaw, SlipSchedule

logger = logging.getLogger(__name__)

RTOL = 1e-9
ATOL = 1e-11
DWELL = 0.01
MAX_TIME = 2.0
SAMPLE_DT = 1e-3
TORSO_LIMIT = np.pi / 3
HIP_MIN = 0.4
EVENT_TOL = 1e-10
IMPACT_MODES = ("plastic", "projection")

STEP_COLUMNS = ("step", "pre_impact_speed", "mean_abs_eta_s", "min_sigma_min_A", "min_norm_Ms",
                "post_reset_residual", "stance_duration", "success", "reason")
DENSE_COLUMNS = (["t"] + [f"q{i}" for i in range(7)] + [f"dq{i}" for i in range(7)]
                 + [f"u{i}" for i in range(7)] + ["lambda_t", "lambda_n"]
                 + [f"y{i}" for i in range(6)] + ["eta_s"])

# coordinate relabeling between legs
SWAP_PERM = np.array([0, 1, 2, 5, 6, 3, 4])


class _StanceSystem:
    """Closed-loop stance vector field with a one-entry evaluation cache."""

    def __init__(self, controller: Controller, law: SlipLaw):
        self.controller = controller
        self.model = controller.model
        self.law = law
        self._key = None
        self._val = None

    def eval(self, x):
        key = x.tobytes()
        if key != self._key:
            q, dq = x[:N_DOF], x[N_DOF:]
            ce = self.controller(q, dq, self.law)
            ddq, lam = self.model.forward_dynamics(q, dq, ce.u, return_forces=True)
            self._key, self._val = key, (ce, ddq, lam)
        return self._val

    def rhs(self, t, x):
        _, ddq, _ = self.eval(x)
        return np.concatenate([x[N_DOF:], ddq])

    # event functions -------------------------------------------------------
    def h_sw(self, t, x):
        return float(self.model.evaluate(x[:N_DOF]).pos[PT["swing_foot"], 1])

    def torso(self, t, x):
        return TORSO_LIMIT - abs(float(x[2]))

    def hip(self, t, x):
        return float(self.model.evaluate(x[:N_DOF]).pos[PT["hip"], 1]) - HIP_MIN

    def normal_force(self, t, x):
        return self.eval(x)[2].lambda_n


def _terminal(fn, direction=0.0):
    def ev(t, x):
        return fn(t, x)

    ev.terminal = True
    ev.direction = direction
    return ev


@dataclass
class StanceResult:
    """Outcome of one stance phase.

    ``segments`` holds the dense-output pieces covering ``[t0, t_end]``;
    calling the result evaluates the state at any time in that range.
    """

    t0: float
    t_end: float
    x_minus: np.ndarray
    terminal: str
    segments: list = field(default_factory=list)

    def __call__(self, t):
        t = float(t)
        for seg in self.segments:
            if t <= seg.t_max + 1e-15:
                return seg(min(max(t, seg.t_min), seg.t_max))
        seg = self.segments[-1]
        return seg(seg.t_max)

    @property
    def duration(self):
        return self.t_end - self.t0


def integrate_stance(x0, controller: Controller, law: SlipLaw, t0=0.0, max_time=MAX_TIME,
                     dwell=DWELL, rtol=RTOL, atol=ATOL) -> StanceResult:
    """Integrate one stance phase to the swing-foot touchdown.

    Touchdown is the first downward zero crossing of the swing-foot height
    after ``dwell`` seconds.  Raises :class:`NoImpact`, :class:`Fall` or
    :class:`StepFailed` (``negative-normal-force``); controller errors
    propagate.
    """
    x0 = x0.as_vector() if isinstance(x0, State) else np.asarray(x0, dtype=float)
    sys = _StanceSystem(controller, law)
    checks = [_terminal(sys.torso), _terminal(sys.hip), _terminal(sys.normal_force, -1.0)]
    names = ["torso", "hip", "normal_force"]
    t_stop = t0 + max_time
    segments = []
    x, t = x0, t0
    for phase_end, use_impact in ((min(t0 + dwell, t_stop), False), (t_stop, True)):
        if phase_end <= t:
            continue
        events = list(checks)
        if use_impact:
            events.append(_terminal(sys.h_sw, -1.0))
        sol = solve_ivp(sys.rhs, (t, phase_end), x, method="DOP853", rtol=rtol, atol=atol,
                        events=events, dense_output=True)
        if sol.status == -1:
            raise StepFailed("integration-failure", sol.message, t=float(sol.t[-1]))
        segments.append(sol.sol)
        hit = [i for i, te in enumerate(sol.t_events) if len(te)]
        t, x = float(sol.t[-1]), sol.y[:, -1]
        if hit:
            i = min(hit, key=lambda j: sol.t_events[j][0])
            t, x = float(sol.t_events[i][0]), sol.y_events[i][0]
            if i < len(names):
                if names[i] == "normal_force":
                    raise StepFailed("negative-normal-force",
                                     f"normal force vanished at t={t:.4f}", t=t)
                raise Fall(f"{names[i]} limit reached at t={t:.4f}", t=t)
            t, x = _refine_touchdown(sys, sol.sol, t, x)
            return StanceResult(t0, t, x, "impact", segments)
    raise NoImpact(f"no touchdown within {max_time} s", t=t)


def _refine_touchdown(sys, dense, t, x):
    """Re-localize the touchdown on the dense output if the solver's root is loose."""
    def h(tt):
        return sys.h_sw(tt, dense(tt))

    if abs(h(t)) <= EVENT_TOL:
        return t, x
    a, b = max(dense.t_min, t - 1e-3), min(dense.t_max, t + 1e-3)
    if not h(a) > 0.0 > h(b):
        return t, x
    t = brentq(h, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return t, dense(t)


def impact_map(x_minus, model: BipedModel):
    """Plastic impact at the swing foot.

    Solves ``[D, -J_i^T; J_i, 0] [dq+; Lambda] = [D dq-; 0]``.
    Returns ``(x_plus, Lambda)``; the configuration is unchanged.
    """
    x_minus = x_minus.as_vector() if isinstance(x_minus, State) else np.asarray(x_minus, dtype=float)
    q, dqm = x_minus[:N_DOF], x_minus[N_DOF:]
    ev = model.evaluate(q)
    J_i = ev.J[PT["swing_foot"]]
    Dinv_JT = ev.solve(J_i.T)
    S = J_i @ Dinv_JT
    if np.linalg.cond(S) > 1e12:
        raise SingularImpact("impact operator J_i D^-1 J_i^T is ill-conditioned")
    K = np.block([[ev.D, -J_i.T], [J_i, np.zeros((2, 2))]])
    sol = np.linalg.solve(K, np.concatenate([ev.D @ dqm, np.zeros(2)]))
    return np.concatenate([q, sol[:N_DOF]]), sol[N_DOF:]


def leg_swap(x, model: BipedModel):
    """Relabel legs so the swing foot becomes the stance foot.

    The horizontal base coordinate is re-anchored to the new contact point;
    the vertical base coordinate becomes the new stance foot height.
    """
    x = x.as_vector() if isinstance(x, State) else np.asarray(x, dtype=float)
    q, dq = x[:N_DOF], x[N_DOF:]
    ev = model.evaluate(q)
    p_sw = ev.pos[PT["swing_foot"]]
    J_sw = ev.J[PT["swing_foot"]]
    qn = q[SWAP_PERM].copy()
    dqn = dq[SWAP_PERM].copy()
    qn[0] = q[0] - p_sw[0]
    qn[1] = p_sw[1]
    dqn[1] = J_sw[1] @ dq
    return np.concatenate([qn, dqn])


def project_to_manifold(x, controller: Controller, law: SlipLaw):
    """Minimal-``D``-norm velocity correction onto ``Jy dq = 0, A dq = b``."""
    q, dq = x[:N_DOF], x[N_DOF:]
    model = controller.model
    D = model.evaluate(q).D
    out = holonomic_output(q, dq, controller.spec)
    G = np.vstack([out.Jy, law.A_at(q)])
    r = np.concatenate([np.zeros(out.Jy.shape[0]), [law.b_at(q)]])
    m = G.shape[0]
    K = np.block([[D, G.T], [G, np.zeros((m, m))]])
    sol = np.linalg.lstsq(K, np.concatenate([D @ dq, r]), rcond=None)[0]
    return np.concatenate([q, sol[:N_DOF]])


def transverse_residual(x, controller: Controller, law: SlipLaw):
    """``||(y, ydot, eta_s)||`` at state ``x``."""
    q, dq = x[:N_DOF], x[N_DOF:]
    out = holonomic_output(q, dq, controller.spec)
    eta = float(law.A_at(q) @ dq) - law.b_at(q)
    return float(np.linalg.norm(np.concatenate([out.y, out.ydot, [eta]])))


def on_gait_state(spec, schedule: SlipSchedule, theta=0.0, k=1):
    """State on the constraint curve with ``y = ydot = eta_s = 0``."""
    q = spec.configuration(theta)
    tan = spec.tangent(theta)
    A = schedule.A
    dq = tan * (SlipLaw.for_step(schedule, k).b / float(A @ tan))
    return np.concatenate([q, dq])


@dataclass
class StepRecord:
    step_index: int
    pre_impact_speed: float = float("nan")
    pre_impact_vx: float = float("nan")
    mean_abs_eta_s: float = float("nan")
    min_sigma_min_A: float = float("nan")
    min_norm_Ms: float = float("nan")
    impact_impulse: np.ndarray = field(default_factory=lambda: np.full(2, np.nan))
    post_impact_zint_residual: float = float("nan")
    success: bool = False
    stance_duration: float = float("nan")
    reason: str = ""
    slip_level: float = 0.0
    momentum_residual: float = float("nan")
    impact_constraint_residual: float = float("nan")
    energy_loss: float = float("nan")
    touchdown_height: float = float("nan")
    touchdown_rate: float = float("nan")
    n_samples: int = 0
    sum_abs_eta_s: float = 0.0

    def row(self):
        return [self.step_index, self.pre_impact_speed, self.mean_abs_eta_s, self.min_sigma_min_A,
                self.min_norm_Ms, self.post_impact_zint_residual, self.stance_duration,
                int(self.success), self.reason]


@dataclass
class DenseLog:
    """Samples on a fixed 1 ms grid, concatenated over steps."""

    step: list = field(default_factory=list)
    t: list = field(default_factory=list)
    q: list = field(default_factory=list)
    dq: list = field(default_factory=list)
    u: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    y: list = field(default_factory=list)
    eta_s: list = field(default_factory=list)
    hip_world: list = field(default_factory=list)

    def arrays(self):
        return {k: np.asarray(v) for k, v in self.__dict__.items()}


@dataclass
class RunLog:
    steps: list = field(default_factory=list)
    dense: DenseLog | None = None
    config_echo: dict = field(default_factory=dict)
    mode: str = "combined"

    @property
    def n_success(self):
        return sum(1 for s in self.steps if s.success)

    @property
    def failure(self):
        return next((s.reason for s in self.steps if not s.success), "")

    @property
    def completed(self):
        return all(s.success for s in self.steps)

    def mean_abs_eta_s(self):
        n = sum(s.n_samples for s in self.steps)
        return sum(s.sum_abs_eta_s for s in self.steps) / n if n else 0.0

    # CSV -------------------------------------------------------------------
    def steps_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(STEP_COLUMNS)
        for s in self.steps:
            w.writerow([_fmt(v) for v in s.row()])
        return buf.getvalue()

    def write_steps_csv(self, path):
        Path(path).write_text(self.steps_csv(), encoding="utf-8", newline="")

    def dense_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(DENSE_COLUMNS)
        if self.dense is not None:
            d = self.dense.arrays()
            for i in range(len(d["t"])):
                w.writerow([_fmt(v) for v in np.concatenate(
                    [[d["t"][i]], d["q"][i], d["dq"][i], d["u"][i], d["lam"][i],
                     d["y"][i], [d["eta_s"][i]]])])
        return buf.getvalue()

    def write_dense_csv(self, path):
        Path(path).write_text(self.dense_csv(), encoding="utf-8", newline="")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_steps_csv(path):
    """Parse a step table back into dictionaries with numeric fields."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            rec = {"step": int(r["step"]), "success": bool(int(r["success"])), "reason": r["reason"]}
            for k in STEP_COLUMNS[1:7]:
                rec[k] = float(r[k])
            rows.append(rec)
    return rows


def _sample_stance(res: StanceResult, controller, law, rec: StepRecord, dense: DenseLog | None,
                   frame_x, k):
    """Evaluate controller diagnostics on a 1 ms grid over the stance phase."""
    n = max(int(np.floor(res.duration / SAMPLE_DT + 1e-9)), 0) + 1
    ts = res.t0 + SAMPLE_DT * np.arange(n)
    sigma, nms, acc = np.inf, np.inf, 0.0
    model = controller.model
    for t in ts:
        x = res(t)
        q, dq = x[:N_DOF], x[N_DOF:]
        ce = controller(q, dq, law)
        sigma = min(sigma, ce.sigma_min_A)
        nms = min(nms, ce.norm_Ms)
        acc += abs(ce.eta_s)
        if dense is not None:
            lam = model.contact_forces(q, dq, ce.u)
            hip = model.evaluate(q).pos[PT["hip"]]
            dense.step.append(k)
            dense.t.append(t)
            dense.q.append(q.copy())
            dense.dq.append(dq.copy())
            dense.u.append(ce.u.copy())
            dense.lam.append(lam.as_array())
            dense.y.append(ce.y.copy())
            dense.eta_s.append(ce.eta_s)
            dense.hip_world.append([frame_x + hip[0], hip[1]])
    rec.n_samples = n
    rec.sum_abs_eta_s = acc
    rec.mean_abs_eta_s = acc / n
    rec.min_sigma_min_A = sigma
    rec.min_norm_Ms = nms


def hybrid_step(x, controller: Controller, law: SlipLaw, next_law: SlipLaw | None = None,
                t0=0.0, impact_mode="plastic", max_time=MAX_TIME):
    """One stance phase followed by the impact and leg swap.

    Returns ``(stance_result, x_minus, x_plus, Lambda)`` where ``x_plus`` is
    in the new stance leg's labeling.
    """
    res = integrate_stance(x, controller, law, t0=t0, max_time=max_time)
    xm = res.x_minus
    xi, Lam = impact_map(xm, controller.model)
    xp = leg_swap(xi, controller.model)
    if impact_mode == "projection":
        xp = project_to_manifold(xp, controller, next_law or law)
    return res, xm, xp, Lam


def run_steps(x0, controller: Controller, schedule: SlipSchedule, n_steps, dense=False,
              impact_mode="plastic", config_echo=None, max_time=MAX_TIME) -> RunLog:
    """Walk ``n_steps`` steps, stopping at the first failed stance phase.

    Dynamics-level failures are recorded in the log rather than raised.
    """
    if impact_mode not in IMPACT_MODES:
        raise ValueError(f"impact_mode must be one of {IMPACT_MODES}")
    log = RunLog(dense=DenseLog() if dense else None, config_echo=config_echo or {},
                 mode=controller.mode)
    model = controller.model
    x = np.asarray(x0, dtype=float).copy()
    t, frame_x = 0.0, 0.0
    for k in range(1, int(n_steps) + 1):
        law = SlipLaw.for_step(schedule, k)
        next_law = SlipLaw.for_step(schedule, k + 1)
        rec = StepRecord(step_index=k, slip_level=schedule.level(k))
        log.steps.append(rec)
        try:
            res, xm, xp, Lam = hybrid_step(x, controller, law, next_law, t0=t,
                                           impact_mode=impact_mode, max_time=max_time)
        except StepFailed as exc:
            rec.reason = exc.reason
            break
        except NearSingularDecoupling:
            rec.reason = "singular-decoupling"
            break
        except SlipGaitError as exc:
            rec.reason = type(exc).__name__
            logger.warning("step %d failed: %s", k, exc)
            break
        _sample_stance(res, controller, law, rec, log.dense, frame_x, k)
        q, dqm = xm[:N_DOF], xm[N_DOF:]
        ev = model.evaluate(q)
        dqp = impact_map(xm, model)[0][N_DOF:]
        J_i = ev.J[PT["swing_foot"]]
        rec.pre_impact_speed = float(law.A_at(q) @ dqm)
        rec.pre_impact_vx = float(dqm[0])
        rec.impact_impulse = Lam
        rec.momentum_residual = float(np.abs(ev.D @ (dqp - dqm) - J_i.T @ Lam).max())
        rec.impact_constraint_residual = float(np.abs(J_i @ dqp).max())
        rec.energy_loss = 0.5 * float(dqm @ ev.D @ dqm - dqp @ ev.D @ dqp)
        rec.touchdown_height = float(ev.pos[PT["swing_foot"], 1])
        rec.touchdown_rate = float(J_i[1] @ dqm)
        rec.post_impact_zint_residual = transverse_residual(xp, controller, next_law)
        rec.stance_duration = res.duration
        rec.success = True
        frame_x += float(ev.pos[PT["swing_foot"], 0])
        t = res.t_end
        x = xp
    return log

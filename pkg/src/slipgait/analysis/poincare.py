"""Step-to-step return map on the touchdown surface, its fixed point and linearization.

Two charts of the pre-impact section are provided.

``full`` (d = 13)
    The pre-impact state with the swing hip angle removed; that angle is
    recovered from the touchdown condition ``h_sw(q) = 0``.
``reduced`` (d = 1)
    Pre-impact states on the gait curve at the end of the step, indexed by
    the forward hip speed.  The exact section of the constraint manifold is a
    single point, so this chart keeps the one velocity direction along the
    curve that the slip output regulates.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..control import Controller
from ..dynamics import N_DOF, PT
from ..errors import NoConvergence, SectionMiss, StepFailed, SlipGaitError
from ..hybrid import impact_map, integrate_stance, leg_swap, project_to_manifold
from ..slip import SlipLaw

CHARTS = ("full", "reduced")
# swing hip angle, solved from the touchdown condition in the full chart
_ELIM = 5
STABILITY_MARGIN = 1e-6
# rollouts are converged to this level; smaller distances are solver noise
SOLVER_FLOOR = 1e-9


@dataclass
class PoincareContext:
    """Everything one return-map evaluation needs."""

    controller: Controller
    law: SlipLaw
    chart: str = "full"
    rtol: float = 1e-11
    atol: float = 1e-12
    impact_mode: str = "plastic"

    def __post_init__(self):
        if self.chart not in CHARTS:
            raise ValueError(f"chart must be one of {CHARTS}")

    @property
    def model(self):
        return self.controller.model

    @property
    def dim(self):
        return 2 * N_DOF - 1 if self.chart == "full" else 1

    # chart maps ------------------------------------------------------------
    def to_chart(self, x):
        x = np.asarray(x, dtype=float)
        if self.chart == "full":
            return np.delete(x, _ELIM)
        return np.array([x[N_DOF]])

    def from_chart(self, c):
        c = np.asarray(c, dtype=float)
        if c.shape != (self.dim,):
            raise ValueError(f"chart coordinates must have shape ({self.dim},)")
        if self.chart == "reduced":
            spec = self.controller.spec
            q = spec.configuration(1.0)
            return np.concatenate([q, spec.tangent(1.0) * c[0]])
        x = np.insert(c, _ELIM, 0.0)
        x[_ELIM] = self._solve_touchdown(x[:N_DOF])
        return x

    def _solve_touchdown(self, q):
        """Swing hip angle putting the swing foot on the ground."""
        q = q.copy()
        q[_ELIM] = self.controller.spec.configuration(1.0)[_ELIM]
        model = self.model
        for _ in range(50):
            ev = model.evaluate(q)
            h = ev.pos[PT["swing_foot"], 1]
            dh = ev.J[PT["swing_foot"], 1, _ELIM]
            if abs(dh) < 1e-8:
                break
            step = h / dh
            q[_ELIM] -= step
            if abs(step) < 1e-15 or abs(h) < 1e-14:
                return q[_ELIM]
        ev = model.evaluate(q)
        if abs(ev.pos[PT["swing_foot"], 1]) > 1e-12:
            raise SectionMiss("no swing hip angle places the swing foot on the ground")
        return q[_ELIM]


def poincare_step(x_minus, ctx: PoincareContext):
    """One hybrid step from a pre-impact state to the next pre-impact state."""
    model = ctx.model
    xp = leg_swap(impact_map(x_minus, model)[0], model)
    if ctx.impact_mode == "projection":
        xp = project_to_manifold(xp, ctx.controller, ctx.law)
    res = integrate_stance(xp, ctx.controller, ctx.law, rtol=ctx.rtol, atol=ctx.atol)
    return res.x_minus


def poincare_map(c, ctx: PoincareContext):
    """Return map in chart coordinates."""
    x_next = poincare_step(ctx.from_chart(c), ctx)
    if ctx.chart == "reduced":
        # leave the chart's validity region when the return is far off the curve
        spec = ctx.controller.spec
        q_ref = spec.configuration(1.0)
        if np.abs(x_next[2:N_DOF] - q_ref[2:]).max() > 0.1:
            raise SectionMiss("return state left the reduced chart neighbourhood")
    return ctx.to_chart(x_next)


def _fd_steps(c, step):
    return step * np.maximum(1.0, np.abs(c))


def fd_jacobian(c, ctx: PoincareContext, step=1e-6, central=True, base=None):
    c = np.asarray(c, dtype=float)
    d = c.shape[0]
    h = _fd_steps(c, step)
    J = np.zeros((d, d))
    if not central:
        f0 = poincare_map(c, ctx) if base is None else base
    for j in range(d):
        e = np.zeros(d)
        e[j] = h[j]
        if central:
            J[:, j] = (poincare_map(c + e, ctx) - poincare_map(c - e, ctx)) / (2 * h[j])
        else:
            J[:, j] = (poincare_map(c + e, ctx) - f0) / h[j]
    return J


@dataclass
class PoincareResult:
    fixed_point: np.ndarray
    chart_point: np.ndarray
    residual_norm: float
    iterations: int = 0
    A_P: np.ndarray | None = None
    eigenvalues: np.ndarray | None = None
    spectral_radius: float = float("nan")
    stable: bool = False
    chart: str = "full"
    history: list = field(default_factory=list)

    def to_dict(self):
        ev = [] if self.eigenvalues is None else [[float(z.real), float(z.imag)] for z in self.eigenvalues]
        return {"residual": float(self.residual_norm), "eigenvalues": ev,
                "spectral_radius": float(self.spectral_radius), "stable": bool(self.stable)}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def find_fixed_point(c_guess, ctx: PoincareContext, tol=1e-9, max_iter=50, step=1e-6):
    """Damped Newton iteration on ``P(c) - c`` with a forward-difference Jacobian."""
    c = np.asarray(c_guess, dtype=float).copy()
    d = c.shape[0]
    try:
        F = poincare_map(c, ctx) - c
    except (StepFailed, SlipGaitError) as exc:
        raise NoConvergence("the initial guess does not complete a step", best=c,
                            residual=np.inf, cause=exc) from exc
    best, best_r = c.copy(), float(np.abs(F).max())
    history = [best_r]
    for it in range(max_iter):
        r = float(np.abs(F).max())
        if r < tol:
            return PoincareResult(ctx.from_chart(c), c, r, it, chart=ctx.chart, history=history)
        try:
            J = fd_jacobian(c, ctx, step=step, central=False, base=F + c) - np.eye(d)
        except SlipGaitError as exc:
            raise NoConvergence("Jacobian rollout failed", best=best, residual=best_r,
                                cause=exc) from exc
        delta = -np.linalg.lstsq(J, F, rcond=None)[0]
        t = 1.0
        for _ in range(9):
            try:
                c_new = c + t * delta
                F_new = poincare_map(c_new, ctx) - c_new
                if float(np.abs(F_new).max()) < r:
                    break
            except SlipGaitError:
                pass
            t *= 0.5
        else:
            raise NoConvergence("line search failed to reduce the residual", best=best,
                                residual=best_r)
        c, F = c_new, F_new
        r = float(np.abs(F).max())
        history.append(r)
        if r < best_r:
            best, best_r = c.copy(), r
    if best_r < tol:
        return PoincareResult(ctx.from_chart(best), best, best_r, max_iter, chart=ctx.chart,
                              history=history)
    raise NoConvergence(f"no fixed point after {max_iter} iterations", best=best, residual=best_r)


def linearize_poincare(c_star, ctx: PoincareContext, step=1e-6, result=None):
    """Central-difference Jacobian of the return map and its spectrum."""
    c_star = np.asarray(c_star, dtype=float)
    A_P = fd_jacobian(c_star, ctx, step=step, central=True)
    ev = np.linalg.eigvals(A_P)
    rho = float(np.abs(ev).max())
    if result is None:
        r = float(np.abs(poincare_map(c_star, ctx) - c_star).max())
        result = PoincareResult(ctx.from_chart(c_star), c_star, r, chart=ctx.chart)
    result.A_P = A_P
    result.eigenvalues = ev
    result.spectral_radius = rho
    result.stable = rho < 1.0 - STABILITY_MARGIN
    return result


def nominal_section_point(ctx: PoincareContext):
    """Chart coordinates of the on-curve pre-impact state at the nominal speed."""
    spec = ctx.controller.spec
    q = spec.configuration(1.0)
    t = spec.tangent(1.0)
    v = ctx.law.b_at(q) / float(ctx.law.A_at(q) @ t)
    return ctx.to_chart(np.concatenate([q, t * v]))


def rollout_distances(c0, c_star, ctx: PoincareContext, n_steps):
    """Chart distance to ``c_star`` over ``n_steps`` iterations of the map."""
    c = np.asarray(c0, dtype=float)
    out = [float(np.linalg.norm(c - c_star))]
    for _ in range(n_steps):
        c = poincare_map(c, ctx)
        out.append(float(np.linalg.norm(c - c_star)))
    return out


def contracts(distances, transient=3, floor=SOLVER_FLOOR):
    """Monotone decrease after ``transient`` steps; distances at the floor count as converged."""
    d = distances[transient:]
    return all(b < a or b <= floor for a, b in zip(d, d[1:]))

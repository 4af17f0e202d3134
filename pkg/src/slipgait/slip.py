"""Virtual affine nonholonomic constraint ``A(q) dq = b(q)`` on the stance foot."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .dynamics import N_DOF, PT, BipedModel, ContactForces

DEFAULT_A_ROW = (1.0, 0.0, 0.10, 0.08, 0.04, -0.05, -0.03)
DEFAULT_S_LEVELS = (0.0, 0.015, 0.03, 0.0, 0.02)
# speed carried by the shipped nominal gait; A @ dq on the gait curve
NOMINAL_V = 0.58


@dataclass(frozen=True, eq=False)
class SlipSchedule:
    """Piecewise-constant slip reference ``b_k = v_nom + s_k``.

    Level ``i`` is held for ``block_len`` consecutive steps and the level list
    is cycled when the horizon is longer than ``block_len * len(s_levels)``.
    """

    A_row: tuple = DEFAULT_A_ROW
    v_nom: float = NOMINAL_V
    s_levels: tuple = DEFAULT_S_LEVELS
    block_len: int = 10

    def __post_init__(self):
        A = tuple(float(v) for v in self.A_row)
        if len(A) != N_DOF:
            raise ValueError("A_row must have 7 entries")
        if not any(A):
            raise ValueError("A_row must be nonzero")
        levels = tuple(float(v) for v in self.s_levels)
        if len(levels) < 1:
            raise ValueError("s_levels needs at least one entry")
        if int(self.block_len) < 1:
            raise ValueError("block_len must be >= 1")
        object.__setattr__(self, "A_row", A)
        object.__setattr__(self, "s_levels", levels)
        object.__setattr__(self, "v_nom", float(self.v_nom))
        object.__setattr__(self, "block_len", int(self.block_len))

    @property
    def A(self):
        return np.array(self.A_row)

    def level(self, k):
        if k < 1:
            raise ValueError("step index k starts at 1")
        return self.s_levels[((k - 1) // self.block_len) % len(self.s_levels)]

    def to_dict(self):
        return {"A_row": list(self.A_row), "v_nom": self.v_nom,
                "s_levels": list(self.s_levels), "block_len": self.block_len}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"A_row", "v_nom", "s_levels", "block_len"}
        if unknown:
            raise ValueError(f"unknown SlipSchedule fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def slip_reference(k, schedule: SlipSchedule):
    """``b_k`` for stance phase ``k`` (1-based)."""
    return schedule.v_nom + schedule.level(k)


@dataclass(frozen=True, eq=False)
class SlipLaw:
    """One stance phase's constraint ``A(q) dq = b(q)``.

    The constant case is what the experiments use.  ``A_fn``/``b_fn`` give a
    configuration-dependent law; they must return ``(A, dA/dq)`` with
    ``dA[i, k] = dA_i/dq_k`` and ``(b, db/dq)`` respectively.
    """

    A_row: np.ndarray
    b: float = 0.0
    A_fn: Callable | None = None
    b_fn: Callable | None = None

    @classmethod
    def for_step(cls, schedule: SlipSchedule, k):
        return cls(schedule.A, slip_reference(k, schedule))

    def A_at(self, q):
        if self.A_fn is None:
            return np.asarray(self.A_row, dtype=float)
        return np.asarray(self.A_fn(q)[0], dtype=float)

    def b_at(self, q):
        if self.b_fn is None:
            return float(self.b)
        return float(self.b_fn(q)[0])

    def extra_drift(self, q, dq):
        """``Adot dq - (db/dq) dq``; zero for constant A and b."""
        out = 0.0
        if self.A_fn is not None:
            dA = np.asarray(self.A_fn(q)[1], dtype=float)
            out += float(dq @ dA @ dq)
        if self.b_fn is not None:
            out -= float(np.asarray(self.b_fn(q)[1], dtype=float) @ dq)
        return out


def slip_output(q, dq, b_k, A_row=DEFAULT_A_ROW):
    """``eta_s = A dq - b``."""
    return float(np.asarray(A_row, dtype=float) @ np.asarray(dq, dtype=float)) - float(b_k)


class SlipEval(NamedTuple):
    eta_s: float
    Gamma_s: float
    M_s: np.ndarray


def slip_decomposition(q, dq, lam, law: SlipLaw, model: BipedModel) -> SlipEval:
    """Split ``d(eta_s)/dt = Gamma_s + M_s u`` along the stance dynamics."""
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    ev = model.evaluate(q, dq)
    lam = lam.as_array() if isinstance(lam, ContactForces) else np.asarray(lam, dtype=float)
    A = law.A_at(q)
    drift = ev.J[PT["stance_foot"]].T @ lam - ev.bias
    sol = ev.solve(np.column_stack([drift, model.B]))
    Gamma = float(A @ sol[:, 0]) + law.extra_drift(q, dq)
    M_s = A @ sol[:, 1:]
    return SlipEval(float(A @ dq) - law.b_at(q), Gamma, M_s)

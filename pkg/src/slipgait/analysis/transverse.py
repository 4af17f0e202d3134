"""Linear dynamics of the transverse coordinates ``eta = (y, ydot, eta_s)``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..control import Gains
from ..gait import N_OUTPUTS


@dataclass(frozen=True, eq=False)
class TransverseSpec:
    A_perp: np.ndarray
    eigenvalues: np.ndarray
    hurwitz: bool

    @property
    def slowest_rate(self):
        """Smallest decay rate ``min(-Re(lambda))``."""
        return float(-self.eigenvalues.real.max())


def assemble_transverse(k_s, Kp, Kd):
    """``[0, I, 0; -Kp, -Kd, 0; 0, 0, -k_s]`` without validating the gains."""
    k = N_OUTPUTS
    Kp = np.asarray(Kp, dtype=float) * (np.eye(k) if np.ndim(Kp) == 0 else 1.0)
    Kd = np.asarray(Kd, dtype=float) * (np.eye(k) if np.ndim(Kd) == 0 else 1.0)
    A = np.zeros((2 * k + 1, 2 * k + 1))
    A[:k, k:2 * k] = np.eye(k)
    A[k:2 * k, :k] = -Kp
    A[k:2 * k, k:2 * k] = -Kd
    A[2 * k, 2 * k] = -float(k_s)
    ev = np.linalg.eigvals(A)
    return TransverseSpec(A, ev, bool(np.all(ev.real < 0.0)))


def transverse_matrix(gains: Gains) -> TransverseSpec:
    return assemble_transverse(gains.k_s, gains.Kp, gains.Kd)


def analytic_eigenvalues(k_s, Kp, Kd):
    """``{-k_s}`` together with the eigenvalues of ``[0, I; -Kp, -Kd]``."""
    k = N_OUTPUTS
    Kp = np.asarray(Kp, dtype=float) * (np.eye(k) if np.ndim(Kp) == 0 else 1.0)
    Kd = np.asarray(Kd, dtype=float) * (np.eye(k) if np.ndim(Kd) == 0 else 1.0)
    blk = np.block([[np.zeros((k, k)), np.eye(k)], [-Kp, -Kd]])
    return np.concatenate([[-float(k_s)], np.linalg.eigvals(blk)])

"""Pure-NumPy reference kernels.

These are the fallback implementations of the hot per-evaluation routines;
``_kernels.pyx`` mirrors them loop-for-loop.  Every point of the chain is
written relative to the base translation ``(q[0], q[1])`` as

    x = q[0] + sum_j WX[p, j] * sin(beta_j)
    y = q[1] + sum_j WY[p, j] * cos(beta_j)

with link angles ``beta = C @ q``.
"""
import numpy as np


def eval_points(WX, WY, C, q, dq):
    """Positions, Jacobians and ``Jdot @ dq`` for every tabulated point.

    Returns
    -------
    pos : (P, 2)
    J : (P, 2, n)
    Jdqd : (P, 2)
    """
    beta = C @ q
    omega = C @ dq
    s = np.sin(beta)
    c = np.cos(beta)
    P = WX.shape[0]
    n = q.shape[0]

    pos = np.empty((P, 2))
    pos[:, 0] = q[0] + WX @ s
    pos[:, 1] = q[1] + WY @ c

    J = np.zeros((P, 2, n))
    J[:, 0, 0] = 1.0
    J[:, 1, 1] = 1.0
    J[:, 0, :] += (WX * c) @ C
    J[:, 1, :] -= (WY * s) @ C

    w2 = omega * omega
    Jdqd = np.empty((P, 2))
    Jdqd[:, 0] = -(WX * s) @ w2
    Jdqd[:, 1] = -(WY * c) @ w2
    return pos, J, Jdqd


def eval_model(WX, WY, C, mass, inertia, gravity, q, dq):
    """Mass matrix, bias forces and point kinematics in one pass.

    The first ``len(mass)`` rows of the point table are the link centres of
    mass, in the same order as the rows of ``C``.
    """
    pos, J, Jdqd = eval_points(WX, WY, C, q, dq)
    nb = mass.shape[0]
    Jb = J[:nb]
    Cb = C[:nb]
    D = np.einsum("b,bki,bkj->ij", mass, Jb, Jb) + (Cb.T * inertia) @ Cb
    bias = np.einsum("b,bki,bk->i", mass, Jb, Jdqd[:nb])
    bias += gravity * (mass @ Jb[:, 1, :])
    return D, bias, pos, J, Jdqd


def bernstein(M, theta):
    """Degree-``M`` Bernstein basis and its first two theta-derivatives."""
    i = np.arange(M + 1)
    binom = _binomials(M)
    # Direct powers are fine for the small degrees used by gaits.
    t_pow = theta ** i
    u_pow = (1.0 - theta) ** (M - i)
    b0 = binom * t_pow * u_pow
    b1 = np.zeros(M + 1)
    b2 = np.zeros(M + 1)
    # Derivatives via degree elevation of the lower-order bases.
    if M >= 1:
        low = bernstein_values(M - 1, theta)
        b1[:-1] -= M * low
        b1[1:] += M * low
    if M >= 2:
        low2 = bernstein_values(M - 2, theta)
        f = M * (M - 1)
        b2[:-2] += f * low2
        b2[1:-1] -= 2.0 * f * low2
        b2[2:] += f * low2
    return b0, b1, b2


def bernstein_values(M, theta):
    i = np.arange(M + 1)
    return _binomials(M) * theta ** i * (1.0 - theta) ** (M - i)


_BINOM_CACHE = {}


def _binomials(M):
    try:
        return _BINOM_CACHE[M]
    except KeyError:
        from math import comb

        out = np.array([comb(M, i) for i in range(M + 1)], dtype=float)
        _BINOM_CACHE[M] = out
        return out

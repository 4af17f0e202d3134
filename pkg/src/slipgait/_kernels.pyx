# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contract as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos

cnp.import_array()


cdef void _points(const double[:, ::1] WX, const double[:, ::1] WY,
                  const double[:, ::1] C, const double[::1] q,
                  const double[::1] dq, double[:, ::1] pos,
                  double[:, :, ::1] J, double[:, ::1] Jdqd,
                  double* s, double* c, double* w2) noexcept nogil:
    cdef Py_ssize_t P = WX.shape[0]
    cdef Py_ssize_t L = C.shape[0]
    cdef Py_ssize_t n = C.shape[1]
    cdef Py_ssize_t p, j, k
    cdef double beta, omega, ax, ay, cx, cy
    for j in range(L):
        beta = 0.0
        omega = 0.0
        for k in range(n):
            beta += C[j, k] * q[k]
            omega += C[j, k] * dq[k]
        s[j] = sin(beta)
        c[j] = cos(beta)
        w2[j] = omega * omega
    for p in range(P):
        ax = q[0]
        ay = q[1]
        cx = 0.0
        cy = 0.0
        for k in range(n):
            J[p, 0, k] = 0.0
            J[p, 1, k] = 0.0
        J[p, 0, 0] = 1.0
        J[p, 1, 1] = 1.0
        for j in range(L):
            if WX[p, j] != 0.0:
                ax += WX[p, j] * s[j]
                cx -= WX[p, j] * s[j] * w2[j]
                for k in range(n):
                    J[p, 0, k] += WX[p, j] * c[j] * C[j, k]
            if WY[p, j] != 0.0:
                ay += WY[p, j] * c[j]
                cy -= WY[p, j] * c[j] * w2[j]
                for k in range(n):
                    J[p, 1, k] -= WY[p, j] * s[j] * C[j, k]
        pos[p, 0] = ax
        pos[p, 1] = ay
        Jdqd[p, 0] = cx
        Jdqd[p, 1] = cy


def eval_points(WX, WY, C, q, dq):
    cdef double[:, ::1] wx = np.ascontiguousarray(WX, dtype=np.float64)
    cdef double[:, ::1] wy = np.ascontiguousarray(WY, dtype=np.float64)
    cdef double[:, ::1] cm = np.ascontiguousarray(C, dtype=np.float64)
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[::1] dqv = np.ascontiguousarray(dq, dtype=np.float64)
    cdef Py_ssize_t P = wx.shape[0]
    cdef Py_ssize_t L = cm.shape[0]
    cdef Py_ssize_t n = cm.shape[1]
    pos = np.empty((P, 2))
    J = np.empty((P, 2, n))
    Jdqd = np.empty((P, 2))
    scratch = np.empty(3 * L)
    cdef double[::1] sc = scratch
    _points(wx, wy, cm, qv, dqv, pos, J, Jdqd, &sc[0], &sc[L], &sc[2 * L])
    return pos, J, Jdqd


def eval_model(WX, WY, C, mass, inertia, double gravity, q, dq):
    cdef double[:, ::1] wx = np.ascontiguousarray(WX, dtype=np.float64)
    cdef double[:, ::1] wy = np.ascontiguousarray(WY, dtype=np.float64)
    cdef double[:, ::1] cm = np.ascontiguousarray(C, dtype=np.float64)
    cdef double[::1] m = np.ascontiguousarray(mass, dtype=np.float64)
    cdef double[::1] I = np.ascontiguousarray(inertia, dtype=np.float64)
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[::1] dqv = np.ascontiguousarray(dq, dtype=np.float64)
    cdef Py_ssize_t P = wx.shape[0]
    cdef Py_ssize_t L = cm.shape[0]
    cdef Py_ssize_t n = cm.shape[1]
    cdef Py_ssize_t nb = m.shape[0]
    cdef Py_ssize_t b, i, j, a
    cdef double acc

    pos_a = np.empty((P, 2))
    J_a = np.empty((P, 2, n))
    Jdqd_a = np.empty((P, 2))
    D_a = np.zeros((n, n))
    bias_a = np.zeros(n)
    scratch = np.empty(3 * L)
    cdef double[:, ::1] pos = pos_a
    cdef double[:, :, ::1] J = J_a
    cdef double[:, ::1] Jdqd = Jdqd_a
    cdef double[:, ::1] D = D_a
    cdef double[::1] bias = bias_a
    cdef double[::1] sc = scratch

    with nogil:
        _points(wx, wy, cm, qv, dqv, pos, J, Jdqd, &sc[0], &sc[L], &sc[2 * L])
        for i in range(n):
            for j in range(i, n):
                acc = 0.0
                for b in range(nb):
                    acc += m[b] * (J[b, 0, i] * J[b, 0, j] + J[b, 1, i] * J[b, 1, j])
                    acc += I[b] * cm[b, i] * cm[b, j]
                D[i, j] = acc
                D[j, i] = acc
            acc = 0.0
            for b in range(nb):
                acc += m[b] * (J[b, 0, i] * Jdqd[b, 0] + J[b, 1, i] * Jdqd[b, 1])
                acc += gravity * m[b] * J[b, 1, i]
            bias[i] = acc
    return D_a, bias_a, pos_a, J_a, Jdqd_a


def bernstein(int M, double theta):
    cdef Py_ssize_t i
    b0 = np.empty(M + 1)
    b1 = np.zeros(M + 1)
    b2 = np.zeros(M + 1)
    cdef double[::1] v0 = b0
    cdef double[::1] v1 = b1
    cdef double[::1] v2 = b2
    cdef double[::1] low
    _fill_bernstein(M, theta, v0)
    cdef double f
    if M >= 1:
        low_a = np.empty(M)
        low = low_a
        _fill_bernstein(M - 1, theta, low)
        for i in range(M):
            v1[i] -= M * low[i]
            v1[i + 1] += M * low[i]
    if M >= 2:
        low_a = np.empty(M - 1)
        low = low_a
        _fill_bernstein(M - 2, theta, low)
        f = M * (M - 1)
        for i in range(M - 1):
            v2[i] += f * low[i]
            v2[i + 1] -= 2.0 * f * low[i]
            v2[i + 2] += f * low[i]
    return b0, b1, b2


def bernstein_values(int M, double theta):
    out = np.empty(M + 1)
    cdef double[::1] v = out
    _fill_bernstein(M, theta, v)
    return out


cdef void _fill_bernstein(int M, double t, double[::1] out) noexcept:
    # de Casteljau-style triangle; stable for t slightly outside [0, 1].
    cdef Py_ssize_t i, k
    cdef double u = 1.0 - t
    for i in range(M + 1):
        out[i] = 0.0
    out[0] = 1.0
    for k in range(1, M + 1):
        for i in range(k, 0, -1):
            out[i] = u * out[i] + t * out[i - 1]
        out[0] = u * out[0]

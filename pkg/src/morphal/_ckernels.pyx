# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled kernels for the dense-network hot loops.

Mirrors ``_pykernels`` operation for operation (same loop structure, same
accumulation order, same sigmoid branches). Compiled with -ffp-contract=off
so results are bit-identical with the pure-Python fallback.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, pow, sqrt

ACT_LINEAR = 0
ACT_RELU = 1
ACT_SIGMOID = 2


cdef inline double _sigmoid(double z) nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def dense_forward(double[:, ::1] x, double[:, ::1] w, double[::1] b,
                  int act, double[:, ::1] out):
    """out = act(x @ w.T + b), accumulated in ascending-k order."""
    cdef Py_ssize_t n = x.shape[0], fin = x.shape[1], fout = w.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc
    with nogil:
        for i in range(n):
            for j in range(fout):
                acc = b[j]
                for k in range(fin):
                    acc += x[i, k] * w[j, k]
                if act == 1:
                    out[i, j] = acc if acc > 0.0 else 0.0
                elif act == 2:
                    out[i, j] = _sigmoid(acc)
                else:
                    out[i, j] = acc


def dense_backward(double[:, ::1] grad_out, double[:, ::1] a,
                   double[:, ::1] x, double[:, ::1] w, int act,
                   double[:, ::1] gw, double[::1] gb, gx):
    """Backward through one dense layer; see the Python twin for semantics."""
    cdef Py_ssize_t n = x.shape[0], fin = x.shape[1], fout = w.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double g, d, s
    cdef double[:, ::1] dz = np.empty((n, fout), dtype=np.float64)
    cdef double[:, ::1] gxv
    cdef bint want_gx = gx is not None

    with nogil:
        for i in range(n):
            for j in range(fout):
                g = grad_out[i, j]
                if act == 1:
                    dz[i, j] = g if a[i, j] > 0.0 else 0.0
                elif act == 2:
                    s = a[i, j]
                    dz[i, j] = g * (s * (1.0 - s))
                else:
                    dz[i, j] = g

        for j in range(fout):
            gb[j] = 0.0
            for k in range(fin):
                gw[j, k] = 0.0
        for i in range(n):
            for j in range(fout):
                d = dz[i, j]
                gb[j] += d
                for k in range(fin):
                    gw[j, k] += d * x[i, k]

    if want_gx:
        gxv = gx
        with nogil:
            for i in range(n):
                for k in range(fin):
                    gxv[i, k] = 0.0
            for i in range(n):
                for j in range(fout):
                    d = dz[i, j]
                    for k in range(fin):
                        gxv[i, k] += d * w[j, k]


def adam_step(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
              long t, double lr, double b1, double b2, double eps):
    """One Adam update (bias-corrected), in place, over flat arrays."""
    cdef Py_ssize_t i, size = p.shape[0]
    cdef double c1 = 1.0 - pow(b1, <double> t)
    cdef double c2 = 1.0 - pow(b2, <double> t)
    cdef double gi, mi, vi
    with nogil:
        for i in range(size):
            gi = g[i]
            mi = b1 * m[i] + (1.0 - b1) * gi
            vi = b2 * v[i] + (1.0 - b2) * (gi * gi)
            m[i] = mi
            v[i] = vi
            p[i] -= lr * (mi / c1) / (sqrt(vi / c2) + eps)


def mse_loss_grad(double[::1] pred, double[::1] target, double[::1] grad):
    """Mean squared error over all elements; writes dL/dpred into grad."""
    cdef Py_ssize_t i, size = pred.shape[0]
    cdef double cnt = <double> size
    cdef double acc = 0.0, d
    with nogil:
        for i in range(size):
            d = pred[i] - target[i]
            acc += d * d
            grad[i] = 2.0 * d / cnt
    return acc / cnt


def bce_loss_grad(double[::1] p, double[::1] y, double[::1] grad,
                  double clamp_eps):
    """Mean binary cross-entropy with clamping; writes dL/dp into grad."""
    cdef Py_ssize_t i, size = p.shape[0]
    cdef double cnt = <double> size
    cdef double lo = clamp_eps, hi = 1.0 - clamp_eps
    cdef double acc = 0.0, pc, yi
    with nogil:
        for i in range(size):
            pc = p[i]
            if pc < lo:
                pc = lo
            elif pc > hi:
                pc = hi
            yi = y[i]
            acc += -(yi * log(pc) + (1.0 - yi) * log(1.0 - pc))
            grad[i] = (pc - yi) / (pc * (1.0 - pc) * cnt)
    return acc / cnt

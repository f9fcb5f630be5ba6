# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled selective-scan kernels; same contract as ``_scan_py``."""
import numpy as np
from libc.math cimport exp


def scan_forward(double[:, :, ::1] u, double[:, :, ::1] delta, double[:, ::1] A,
                 double[:, :, ::1] Bm, double[:, :, ::1] C, double[::1] Dskip):
    cdef Py_ssize_t nb = u.shape[0], nt = u.shape[1], nd = u.shape[2], nn = A.shape[1]
    cdef Py_ssize_t b, t, d, n
    cdef double dt, ut, acc, h
    hs_arr = np.zeros((nb, nt, nd, nn))
    y_arr = np.empty((nb, nt, nd))
    cdef double[:, :, :, ::1] hs = hs_arr
    cdef double[:, :, ::1] y = y_arr
    with nogil:
        for b in range(nb):
            for t in range(nt):
                for d in range(nd):
                    dt = delta[b, t, d]
                    ut = u[b, t, d]
                    acc = Dskip[d] * ut
                    for n in range(nn):
                        h = dt * Bm[b, t, n] * ut
                        if t > 0:
                            h = h + exp(dt * A[d, n]) * hs[b, t - 1, d, n]
                        hs[b, t, d, n] = h
                        acc = acc + C[b, t, n] * h
                    y[b, t, d] = acc
    return y_arr, hs_arr


def scan_backward(double[:, :, ::1] dy, double[:, :, ::1] u, double[:, :, ::1] delta,
                  double[:, ::1] A, double[:, :, ::1] Bm, double[:, :, ::1] C,
                  double[::1] Dskip, double[:, :, :, ::1] hs):
    cdef Py_ssize_t nb = u.shape[0], nt = u.shape[1], nd = u.shape[2], nn = A.shape[1]
    cdef Py_ssize_t b, t, d, n
    cdef double g, dt, ut, abar, hprev, gy, ga
    du_arr = np.zeros((nb, nt, nd))
    ddelta_arr = np.zeros((nb, nt, nd))
    dA_arr = np.zeros((nd, nn))
    dB_arr = np.zeros((nb, nt, nn))
    dC_arr = np.zeros((nb, nt, nn))
    dD_arr = np.zeros(nd)
    gh_arr = np.zeros((nd, nn))
    cdef double[:, :, ::1] du = du_arr
    cdef double[:, :, ::1] ddelta = ddelta_arr
    cdef double[:, ::1] dA = dA_arr
    cdef double[:, :, ::1] dB = dB_arr
    cdef double[:, :, ::1] dC = dC_arr
    cdef double[::1] dD = dD_arr
    cdef double[:, ::1] gh = gh_arr
    with nogil:
        for b in range(nb):
            for d in range(nd):
                for n in range(nn):
                    gh[d, n] = 0.0
            for t in range(nt - 1, -1, -1):
                for d in range(nd):
                    gy = dy[b, t, d]
                    dt = delta[b, t, d]
                    ut = u[b, t, d]
                    du[b, t, d] += gy * Dskip[d]
                    dD[d] += gy * ut
                    for n in range(nn):
                        dC[b, t, n] += gy * hs[b, t, d, n]
                        g = gh[d, n] + gy * C[b, t, n]
                        ddelta[b, t, d] += g * Bm[b, t, n] * ut
                        dB[b, t, n] += g * dt * ut
                        du[b, t, d] += g * dt * Bm[b, t, n]
                        abar = exp(dt * A[d, n])
                        if t > 0:
                            hprev = hs[b, t - 1, d, n]
                        else:
                            hprev = 0.0
                        ga = g * hprev * abar
                        ddelta[b, t, d] += ga * A[d, n]
                        dA[d, n] += ga * dt
                        gh[d, n] = g * abar
    return du_arr, ddelta_arr, dA_arr, dB_arr, dC_arr, dD_arr

# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: latent transitions, CES log-aggregate pieces, and
Gaussian mixture log-densities.  Mirrors ``numpy_backend``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p

cnp.import_array()

cdef double _LOG2PI = 1.8378770664093453


def translog_transition(double[::1] ln_th, double[::1] ln_i,
                        double a, double g1, double g2, double g3,
                        double[::1] eta):
    cdef Py_ssize_t n = ln_th.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef double[::1] o = out
    cdef Py_ssize_t j
    for j in range(n):
        o[j] = a + g1 * ln_th[j] + g2 * ln_i[j] + g3 * ln_th[j] * ln_i[j] + eta[j]
    return out


def ces_parts(double[::1] ln_th, double[::1] ln_i,
              double ln_g1, double ln_g2, double r_th, double r_i):
    cdef Py_ssize_t n = ln_th.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] L = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] share = np.empty(n)
    cdef double[::1] Lv = L
    cdef double[::1] sv = share
    cdef double w1, w2, d
    cdef Py_ssize_t j
    for j in range(n):
        w1 = ln_g1 + r_th * ln_th[j]
        w2 = ln_g2 + r_i * ln_i[j]
        if w1 >= w2:
            d = w2 - w1
            Lv[j] = w1 + log1p(exp(d))
        else:
            d = w1 - w2
            Lv[j] = w2 + log1p(exp(d))
        sv[j] = 1.0 / (1.0 + exp(w2 - w1))
    return L, share


def ces_transition(double[::1] ln_th, double[::1] ln_i,
                   double ln_g1, double ln_g2, double r_th, double r_i,
                   double outer, double[::1] eta):
    cdef Py_ssize_t n = ln_th.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef double[::1] o = out
    cdef double w1, w2, d, L
    cdef Py_ssize_t j
    for j in range(n):
        w1 = ln_g1 + r_th * ln_th[j]
        w2 = ln_g2 + r_i * ln_i[j]
        if w1 >= w2:
            L = w1 + log1p(exp(w2 - w1))
        else:
            L = w2 + log1p(exp(w1 - w2))
        o[j] = outer * L + eta[j]
    return out


def mixture_logpdf(double[:, ::1] y, double[:, ::1] means, double[:, :, ::1] chols):
    """Componentwise Gaussian log-densities via forward substitution."""
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t D = y.shape[1]
    cdef Py_ssize_t K = means.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, K))
    cdef double[:, ::1] o = out
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zbuf = np.empty(D)
    cdef double[::1] z = zbuf
    cdef double logdet, acc, quad
    cdef Py_ssize_t i, k, r, c
    for k in range(K):
        logdet = 0.0
        for r in range(D):
            logdet += log(chols[k, r, r])
        for i in range(n):
            quad = 0.0
            for r in range(D):
                acc = y[i, r] - means[k, r]
                for c in range(r):
                    acc -= chols[k, r, c] * z[c]
                z[r] = acc / chols[k, r, r]
                quad += z[r] * z[r]
            o[i, k] = -0.5 * quad - logdet - 0.5 * D * _LOG2PI
    return out

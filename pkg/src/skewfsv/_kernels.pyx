# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-series sampler kernels.

Twin of ``skewfsv._kernels_py``; see that module for the shared
conventions.  Keep the two implementations in lockstep: the test suite
checks them against each other on identical inputs.
"""

from libc.math cimport exp, isfinite, log, sqrt

import numpy as np

cdef double LOG_2PI = 1.8378770664093453


cdef inline double _meas_logdens_one(double* h, double* ytilde, double* z,
                                     double mu, double phi, double sigma,
                                     double rho, double beta, double c,
                                     int t, int t_last) nogil:
    cdef double etahat, mean, var, dev
    if t < t_last:
        etahat = (h[t + 1] - mu) - phi * (h[t] - mu)
        mean = (beta * (z[t] - c) + sqrt(z[t]) * rho * etahat / sigma) * exp(0.5 * h[t])
        var = z[t] * (1.0 - rho * rho) * exp(h[t])
    else:
        mean = beta * (z[t] - c) * exp(0.5 * h[t])
        var = z[t] * exp(h[t])
    dev = ytilde[t] - mean
    return -0.5 * (LOG_2PI + log(var) + dev * dev / var)


cdef double _meas_logdens_range(double* h, double* ytilde, double* z,
                                double mu, double phi, double sigma,
                                double rho, double beta, double c,
                                int t0, int t1, int t_last) nogil:
    cdef double total = 0.0
    cdef int t
    for t in range(t0, t1 + 1):
        total += _meas_logdens_one(h, ytilde, z, mu, phi, sigma, rho, beta, c, t, t_last)
    return total


def sv_loglik(double[::1] h, double[::1] ytilde, double[::1] z,
              double mu, double phi, double sigma, double rho,
              double beta, double c):
    cdef int t_len = h.shape[0]
    cdef int t_last = t_len - 1
    cdef double sig2 = sigma * sigma
    cdef double one_m_phi2 = 1.0 - phi * phi
    cdef double dev0 = h[0] - mu
    cdef double total = -0.5 * (LOG_2PI + log(sig2 / one_m_phi2)
                                + dev0 * dev0 * one_m_phi2 / sig2)
    cdef double resid
    cdef int t
    with nogil:
        for t in range(t_last):
            resid = (h[t + 1] - mu) - phi * (h[t] - mu)
            total += -0.5 * (LOG_2PI + log(sig2) + resid * resid / sig2)
        total += _meas_logdens_range(&h[0], &ytilde[0], &z[0], mu, phi, sigma,
                                     rho, beta, c, 0, t_last, t_last)
    return total


def hpath_block_update(double[::1] h, double[::1] ytilde, double[::1] z,
                       double mu, double phi, double sigma, double rho,
                       double beta, double c,
                       long[::1] bounds, double[::1] normals,
                       double[::1] log_u, double[::1] scratch):
    cdef int t_len = h.shape[0]
    cdef int n_blocks = bounds.shape[0] - 1
    cdef double sig2 = sigma * sigma
    cdef double[::1] phipow = np.empty(t_len + 1)
    cdef double[::1] s2 = np.empty(t_len + 1)
    cdef int m, j, a, b, t0, t1, t, accepted
    cdef double old, new, prec, lin, v, w
    with nogil:
        phipow[0] = 1.0
        s2[0] = 0.0
        for m in range(1, t_len + 1):
            phipow[m] = phipow[m - 1] * phi
            s2[m] = s2[m - 1] + phipow[m - 1] * phipow[m - 1]
        accepted = 0
        for j in range(n_blocks):
            a = <int>bounds[j]
            b = <int>bounds[j + 1]
            t0 = a - 1 if a > 0 else 0
            t1 = b - 1
            old = _meas_logdens_range(&h[0], &ytilde[0], &z[0], mu, phi, sigma,
                                      rho, beta, c, t0, t1, t_len - 1)
            for t in range(a, b):
                scratch[t] = h[t]
            for t in range(a, b):
                if t == 0:
                    prec = (1.0 - phi * phi) / sig2
                    lin = mu * prec
                else:
                    prec = 1.0 / sig2
                    lin = (mu + phi * (h[t - 1] - mu)) / sig2
                if b < t_len:
                    m = b - t
                    v = sig2 * s2[m]
                    w = phipow[m] / v
                    prec += phipow[m] * w
                    lin += w * (h[b] - mu) + phipow[m] * w * mu
                h[t] = lin / prec + normals[t] / sqrt(prec)
            new = _meas_logdens_range(&h[0], &ytilde[0], &z[0], mu, phi, sigma,
                                      rho, beta, c, t0, t1, t_len - 1)
            if isfinite(new) and log_u[j] < new - old:
                accepted += 1
            else:
                for t in range(a, b):
                    h[t] = scratch[t]
    return accepted

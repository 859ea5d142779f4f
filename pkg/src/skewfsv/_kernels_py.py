"""Pure-Python fallback for the hot per-series sampler kernels.

Mirrors the compiled module ``skewfsv._kernels`` function for function.
The compiled version is preferred at import time (see ``skewfsv.kernels``);
this module keeps the package fully functional without a C toolchain and
serves as the reference in the twin-equivalence tests.

Conventions shared by both implementations:

* arrays are contiguous float64, T = path length, index T-1 is the final
  observation which has no trailing volatility innovation;
* the measurement density of the pseudo-observation at time t conditions
  on the next-period log variance through the innovation
  etahat_t = (h[t+1] - mu) - phi (h[t] - mu), except at t = T-1 where the
  unconditional unit-variance shock applies;
* all random inputs (proposal normals, gamma draws, log-uniforms) are
  pre-drawn by the caller so kernels are deterministic functions.
"""

from __future__ import annotations

import math

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


def _meas_logdens_range(h, ytilde, z, mu, phi, sigma, rho, beta, c, t0, t1):
    """Sum of measurement log densities for t in the inclusive range [t0, t1]."""
    t_last = h.shape[0] - 1
    hi = min(t1, t_last - 1)
    total = 0.0
    if hi >= t0:
        sl = slice(t0, hi + 1)
        hseg = h[sl]
        zseg = z[sl]
        etahat = (h[t0 + 1:hi + 2] - mu) - phi * (hseg - mu)
        mean = (beta * (zseg - c) + np.sqrt(zseg) * rho * etahat / sigma) * np.exp(0.5 * hseg)
        var = zseg * (1.0 - rho * rho) * np.exp(hseg)
        dev = ytilde[sl] - mean
        total += float(np.sum(-0.5 * (LOG_2PI + np.log(var) + dev * dev / var)))
    if t1 >= t_last >= t0:
        mean = beta * (z[t_last] - c) * math.exp(0.5 * h[t_last])
        var = z[t_last] * math.exp(h[t_last])
        dev = ytilde[t_last] - mean
        total += -0.5 * (LOG_2PI + math.log(var) + dev * dev / var)
    return total


def sv_loglik(h, ytilde, z, mu, phi, sigma, rho, beta, c):
    """Joint log density of (h, ytilde) given the series parameters and z.

    Stationary start + AR(1) transitions + measurement terms.  Used as the
    likelihood factor in the Metropolis updates of the static parameters.
    """
    sig2 = sigma * sigma
    one_m_phi2 = 1.0 - phi * phi
    dev0 = h[0] - mu
    total = -0.5 * (LOG_2PI + math.log(sig2 / one_m_phi2) + dev0 * dev0 * one_m_phi2 / sig2)
    if h.shape[0] > 1:
        resid = (h[1:] - mu) - phi * (h[:-1] - mu)
        total += float(np.sum(-0.5 * (LOG_2PI + math.log(sig2) + resid * resid / sig2)))
    total += _meas_logdens_range(h, ytilde, z, mu, phi, sigma, rho, beta, c, 0, h.shape[0] - 1)
    return total


def hpath_block_update(h, ytilde, z, mu, phi, sigma, rho, beta, c,
                       bounds, normals, log_u, scratch):
    """One sweep of block Metropolis updates of the log-variance path.

    Blocks are the half-open index ranges [bounds[j], bounds[j+1]).  Each
    block is proposed from the AR(1) prior conditioned on the fixed values
    just outside it (a Gaussian bridge), so the acceptance ratio reduces to
    the measurement terms touched by the block.  ``h`` is updated in place;
    returns the number of accepted blocks.
    """
    t_len = h.shape[0]
    sig2 = sigma * sigma
    phipow = np.empty(t_len + 1)
    s2 = np.empty(t_len + 1)
    phipow[0] = 1.0
    s2[0] = 0.0
    for m in range(1, t_len + 1):
        phipow[m] = phipow[m - 1] * phi
        s2[m] = s2[m - 1] + phipow[m - 1] * phipow[m - 1]
    accepted = 0
    n_blocks = bounds.shape[0] - 1
    for j in range(n_blocks):
        a = int(bounds[j])
        b = int(bounds[j + 1])
        t0 = a - 1 if a > 0 else 0
        t1 = b - 1
        old = _meas_logdens_range(h, ytilde, z, mu, phi, sigma, rho, beta, c, t0, t1)
        scratch[a:b] = h[a:b]
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
            h[t] = lin / prec + normals[t] / math.sqrt(prec)
        new = _meas_logdens_range(h, ytilde, z, mu, phi, sigma, rho, beta, c, t0, t1)
        if math.isfinite(new) and log_u[j] < new - old:
            accepted += 1
        else:
            h[a:b] = scratch[a:b]
    return accepted

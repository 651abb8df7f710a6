# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical kernels. See ``_kernels_py`` for the reference versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, lgamma, fabs, sqrt, cos, sin, M_PI

cnp.import_array()

cdef double _RESCALE = 1e150


def fc_matrix(double S, long n_max):
    cdef long size = n_max + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] F = np.zeros((size, size))
    cdef long a, k
    cdef double prev, cur, nxt, log_scale, log_s, log_f, lc, val, log_rescale
    if S == 0.0:
        for k in range(size):
            F[k, k] = 1.0
        return F
    log_s = log(S)
    log_rescale = log(_RESCALE)
    for a in range(size):
        prev = 0.0
        cur = 1.0
        log_scale = 0.0
        for k in range(size - a):
            if k == 1:
                prev = cur
                cur = 1.0 + a - S
            elif k > 1:
                nxt = ((2 * k - 1 + a - S) * cur - (k - 1 + a) * prev) / k
                prev = cur
                cur = nxt
            if fabs(cur) > _RESCALE:
                cur /= _RESCALE
                prev /= _RESCALE
                log_scale += log_rescale
            lc = fabs(cur)
            if lc > 0.0:
                log_f = (-S + a * log_s + lgamma(k + 1.0) - lgamma(k + a + 1.0)
                         + 2.0 * (log(lc) + log_scale))
                val = exp(log_f)
            else:
                val = 0.0
            F[k + a, k] = val
            F[k, k + a] = val
    return F


def render_lines(grid, centers, weights, fwhms, kind):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c = np.ascontiguousarray(centers, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] f = np.ascontiguousarray(fwhms, dtype=np.float64)
    cdef long n = g.shape[0], m = c.shape[0], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n)
    cdef double s, x, norm, hw, k
    if kind == "gaussian":
        k = 2.0 * sqrt(2.0 * log(2.0))
        for j in range(m):
            s = f[j] / k
            norm = w[j] / (s * sqrt(2.0 * M_PI))
            for i in range(n):
                x = (g[i] - c[j]) / s
                # exp underflows to exactly 0 past this point
                if x * x < 1490.0:
                    out[i] += norm * exp(-0.5 * x * x)
    elif kind == "lorentzian":
        for j in range(m):
            hw = f[j] / 2.0
            for i in range(n):
                x = g[i] - c[j]
                out[i] += w[j] * (hw / M_PI) / (x * x + hw * hw)
    else:
        raise ValueError(f"unknown lineshape {kind!r}")
    return out


def cos2_moments(angles_deg, counts, weights):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ang = np.ascontiguousarray(angles_deg, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] y = np.ascontiguousarray(counts, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] wt = np.ascontiguousarray(weights, dtype=np.float64)
    cdef long na = y.shape[0], nb = y.shape[1], a, b, i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=3] xtwx = np.zeros((nb, 3, 3))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] xtwy = np.zeros((nb, 3))
    cdef double basis[3]
    cdef double t, ww
    for a in range(na):
        t = 2.0 * ang[a] * M_PI / 180.0
        basis[0] = 1.0
        basis[1] = cos(t)
        basis[2] = sin(t)
        for b in range(nb):
            ww = wt[a, b]
            for i in range(3):
                xtwy[b, i] += basis[i] * ww * y[a, b]
                for j in range(3):
                    xtwx[b, i, j] += basis[i] * basis[j] * ww
    return xtwx, xtwy

"""Pure numpy implementations of the numerical kernels.

These mirror the compiled versions in ``_ckernels.pyx`` and are used when the
extension is unavailable or ``DEFECTSPEC_PURE_PYTHON`` is set.
"""
import numpy as np
from scipy.special import gammaln

_RESCALE = 1e150
_LOG_RESCALE = np.log(_RESCALE)


def fc_matrix(S, n_max):
    """Franck-Condon table ``F[n, n_star]`` for ``0 <= n, n_star <= n_max``.

    For each offset ``alpha = |n - n_star|`` the associated Laguerre
    polynomials ``L_k^alpha(S)`` are generated by upward recurrence in the
    degree ``k``; all offsets advance together as one vector.
    """
    n_max = int(n_max)
    size = n_max + 1
    F = np.zeros((size, size))
    if S == 0.0:
        np.fill_diagonal(F, 1.0)
        return F

    alpha = np.arange(size, dtype=float)
    log_s = np.log(S)
    prev = np.zeros(size)
    cur = np.ones(size)
    log_scale = np.zeros(size)
    for k in range(size):
        if k == 1:
            prev = cur
            cur = 1.0 + alpha - S
        elif k > 1:
            nxt = ((2 * k - 1 + alpha - S) * cur - (k - 1 + alpha) * prev) / k
            prev = cur
            cur = nxt
        big = np.abs(cur) > _RESCALE
        if big.any():
            cur = np.where(big, cur / _RESCALE, cur)
            prev = np.where(big, prev / _RESCALE, prev)
            log_scale = log_scale + big * _LOG_RESCALE
        # offsets still inside the table at this degree
        na = size - k
        a = alpha[:na]
        lc = np.abs(cur[:na])
        with np.errstate(divide="ignore"):
            log_l = np.log(lc) + log_scale[:na]
        log_f = -S + a * log_s + gammaln(k + 1) - gammaln(k + a + 1) + 2 * log_l
        vals = np.where(lc > 0, np.exp(log_f), 0.0)
        rows = k + np.arange(na)
        F[rows, k] = vals
        F[k, rows] = vals
    return F


def render_lines(grid, centers, weights, fwhms, kind):
    """Sum of unit-area lines evaluated on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    out = np.zeros_like(grid)
    if kind == "gaussian":
        sig = np.asarray(fwhms) / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        for c, w, s in zip(centers, weights, sig):
            x = (grid - c) / s
            out += w * np.exp(-0.5 * x * x) / (s * np.sqrt(2.0 * np.pi))
    elif kind == "lorentzian":
        hw = np.asarray(fwhms) / 2.0
        for c, w, g in zip(centers, weights, hw):
            x = grid - c
            out += w * (g / np.pi) / (x * x + g * g)
    else:
        raise ValueError(f"unknown lineshape {kind!r}")
    return out


def cos2_moments(angles_deg, counts, weights):
    """Weighted normal equations of the double-angle basis, one per column.

    ``counts`` and ``weights`` have shape ``(n_angles, n_bins)``. Returns
    ``(XtWX, XtWy)`` with shapes ``(n_bins, 3, 3)`` and ``(n_bins, 3)``.
    """
    t = np.deg2rad(2.0 * np.asarray(angles_deg, dtype=float))
    X = np.stack([np.ones_like(t), np.cos(t), np.sin(t)], axis=1)
    counts = np.asarray(counts, dtype=float)
    weights = np.asarray(weights, dtype=float)
    xtwx = np.einsum("ai,aj,ab->bij", X, X, weights)
    xtwy = np.einsum("ai,ab->bi", X, weights * counts)
    return xtwx, xtwy

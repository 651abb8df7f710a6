"""Photon-statistics fits: antibunching dip and excited-state lifetime."""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import least_squares

from .errors import DomainError, FitError

MAX_ITERATIONS = 200


@dataclass(frozen=True)
class CorrelationTrace:
    """Normalized coincidences ``g2`` on a delay grid in ns (optional 1-sigma errors)."""

    tau_ns: np.ndarray = field(repr=False)
    g2: np.ndarray = field(repr=False)
    g2_err: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        tau = np.asarray(self.tau_ns, dtype=float)
        g2 = np.asarray(self.g2, dtype=float)
        if tau.shape != g2.shape or tau.ndim != 1:
            raise DomainError("tau and g2 must be 1-D arrays of equal length")
        if np.any(g2 < 0):
            raise DomainError("g2 values must be non-negative")
        object.__setattr__(self, "tau_ns", tau)
        object.__setattr__(self, "g2", g2)
        if self.g2_err is not None:
            err = np.asarray(self.g2_err, dtype=float)
            if err.shape != g2.shape or np.any(err <= 0):
                raise DomainError("g2 errors must be positive and match g2")
            object.__setattr__(self, "g2_err", err)


@dataclass(frozen=True)
class DecayHistogram:
    time_ns: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.time_ns, dtype=float)
        c = np.asarray(self.counts, dtype=float)
        if t.shape != c.shape or t.ndim != 1:
            raise DomainError("time and counts must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise DomainError("time grid must be increasing")
        if np.any(c < 0):
            raise DomainError("counts must be non-negative")
        object.__setattr__(self, "time_ns", t)
        object.__setattr__(self, "counts", c)


@dataclass(frozen=True)
class G2Fit:
    dip_depth: float
    dip_depth_err: float
    correlation_time_ns: float
    correlation_time_err_ns: float
    g2_zero: float
    g2_zero_err: float
    background: float
    background_err: float
    chi2_red: float
    iterations: int

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class LifetimeFit:
    tau_ns: float
    tau_err_ns: float
    amplitude: float
    amplitude_err: float
    background: float
    fit_start_ns: float
    chi2_red: float

    def to_dict(self):
        return dict(self.__dict__)


def g2_model(tau_ns, dip_depth, correlation_time_ns, background=1.0):
    """``background * (1 - a exp(-|tau| / tau_c))``."""
    return background * (1.0 - dip_depth * np.exp(-np.abs(tau_ns) / correlation_time_ns))


def _covariance(jac, chi2_red, absolute):
    jtj = jac.T @ jac
    cov = np.linalg.pinv(jtj)
    return cov if absolute else cov * chi2_red


def fit_g2(trace):
    """Fit ``g2(tau) = c (1 - a exp(-|tau|/tau_c))`` by Levenberg-Marquardt.

    ``c`` absorbs the long-delay normalization and is reported as
    ``background``; ``g2_zero = 1 - a`` is the normalized value at zero delay.
    """
    tau, g = trace.tau_ns, trace.g2
    if len(tau) < 20:
        raise DomainError("g2 fitting needs at least 20 points")
    sigma = trace.g2_err if trace.g2_err is not None else np.ones_like(g)
    far = np.abs(tau) >= 0.5 * np.max(np.abs(tau))
    c0 = float(np.mean(g[far])) if np.any(far) else float(np.max(g))
    if c0 <= 0:
        raise FitError("trace has no long-delay signal", {"c0": c0})
    a0 = float(np.clip(1.0 - np.min(g) / c0, 0.0, 1.0))
    step = float(np.min(np.diff(np.sort(tau))))
    # dip half-width at half depth; exp(-t/tau_c) = 1/2 at t = tau_c ln 2
    inside = np.abs(tau)[g < c0 * (1.0 - 0.5 * a0)]
    tc0 = float(np.max(inside)) / math.log(2.0) if a0 > 0 and len(inside) else step
    tc0 = max(tc0, step)

    def resid(p):
        return (g2_model(tau, p[0], p[1], p[2]) - g) / sigma

    def jac(p):
        a, tc, c = p
        e = np.exp(-np.abs(tau) / tc)
        return np.column_stack([
            -c * e,
            -c * a * e * np.abs(tau) / tc ** 2,
            1.0 - a * e,
        ]) / sigma[:, None]

    res = least_squares(resid, [a0, tc0, c0], jac=jac, method="lm", max_nfev=MAX_ITERATIONS,
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if res.status <= 0:
        raise FitError("g2 fit did not converge",
                       {"message": res.message, "nfev": int(res.nfev), "x": res.x.tolist(),
                        "init": [a0, tc0, c0]})
    a, tc, c = res.x
    tc = abs(tc)
    dof = max(len(g) - 3, 1)
    chi2_red = float(np.sum(res.fun ** 2) / dof)
    cov = _covariance(res.jac, chi2_red, trace.g2_err is not None)
    err = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return G2Fit(
        dip_depth=float(a), dip_depth_err=float(err[0]),
        correlation_time_ns=float(tc), correlation_time_err_ns=float(err[1]),
        g2_zero=float(1.0 - a), g2_zero_err=float(err[0]),
        background=float(c), background_err=float(err[2]),
        chi2_red=chi2_red, iterations=int(res.nfev),
    )


def is_single_emitter(g2_zero, uncertainty):
    """Classify against the 0.5 threshold with a two-sigma band."""
    if g2_zero + 2.0 * uncertainty < 0.5:
        return "single"
    if g2_zero - 2.0 * uncertainty > 0.5:
        return "not_single"
    return "inconclusive"


def fit_lifetime(hist, background_window, skip_ns=1.0):
    """Mono-exponential tail fit ``A exp(-(t - t_peak)/tau) + bg``.

    ``bg`` is the mean count in ``background_window = (t0, t1)`` and is held
    fixed. The fit starts ``skip_ns`` after the histogram maximum, which keeps
    the excitation pulse out of the tail. Two passes are made: the first
    weights by observed counts, the second by the first-pass model.
    """
    t, y = hist.time_ns, hist.counts
    t0, t1 = map(float, background_window)
    if not t1 > t0:
        raise DomainError("background window must have t1 > t0")
    in_bg = (t >= t0) & (t <= t1)
    if not np.any(in_bg):
        raise DomainError("background window contains no bins")
    bg = float(np.mean(y[in_bg]))
    i_peak = int(np.argmax(y))
    t_peak = float(t[i_peak])
    start = t_peak + skip_ns
    if t1 < start:
        sel = t >= start
    elif t0 > start:
        sel = (t >= start) & (t < t0)
    else:
        raise DomainError("background window overlaps the decay window")
    if np.count_nonzero(sel) < 30:
        raise DomainError("lifetime fitting needs at least 30 bins past the pulse")
    ts = t[sel] - t_peak
    ys = y[sel]
    net = ys - bg
    pos = net > 0
    if np.count_nonzero(pos) < 3:
        raise FitError("no decay signal above background", {"background": bg})
    slope, icpt = np.polyfit(ts[pos], np.log(net[pos]), 1, w=np.sqrt(net[pos]))
    if slope >= 0:
        raise FitError("tail is not decaying", {"log_slope_per_ns": float(slope)})
    p0 = [math.exp(icpt), -1.0 / slope]

    def run(p_init, var):
        sig = np.sqrt(np.maximum(var, 1.0))

        def resid(p):
            return (p[0] * np.exp(-ts / p[1]) + bg - ys) / sig

        def jac(p):
            e = np.exp(-ts / p[1])
            return np.column_stack([e, p[0] * e * ts / p[1] ** 2]) / sig[:, None]

        return least_squares(resid, p_init, jac=jac, method="lm", max_nfev=MAX_ITERATIONS,
                             xtol=1e-14, ftol=1e-14, gtol=1e-14)

    res = run(p0, ys)
    model = res.x[0] * np.exp(-ts / res.x[1]) + bg
    res = run(res.x, model)
    amp, tau = res.x
    if res.status <= 0 or not (tau > 0 and amp > 0):
        raise FitError("lifetime fit failed",
                       {"message": res.message, "x": res.x.tolist(), "nfev": int(res.nfev)})
    dof = max(len(ys) - 2, 1)
    chi2_red = float(np.sum(res.fun ** 2) / dof)
    cov = _covariance(res.jac, chi2_red, True)
    err = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return LifetimeFit(tau_ns=float(tau), tau_err_ns=float(err[1]), amplitude=float(amp),
                       amplitude_err=float(err[0]), background=bg, fit_start_ns=start,
                       chi2_red=chi2_red)

"""Plateau-subtracted exponential fits of autocorrelation series."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

IDENTICALLY_ZERO = "identically-zero"
CONSTANT = "constant-plateau"
EXPONENTIAL = "exponential-decay"
OTHER = "other"
CLASSES = (IDENTICALLY_ZERO, CONSTANT, EXPONENTIAL, OTHER)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    plateau: float
    t_min: int
    t_max: int
    residual: float
    classification: str
    degenerate: bool
    intercept: float = float("nan")
    sign: float = 1.0

    def to_json_dict(self):
        return {
            "rate": self.rate,
            "plateau": self.plateau,
            "window": [self.t_min, self.t_max],
            "residual": self.residual,
            "class": self.classification,
            "degenerate": self.degenerate,
        }


class ExponentialDecayFit(BaseEstimator):
    """Fit ``|C(t) - plateau| ~ A exp(-rate t)`` on a log scale.

    The plateau is the median of the last quarter of the series, accepted
    only when that tail is flat to ``flat_rtol``; otherwise the series is
    taken to be still decaying and the plateau is zero. The fit window starts
    at ``t_min`` and runs while the excess over the plateau stays above the
    noise level of the tail.

    Parameters
    ----------
    t_min, t_max : int or None
        Bounds of the fit window (inclusive), in units of the series index.
    zero_tol : float
        ``max_{t>=1} |C|`` below this classifies the series as identically zero.
    const_tol, const_floor : float
        Constant if ``|C(T) - C(T/2)| < const_tol`` and ``|C(T)| > const_floor``.
    max_residual : float
        RMS log-residual below which the decay is called exponential.
    plateau : float or None
        Known long-time value to subtract instead of estimating it from the tail.
    """

    def __init__(self, t_min=1, t_max=None, zero_tol=1e-12, const_tol=1e-10, const_floor=1e-8,
                 max_residual=0.1, flat_rtol=1e-3, noise_floor=1e-13, plateau=None):
        self.t_min = t_min
        self.t_max = t_max
        self.zero_tol = zero_tol
        self.const_tol = const_tol
        self.const_floor = const_floor
        self.max_residual = max_residual
        self.flat_rtol = flat_rtol
        self.noise_floor = noise_floor
        self.plateau = plateau

    def fit(self, series, t=None):
        y = np.asarray(series, dtype=float)
        if y.ndim != 1 or y.size < 2:
            raise ValueError("series must be a 1-d array with at least two entries")
        t = np.arange(y.size) if t is None else np.asarray(t, dtype=float)
        self.result_ = self._fit(y, t)
        return self

    def _fit(self, y, t):
        n = y.size
        last = int(t[-1])
        if np.abs(y[t >= 1]).max() < self.zero_tol:
            return DecayFit(np.inf, 0.0, 1, last, 0.0, IDENTICALLY_ZERO, True)
        half = y[np.searchsorted(t, t[-1] / 2)]
        if abs(y[-1] - half) < self.const_tol and abs(y[-1]) > self.const_floor:
            return DecayFit(0.0, float(y[-1]), int(t[0]), last, 0.0, CONSTANT, True)

        if self.plateau is not None:
            plateau, spread = float(self.plateau), 0.0
        else:
            tail = y[n - max(1, n // 4):]
            plateau = float(np.median(tail))
            spread = float(np.ptp(tail))
            # a tail still moving, or lost in round-off, means no plateau
            if spread > self.flat_rtol * abs(plateau) + self.noise_floor or abs(plateau) <= self.noise_floor:
                plateau, spread = 0.0, 0.0
        excess = y - plateau
        floor = max(self.noise_floor, 10.0 * spread)

        t_hi = t[-1] if self.t_max is None else self.t_max
        idx = []
        for k in np.flatnonzero((t >= self.t_min) & (t <= t_hi)):
            if abs(excess[k]) <= floor:
                break
            idx.append(k)
        if len(idx) < 4:
            return DecayFit(np.nan, plateau, int(self.t_min), int(t_hi), np.inf, OTHER, True)
        idx = np.array(idx)
        tw, lw = t[idx], np.log(np.abs(excess[idx]))
        slope, intercept = np.polyfit(tw, lw, 1)
        resid = float(np.sqrt(np.mean((lw - (slope * tw + intercept)) ** 2)))
        cls = EXPONENTIAL if resid < self.max_residual and slope < 0 else OTHER
        sign = float(np.sign(excess[idx[0]]))
        return DecayFit(float(-slope), plateau, int(tw[0]), int(tw[-1]), resid, cls, False,
                        float(intercept), sign)

    def predict(self, t):
        if not hasattr(self, "result_"):
            raise NotFittedError("call fit before predict")
        r = self.result_
        t = np.asarray(t, dtype=float)
        if r.degenerate:
            return np.full(t.shape, r.plateau)
        return r.plateau + r.sign * np.exp(r.intercept - r.rate * t)


def fit_decay(series, **params):
    """Functional shortcut returning the :class:`DecayFit` record."""
    return ExponentialDecayFit(**params).fit(series).result_

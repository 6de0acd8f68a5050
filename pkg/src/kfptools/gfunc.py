"""The convex logarithmic cutoff G with G'' >= (G')^2.

Construction: mollify the step h0 = -1 on (-inf,1], 0 after, into a smooth
h with integral -1 over [0,2]; set f(t) = int_0^t h, g = -ln(-f), and
G(t) = g(2t).  Then

    G(t) = -ln(2t)  on (0, (1-width)/2],   G = 0 on [(1+width)/2, inf),

and in between everything is carried by closed-form relations on a fine
table: h' (t) = rho_width(t - 1) exactly, g' = -h/f, g'' = g'^2 - h'/f.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import PropertyViolated, WidthOutOfRange
from .report import make_report

_TABLE_STEP = 1e-4


def _bump(u):
    """Standard compact bump on (-1,1), unnormalized."""
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


@dataclass(frozen=True)
class GFunction:
    width: float
    t_lo: float        # closed form -ln(2t) on (0, t_lo]
    t_hi: float        # identically zero on [t_hi, inf)
    _g: object         # spline of g on the transition (arguments are 2t)
    _gp: object
    _gpp: object

    def g_value(self, u):
        """g(u) on (0, inf): -ln u below, spline through the transition, 0 after."""
        u = np.asarray(u, float)
        out = np.zeros_like(u)
        lo = u <= 2 * self.t_lo
        mid = (u > 2 * self.t_lo) & (u < 2 * self.t_hi)
        out[lo] = -np.log(u[lo])
        out[mid] = np.maximum(self._g(u[mid]), 0.0)
        return out

    def value(self, t):
        t = np.asarray(t, float)
        return self.g_value(2.0 * t)

    def deriv(self, t):
        t = np.asarray(t, float)
        out = np.zeros_like(t)
        lo = t <= self.t_lo
        mid = (t > self.t_lo) & (t < self.t_hi)
        out[lo] = -1.0 / t[lo]
        out[mid] = np.minimum(2.0 * self._gp(2.0 * t[mid]), 0.0)
        return out

    def second_deriv(self, t):
        t = np.asarray(t, float)
        out = np.zeros_like(t)
        lo = t <= self.t_lo
        mid = (t > self.t_lo) & (t < self.t_hi)
        # closed form 1/t^2 saturates G'' = (G')^2; write it as the literal
        # square of G' so the inequality holds bitwise at any magnitude
        out[lo] = (-1.0 / t[lo]) ** 2
        out[mid] = np.maximum(4.0 * self._gpp(2.0 * t[mid]), 0.0)
        return out

    def __call__(self, t):
        return self.value(t)

    def table(self, ts):
        """Rows (t, G, G', G'') for CSV dumps."""
        ts = np.asarray(ts, float)
        return np.column_stack([ts, self.value(ts), self.deriv(ts),
                                self.second_deriv(ts)])


def build_g(mollify_width=0.125):
    """Construct G for a mollification width in (0, 1/4]."""
    w = float(mollify_width)
    if not 0.0 < w <= 0.25:
        raise WidthOutOfRange(f"width {w!r} outside (0, 1/4]")

    # mollifier CDF table on [-1, 1]
    n_cdf = 20001
    uu = np.linspace(-1.0, 1.0, n_cdf)
    pdf = _bump(uu)
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * (uu[1] - uu[0]))])
    cdf /= cdf[-1]

    def step_cdf(t, center):
        # h(t) = -1 + CDF((t - center)/w)
        u = np.clip((np.asarray(t, float) - center) / w, -1.0, 1.0)
        return -1.0 + np.interp(u, uu, cdf)

    # one Newton step recenters the transition so that int_0^2 h = -1 exactly
    # (d/dc int h = -1 for the translated profile)
    tt = np.arange(0.0, 2.0 + _TABLE_STEP, _TABLE_STEP)
    center = 1.0
    for _ in range(3):
        hv = step_cdf(tt, center)
        I = np.trapezoid(hv, tt)
        center -= (I + 1.0)
        if abs(I + 1.0) < 1e-15:
            break

    lo = center - w   # h = -1 up to here, so f(t) = -t and g = -ln t
    hi = center + w   # h = 0 from here, so f = -1 and g = 0

    # transition table for g on u in [lo, hi]
    us = np.arange(lo, hi + _TABLE_STEP, _TABLE_STEP)
    hs = step_cdf(us, center)
    bump_mass = np.trapezoid(_bump(uu), uu)
    hps = _bump((us - center) / w) / (w * bump_mass)   # h' = rho_w(t - center)
    # f(u) = -lo + int_lo^u h  (f(lo) = -lo exactly)
    fs = -lo + np.concatenate([[0.0], np.cumsum((hs[1:] + hs[:-1]) * 0.5 * np.diff(us))])
    fs = np.minimum(fs, -1e-300)
    gs = -np.log(-fs)
    gs -= gs[-1]       # pin g(hi) = 0 exactly (removes ~1e-9 quadrature drift)
    gps = -hs / fs
    gpps = gps ** 2 - hps / fs

    g_spline = CubicSpline(us, gs)
    gp_spline = CubicSpline(us, gps)
    gpp_spline = CubicSpline(us, gpps)
    return GFunction(width=w, t_lo=lo / 2.0, t_hi=hi / 2.0,
                     _g=g_spline, _gp=gp_spline, _gpp=gpp_spline)


def verify_g_properties(G, grid=None, slack=1e-8):
    """Check the four defining properties on a sample grid in (0, 4].

    (1) G'' >= (G')^2 - slack; (2) G = 0 on [1, 4]; (3) G(t) ~ -ln t as
    t -> 0+, verified in the convergence-faithful form
    |G(t) + ln t| <= ln 2 + slack (the deviation of the ratio from 1 is then
    at most (ln 2 + slack)/(-ln t) -> 0); (4) 0 <= -G'(t) <= 1/t + 1e-10 on
    (0, 1/4].  Raises PropertyViolated(index, witness) on failure.
    """
    if grid is None:
        grid = np.logspace(-6, math.log10(4.0), 4000)
    grid = np.asarray(grid, float)

    v = G.value(grid)
    d1 = G.deriv(grid)
    d2 = G.second_deriv(grid)

    bad = d2 < d1 ** 2 - slack
    if bad.any():
        raise PropertyViolated(1, float(grid[bad][0]))
    on_tail = grid >= 1.0
    if np.any(np.abs(v[on_tail]) > 0.0):
        raise PropertyViolated(2, float(grid[on_tail][np.abs(v[on_tail]) > 0][0]))
    small = grid <= 0.25
    dev = np.abs(v[small] + np.log(grid[small]))
    if np.any(dev > math.log(2.0) + slack):
        raise PropertyViolated(3, float(grid[small][dev > math.log(2.0) + slack][0]))
    neg = -d1[small]
    bad4 = (neg < -1e-10) | (neg > 1.0 / grid[small] + 1e-10)
    if bad4.any():
        raise PropertyViolated(4, float(grid[small][bad4][0]))

    t_ref = float(grid[0])
    ratio = float(G.value(np.array([t_ref]))[0] / (-math.log(t_ref)))
    return make_report("g_function_properties", lhs=float(np.max(d1 ** 2 - d2)),
                       rhs=slack, passed=True,
                       ratio_at_smallest=ratio, t_smallest=t_ref,
                       ratio_deviation=abs(ratio - 1.0),
                       log_offset_bound=math.log(2.0),
                       n_grid=int(grid.size))


def composed_convexity_gap(G, gamma, h, ts):
    """min over ts of w'' - gamma^2 (w')^2 for w(t) = G(gamma t + h).

    With w' = gamma G' and w'' = gamma^2 G'', the gap equals
    gamma^2 (G'' - (G')^2) and inherits nonnegativity from G pointwise.
    """
    u = gamma * np.asarray(ts, float) + h
    d1 = G.deriv(u)
    d2 = G.second_deriv(u)
    return float(gamma ** 2 * np.min(d2 - d1 ** 2))

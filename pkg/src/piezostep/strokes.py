"""Offline optimization of reference stroke bounds.

With a rate- or direction-dependent gain model the inverse control law
produces voltage waveforms whose cycle mean drifts. The anti-windup bounds
arrest that drift only when the waveform reaches them, so the stroke spans
are sized per drive frequency to make the steady-cycle voltage extrema
touch the bounds, and the results are tabulated against frequency.

The per-element objective simulates the saturated law alone over two
periods, scores the second (transient-free) period's extrema against the
bounds, and therefore decreases monotonically in the span until the
waveform touches both bounds, staying exactly zero beyond. A quasi-Newton
descent approaches that kink and a bisection pins it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .controller import ELEMENTS, RATE_DEADBAND, AbsementTracker, select_direction_model
from .waveforms import TWO_PI, BREAKPOINTS, element_rate, wrap_angle

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:                                   # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap(args[0]) if args and callable(args[0]) else wrap

# Internal stroke unit during optimization; keeps gradients O(1).
_UM = 1e-6
_J_ZERO = 1e-24


class StrokeOptimizationError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass
class StrokeLUT:
    """Optimal stroke bounds tabulated over the positive frequency grid."""

    frequencies: np.ndarray
    stroke_min: dict                  # element -> array aligned with frequencies
    stroke_max: dict

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("frequency axis must be strictly increasing")
        for e in ELEMENTS:
            lo = np.asarray(self.stroke_min[e], dtype=float)
            hi = np.asarray(self.stroke_max[e], dtype=float)
            if np.any(hi <= lo) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise ValueError(f"{e}: invalid stroke entries")
            self.stroke_min[e] = lo
            self.stroke_max[e] = hi

    def lookup(self, element, f_alpha):
        """Linear interpolation in |f|; clamps outside the tabulated range."""
        f = abs(f_alpha)
        lo = float(np.interp(f, self.frequencies, self.stroke_min[element]))
        hi = float(np.interp(f, self.frequencies, self.stroke_max[element]))
        return lo, hi

    def spec_at(self, f_alpha):
        from .waveforms import WaveformSpec

        mins, maxs = {}, {}
        for e in ELEMENTS:
            mins[e], maxs[e] = self.lookup(e, f_alpha)
        return WaveformSpec(mins, maxs)


def _segment_rates(element, f_alpha, span):
    """Reference rate on each of the five angle segments."""
    edges = np.asarray(list(BREAKPOINTS) + [TWO_PI])
    mids = 0.5 * (edges[:-1] + edges[1:])
    return edges, np.array([element_rate(element, a, f_alpha, span) for a in mids])


@njit(cache=True)
def _voltage_recursion(n, ts, dalpha, edges, seg_rates, rate_axis_p, ua_axis_p, val_p,
                       rate_axis_m, ua_axis_m, val_m, floor_p, floor_m,
                       u_min, u_max, clamp):
    u = np.empty(n)
    u1 = 0.0
    u2 = 0.0
    ref = 0.0
    sign = 1
    absement = 0.0
    alpha = 0.0
    for k in range(n):
        seg = 0
        for j in range(5):
            if alpha >= edges[j] and alpha < edges[j + 1]:
                seg = j
                break
        r = seg_rates[seg]
        rate_hist = abs(u1 - u2) / ts
        if r >= 0.0:
            rate_axis, ua_axis, val, floor = rate_axis_p, ua_axis_p, val_p, floor_p
        else:
            rate_axis, ua_axis, val, floor = rate_axis_m, ua_axis_m, val_m, floor_m
        # bilinear lookup with edge clamping
        x = rate_hist
        if x < rate_axis[0]:
            x = rate_axis[0]
        elif x > rate_axis[-1]:
            x = rate_axis[-1]
        y = absement
        if y < ua_axis[0]:
            y = ua_axis[0]
        elif y > ua_axis[-1]:
            y = ua_axis[-1]
        i = np.searchsorted(rate_axis, x) - 1
        if i < 0:
            i = 0
        elif i > len(rate_axis) - 2:
            i = len(rate_axis) - 2
        j2 = np.searchsorted(ua_axis, y) - 1
        if j2 < 0:
            j2 = 0
        elif j2 > len(ua_axis) - 2:
            j2 = len(ua_axis) - 2
        t1 = (x - rate_axis[i]) / (rate_axis[i + 1] - rate_axis[i])
        t2 = (y - ua_axis[j2]) / (ua_axis[j2 + 1] - ua_axis[j2])
        g = ((1 - t1) * ((1 - t2) * val[i, j2] + t2 * val[i, j2 + 1])
             + t1 * ((1 - t2) * val[i + 1, j2] + t2 * val[i + 1, j2 + 1]))
        if g < floor:
            g = floor
        v = u1 + ts * r / g
        if clamp:
            if v < u_min:
                v = u_min
            elif v > u_max:
                v = u_max
        # absement recursion (same deadband rule as the controller)
        du = v - u1
        if du > RATE_DEADBAND:
            s = 1
        elif du < -RATE_DEADBAND:
            s = -1
        else:
            s = sign
        if s != sign:
            ref = u1
        absement = abs(v - ref)
        sign = s
        u2 = u1
        u1 = v
        u[k] = v
        alpha += dalpha
        if alpha >= TWO_PI:
            alpha -= TWO_PI
        elif alpha < 0.0:
            alpha += TWO_PI
    return u


def _model_tables(pair):
    """(rate_axis, ua_axis, values, floor) per direction, or None if not tabular."""
    out = []
    for d in ("+", "-"):
        h = pair[d]
        if hasattr(h, "table"):
            t = h.table
            out.append((t.rate_axis, t.absement_axis, t.values, 1e-3 * h.median_gain))
        elif hasattr(h, "value"):
            c = h.value
            axes = np.array([0.0, 1e18])
            out.append((axes, axes, np.full((2, 2), c), 1e-3 * c))
        else:
            return None
    return out


def simulate_element_voltage(element, f_alpha, span, models, bounds, sample_rate,
                             n_periods=2, clamp=True):
    """Voltage trajectory of one element under the control law alone.

    No plant is involved: the recursion starts from zero voltage and zero
    angle and runs ``n_periods`` full cycles. ``models`` is the direction
    pair for this element, ``bounds`` the (u_min, u_max) anti-windup pair.
    Tabular and constant models run through a compiled kernel; other
    handles fall back to a generic Python loop with identical semantics.
    """
    if f_alpha == 0.0:
        raise ValueError("drive frequency must be nonzero")
    ts = 1.0 / sample_rate
    n = n_periods * int(math.floor(sample_rate / abs(f_alpha)))
    edges, seg_rates = _segment_rates(element, f_alpha, span)
    tables = _model_tables(models) if _HAVE_NUMBA else None
    if tables is not None:
        (rp, ap, vp, fp), (rm, am, vm, fm) = tables
        return _voltage_recursion(
            n, ts, TWO_PI * f_alpha * ts, edges, seg_rates,
            np.ascontiguousarray(rp), np.ascontiguousarray(ap), np.ascontiguousarray(vp),
            np.ascontiguousarray(rm), np.ascontiguousarray(am), np.ascontiguousarray(vm),
            fp, fm, bounds[0], bounds[1], clamp,
        )
    return _voltage_recursion_python(n, ts, f_alpha, edges, seg_rates, models,
                                     bounds, clamp)


def _voltage_recursion_python(n, ts, f_alpha, edges, seg_rates, models, bounds, clamp):
    u = np.empty(n)
    u1 = 0.0
    u2 = 0.0
    tracker = AbsementTracker()
    u_min, u_max = bounds
    alpha = 0.0
    dalpha = TWO_PI * f_alpha * ts
    for k in range(n):
        seg = int(np.searchsorted(edges, alpha, side="right")) - 1
        r = seg_rates[min(max(seg, 0), 4)]
        handle = select_direction_model(models, r)
        g = handle.gain(abs(u1 - u2) / ts, tracker.absement)
        floor = 1e-3 * handle.median_gain
        if g < floor:
            g = floor
        v = u1 + ts * r / g
        if clamp:
            v = min(max(v, u_min), u_max)
        u2 = u1
        u1 = v
        tracker.update(v)
        u[k] = v
        alpha = wrap_angle(alpha + dalpha)
    return u


def simulate_voltage_trajectory(f_alpha, spec, controller_config, n_periods=2, clamp=True):
    """Two-period voltage trajectories of all four elements, law-only."""
    cols = {}
    for e in ELEMENTS:
        cols[e] = simulate_element_voltage(
            e, f_alpha, spec.span(e), controller_config.models[e],
            (controller_config.u_min[e], controller_config.u_max[e]),
            controller_config.sample_rate, n_periods=n_periods, clamp=clamp,
        )
    return cols


def extrema_sets(u, period_samples, tol=1e-12):
    """Indices attaining the steady cycle's max/min within a tie tolerance.

    The scored window is the second simulated period (the first one starts
    from rest and carries the startup transient); returned indices refer to
    the full record.
    """
    u = np.asarray(u, dtype=float)
    lo = period_samples
    hi = min(2 * period_samples, len(u))
    window = u[lo:hi]
    top = lo + np.nonzero(window >= window.max() - tol)[0]
    bot = lo + np.nonzero(window <= window.min() + tol)[0]
    return top, bot


def objective(strokes, element, f_alpha, models, bounds, sample_rate):
    """Sum of squared gaps between the steady-cycle extrema and the bounds.

    ``strokes`` is (r_max, r_min) in meters. Strictly decreasing in the
    span until the saturated waveform touches both bounds, zero beyond.
    """
    r_max, r_min = strokes
    span = r_max - r_min
    if span <= 0.0:
        return float("inf")
    u = simulate_element_voltage(element, f_alpha, span, models, bounds,
                                 sample_rate, n_periods=2, clamp=True)
    period = int(math.floor(sample_rate / abs(f_alpha)))
    top, bot = extrema_sets(u, period)
    u_min, u_max = bounds
    j = 0.0
    for k in top:
        j += (u[k] - u_max) ** 2
    for k in bot:
        j += (u[k] - u_min) ** 2
    return j


def _fd_gradient(fun, x, step):
    g = np.empty_like(x)
    for i in range(len(x)):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (fun(xp) - fun(xm)) / (2.0 * step)
    return g


def optimize_bounds(element, f_alpha, models, bounds, init, sample_rate,
                    max_iter=200, span_rtol=1e-10):
    """Smallest stroke bounds whose steady voltage cycle touches both limits.

    Quasi-Newton descent (central finite-difference gradients, simplex
    fallback) approaches the optimum; because the objective is exactly zero
    for every span beyond it, a bisection then pins the smallest zero of the
    objective to relative precision ``span_rtol``. The midpoint of the
    stroke bounds is preserved from ``init``.
    """
    r_max0, r_min0 = init
    mid = 0.5 * (r_max0 + r_min0)
    x0 = np.array([r_max0 / _UM, r_min0 / _UM])
    fd_step = 1e-9 / _UM                      # central-difference step of 1e-9 m

    def fun(x):
        return objective((x[0] * _UM, x[1] * _UM), element, f_alpha, models,
                         bounds, sample_rate)

    def jac(x):
        return _fd_gradient(fun, x, fd_step)

    def j_of_span(span):
        return objective((mid + span / 2.0, mid - span / 2.0), element, f_alpha,
                         models, bounds, sample_rate)

    res = optimize.minimize(fun, x0, jac=jac, method="BFGS",
                            options={"gtol": 1e-10, "maxiter": max_iter})
    best, j_best = res.x, float(res.fun)
    if j_best > _J_ZERO:
        nm = optimize.minimize(fun, best, method="Nelder-Mead",
                               options={"xatol": 1e-6, "fatol": 1e100,
                                        "maxiter": 2000})
        if nm.fun <= j_best:
            best, j_best = nm.x, float(nm.fun)
    span = (best[0] - best[1]) * _UM

    if j_best > _J_ZERO:
        # grow the span until the objective reaches its zero plateau
        hi = span
        grow = 0
        while j_of_span(hi) > _J_ZERO:
            hi *= 1.25
            grow += 1
            if grow > 64:
                raise StrokeOptimizationError(
                    f"{element} at {f_alpha} Hz: objective never reached zero",
                    best=(mid + span / 2.0, mid - span / 2.0),
                )
        lo = hi / 1.25
    else:
        # inside the plateau: bracket the kink from below
        hi = span
        lo = span
        shrink = 0
        while j_of_span(lo) <= _J_ZERO:
            hi = lo
            lo *= 0.95
            shrink += 1
            if shrink > 512 or lo <= 0.0:
                raise StrokeOptimizationError(
                    f"{element} at {f_alpha} Hz: objective identically zero",
                    best=(mid + span / 2.0, mid - span / 2.0),
                )
    while (hi - lo) > span_rtol * hi:
        probe = 0.5 * (hi + lo)
        if j_of_span(probe) <= _J_ZERO:
            hi = probe
        else:
            lo = probe
    return mid + hi / 2.0, mid - hi / 2.0


def build_stroke_lut(grid_frequencies, models, bounds, init_spec, sample_rate,
                     warm_start=True, safety=1.0005):
    """Optimize every element over the positive grid and tabulate the result.

    Spans are inflated by ``safety`` (about the unchanged midpoint) before
    storage so the saturated law strictly reaches both bounds every cycle
    instead of only touching them marginally.
    """
    freqs = np.sort(np.asarray(grid_frequencies, dtype=float))
    stroke_min = {e: np.empty(len(freqs)) for e in ELEMENTS}
    stroke_max = {e: np.empty(len(freqs)) for e in ELEMENTS}
    failures = []
    for e in ELEMENTS:
        current = (init_spec.stroke_max[e], init_spec.stroke_min[e])
        for idx, f in enumerate(freqs):
            start = current if warm_start else (init_spec.stroke_max[e], init_spec.stroke_min[e])
            try:
                r_max, r_min = optimize_bounds(
                    e, f, models[e], (bounds[0][e], bounds[1][e]), start, sample_rate)
            except StrokeOptimizationError as err:
                failures.append(f"{e}@{f:g}Hz")
                if err.best is None:
                    raise
                r_max, r_min = err.best
            current = (r_max, r_min)
            mid = 0.5 * (r_max + r_min)
            half = 0.5 * (r_max - r_min) * safety
            stroke_max[e][idx] = mid + half
            stroke_min[e][idx] = mid - half
    if failures:
        raise StrokeOptimizationError(
            "stroke optimization failed for: " + ", ".join(failures),
            best=StrokeLUT(freqs, stroke_min, stroke_max),
        )
    return StrokeLUT(freqs, stroke_min, stroke_max)


def cycle_means(element, f_alpha, span, models, bounds, sample_rate, n_cycles):
    """Per-cycle voltage means of the saturated law; drift diagnostic."""
    u = simulate_element_voltage(element, f_alpha, span, models, bounds,
                                 sample_rate, n_periods=n_cycles, clamp=True)
    period = int(math.floor(sample_rate / abs(f_alpha)))
    return u[: n_cycles * period].reshape(n_cycles, period).mean(axis=1)


def saturation_counts(element, f_alpha, span, models, bounds, sample_rate,
                      n_cycles, tol=1e-9):
    """Per-cycle counts of samples riding each anti-windup bound."""
    u = simulate_element_voltage(element, f_alpha, span, models, bounds,
                                 sample_rate, n_periods=n_cycles, clamp=True)
    period = int(math.floor(sample_rate / abs(f_alpha)))
    u = u[: n_cycles * period].reshape(n_cycles, period)
    at_top = (np.abs(u - bounds[1]) <= tol).sum(axis=1)
    at_bot = (np.abs(u - bounds[0]) <= tol).sum(axis=1)
    return at_top, at_bot

"""Commutation-angle bookkeeping and reference displacement waveforms.

The stepping cycle is parameterized by an angle in [0, 2pi) advanced by the
drive frequency. Clamp and shear reference rates are piecewise constant in
the angle with breakpoints at {0, pi/3, 2pi/3, 4pi/3, 5pi/3}; all rates
scale linearly with the magnitude of the drive frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controller import ELEMENTS
from .plant import kappa

TWO_PI = 2.0 * math.pi
BREAKPOINTS = (0.0, math.pi / 3.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0, 5.0 * math.pi / 3.0)


@dataclass
class WaveformSpec:
    """Per-element reference stroke bounds; rates depend only on the spans."""

    stroke_min: dict
    stroke_max: dict

    def __post_init__(self):
        for e in ELEMENTS:
            if not self.stroke_max[e] > self.stroke_min[e]:
                raise ValueError(f"{e}: stroke_max must exceed stroke_min")

    def span(self, element):
        return self.stroke_max[element] - self.stroke_min[element]

    def with_strokes(self, stroke_min, stroke_max):
        return WaveformSpec(dict(stroke_min), dict(stroke_max))


@dataclass
class CommutationState:
    alpha: float = 0.0


def wrap_angle(alpha):
    a = math.fmod(alpha, TWO_PI)
    return a + TWO_PI if a < 0.0 else a


def advance_alpha(state, f_alpha, ts):
    """Forward-Euler advance of the commutation angle, wrapped into [0, 2pi)."""
    return CommutationState(wrap_angle(state.alpha + TWO_PI * f_alpha * ts))


def clamp_rate(alpha, f_alpha, span, which):
    """Reference rate of clamp 1 or 2 at the given angle [m/s]."""
    sign = -1.0 if which == 1 else 1.0
    c = abs(f_alpha) * span / (TWO_PI / 3.0) * sign
    if alpha < BREAKPOINTS[1]:
        return c
    if alpha < BREAKPOINTS[2]:
        return 0.0
    if alpha < BREAKPOINTS[3]:
        return -c
    if alpha < BREAKPOINTS[4]:
        return 0.0
    return c


def shear_rate(alpha, f_alpha, span, which):
    """Reference rate of shear 1 or 2 at the given angle [m/s]."""
    slow = abs(f_alpha) * span / (5.0 * math.pi / 3.0)
    fast = -abs(f_alpha) * span / (math.pi / 3.0)
    if which == 1:
        if BREAKPOINTS[1] <= alpha < BREAKPOINTS[2]:
            return fast
        return slow
    if BREAKPOINTS[3] <= alpha < BREAKPOINTS[4]:
        return fast
    return slow


def element_rate(element, alpha, f_alpha, span):
    if element == "S1":
        return shear_rate(alpha, f_alpha, span, 1)
    if element == "S2":
        return shear_rate(alpha, f_alpha, span, 2)
    if element == "C1":
        return clamp_rate(alpha, f_alpha, span, 1)
    if element == "C2":
        return clamp_rate(alpha, f_alpha, span, 2)
    raise KeyError(element)


def nominal_waveform(alpha, f_alpha, spec):
    """Reference rates of all four elements at one angle."""
    return {e: element_rate(e, alpha, f_alpha, spec.span(e)) for e in ELEMENTS}


def modified_shear_reference(alpha, f_alpha, spec, profiles=None):
    """Shear rates with the direction-matched learned compensation added.

    ``profiles`` maps '+'/'-' to CompensationProfile (or None entries for the
    uncompensated case). The stored compensation rate is scaled by
    |f_alpha| / f_train so the injected per-step position profile is
    independent of the drive frequency; at the training frequency the
    addition is verbatim.
    """
    rates = nominal_waveform(alpha, f_alpha, spec)
    profile = None
    if profiles is not None:
        profile = profiles.get("+" if f_alpha >= 0 else "-")
    if profile is not None:
        add = profile.rate(alpha) * (abs(f_alpha) / profile.f_train)
        rates["S1"] += add
        rates["S2"] += add
    return rates


def _segment_table(element, span):
    """(breakpoint, per-radian slope) rows covering [0, 2pi) for one element."""
    edges = list(BREAKPOINTS) + [TWO_PI]
    rows = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        # rate at |f|=1 divided by angle rate 2*pi gives the slope dr/dalpha
        rows.append((lo, hi, element_rate(element, mid, 1.0, span) / TWO_PI))
    return rows


def reference_position(element, alpha, direction_sign, span):
    """Reference displacement at the given angle, zero at alpha = 0.

    For reverse stepping the position-versus-angle profile is the mirrored
    forward profile because the rates carry |f| while the angle runs
    backwards.
    """
    pos = 0.0
    for lo, hi, slope in _segment_table(element, span):
        if alpha <= lo:
            break
        pos += slope * (min(alpha, hi) - lo)
    return pos * (1.0 if direction_sign >= 0 else -1.0)


def ideal_mover_rate(alpha, f_alpha, spec, thresholds):
    """Mover rate implied by the reference displacements and kinematics.

    Engagement is evaluated on the reference clamp positions. This is the
    rate whose sensor-filtered integral serves as the tracking reference.
    """
    sgn = 1.0 if f_alpha >= 0 else -1.0
    clamp_pos = (
        reference_position("C1", alpha, sgn, spec.span("C1")),
        reference_position("C2", alpha, sgn, spec.span("C2")),
    )
    shear_rates = (
        element_rate("S1", alpha, f_alpha, spec.span("S1")),
        element_rate("S2", alpha, f_alpha, spec.span("S2")),
    )
    return kappa(shear_rates, clamp_pos, (thresholds["C1"], thresholds["C2"]))


def integrate_reference(f_alpha, n_samples, ts, spec, thresholds, ghat=None, alpha0=0.0):
    """Mover reference over ``n_samples`` at a constant drive frequency.

    Returns ``(r, alpha, rate)``: the reference positions (the ideal mover
    rate filtered through the sensor model ``ghat``), the commutation angle
    sequence, and the raw rate sequence. ``ghat`` must expose ``apply``;
    omitting it is a configuration error because the tracking error is
    defined against the sensor-filtered reference.
    """
    if ghat is None:
        raise ValueError("integrate_reference requires a sensor model (ghat)")
    alpha = np.empty(n_samples)
    rate = np.empty(n_samples)
    a = alpha0
    for k in range(n_samples):
        alpha[k] = a
        rate[k] = ideal_mover_rate(a, f_alpha, spec, thresholds)
        a = wrap_angle(a + TWO_PI * f_alpha * ts)
    return ghat.apply(rate), alpha, rate

"""Inverse-hysteresis feedforward control law.

Integrates the reference displacement rate through the inverse of a gain
model evaluated at the previous sample's voltage rate and absement, with
direction-dependent model selection and anti-windup voltage bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ELEMENTS = ("S1", "S2", "C1", "C2")

# Voltage differences below this are treated as zero rate: they neither flip
# the rate sign nor trigger an absement reset.
RATE_DEADBAND = 1e-9


class ControllerFault(RuntimeError):
    pass


class AbsementTracker:
    """Accumulated absolute voltage change since the last rate-sign reversal.

    The same recursion is used by the controller and by the simulated plant
    so that both agree sample by sample when commands are applied unmodified.
    """

    __slots__ = ("prev", "ref", "sign", "absement")

    def __init__(self, u0=0.0):
        self.prev = u0
        self.ref = u0
        self.sign = 1
        self.absement = 0.0

    def update(self, u_new):
        du = u_new - self.prev
        if du > RATE_DEADBAND:
            s = 1
        elif du < -RATE_DEADBAND:
            s = -1
        else:
            s = self.sign
        if s != self.sign:
            self.ref = self.prev
        self.absement = abs(u_new - self.ref)
        self.sign = s
        self.prev = u_new
        return self.absement


def update_absement(tracker, u_new):
    """Advance one tracker by one commanded voltage; returns the tracker."""
    tracker.update(u_new)
    return tracker


class ConstantModel:
    """Rate- and absement-independent gain."""

    __slots__ = ("value", "median_gain")

    def __init__(self, value):
        if value <= 0:
            raise ValueError("constant gain must be positive")
        self.value = float(value)
        self.median_gain = float(value)

    def gain(self, rate_abs, absement):
        return self.value


def as_direction_pair(model):
    """Normalize a model spec to a {'+': handle, '-': handle} mapping."""
    if isinstance(model, dict):
        if set(model) != {"+", "-"}:
            raise ValueError("direction map needs exactly '+' and '-' handles")
        return dict(model)
    return {"+": model, "-": model}


def select_direction_model(pair, r_rate):
    """Pick the '+' handle for nonnegative reference rates, '-' otherwise."""
    return pair["+"] if r_rate >= 0.0 else pair["-"]


@dataclass
class ControllerConfig:
    sample_rate: float
    models: dict                      # element -> {'+': handle, '-': handle}
    u_min: dict                       # element -> anti-windup lower bound [V]
    u_max: dict
    amplifier_range: tuple = (-100.0, 100.0)
    gain_floor_fraction: float = 1e-3

    def __post_init__(self):
        self.models = {e: as_direction_pair(m) for e, m in self.models.items()}
        lo, hi = self.amplifier_range
        for e in ELEMENTS:
            if not (lo < self.u_min[e] < self.u_max[e] < hi):
                raise ValueError(
                    f"{e}: anti-windup bounds must be strictly inside the amplifier range"
                )

    @property
    def ts(self):
        return 1.0 / self.sample_rate


@dataclass
class ControllerState:
    u_prev: dict = field(default_factory=lambda: {e: 0.0 for e in ELEMENTS})
    u_prev2: dict = field(default_factory=lambda: {e: 0.0 for e in ELEMENTS})
    trackers: dict = field(default_factory=lambda: {e: AbsementTracker() for e in ELEMENTS})


def control_step(state, config, rates, clamp=True):
    """One sample of the inverse-hysteresis law for all four elements.

    ``rates`` maps element name to the commanded displacement rate [m/s].
    Returns the commanded voltages; ``clamp=False`` disables the anti-windup
    saturation (used by the offline stroke optimization).
    """
    ts = config.ts
    out = {}
    for e in ELEMENTS:
        r = rates[e]
        u1 = state.u_prev[e]
        rate_hist = abs(u1 - state.u_prev2[e]) / ts
        handle = select_direction_model(config.models[e], r)
        g = handle.gain(rate_hist, state.trackers[e].absement)
        if g <= 0.0:
            raise ControllerFault(f"{e}: model returned non-positive gain {g}")
        floor = config.gain_floor_fraction * handle.median_gain
        if g < floor:
            g = floor
        u = u1 + ts * r / g
        if clamp:
            if u < config.u_min[e]:
                u = config.u_min[e]
            elif u > config.u_max[e]:
                u = config.u_max[e]
        state.u_prev2[e] = u1
        state.u_prev[e] = u
        state.trackers[e].update(u)
        out[e] = u
    return out

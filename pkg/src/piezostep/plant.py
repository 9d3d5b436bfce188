"""Deterministic fixed-step simulation of a piezo-stepper actuator.

Four piezo elements (two shears, two clamps) displace according to a
rate- and absement-dependent gain, the clamp/shear kinematics move a
central rod, an angle-periodic velocity disturbance models slip and
misalignment, and a capacitive-sensor chain produces the measured
position. Stands in for the physical setup during development of the
feedforward stack.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .controller import ELEMENTS, AbsementTracker
from .lti import butter_lowpass, Biquad

SHEARS = ("S1", "S2")
CLAMPS = ("C1", "C2")


class SimulationFault(RuntimeError):
    """Commanded voltage left the amplifier range: a controller bug."""


@dataclass(frozen=True)
class ElementTruth:
    """Ground-truth gain parameters of one element, per stepping direction.

    gain(udot, ua) = c0 + c1*exp(-ua/lam) + c2*tanh(|udot|/s), all in m/V.
    """

    c0: dict
    c1: dict
    c2: dict
    lam: float
    s: float

    def gain(self, udot, ua, direction):
        return (
            self.c0[direction]
            + self.c1[direction] * math.exp(-ua / self.lam)
            + self.c2[direction] * math.tanh(abs(udot) / self.s)
        )


@dataclass
class PlantConfig:
    sample_rate: float
    elements: dict                      # element -> ElementTruth
    clamp_thresholds: dict              # clamp element -> contact position [m]
    current_gains: dict                 # element -> xi [m s^-1 A^-1]
    disturbance: dict                   # '+'/'-' -> [(harmonic, amplitude [m], phase [rad])]
    sensor_cutoff_hz: float = 100.0
    sensor_delay: int = 1
    noise_std: float = 5e-10
    seed: int = 0
    amplifier_range: tuple = (-100.0, 100.0)

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        if not 0.0 < self.sensor_cutoff_hz < self.sample_rate / 2.0:
            raise ValueError("sensor cutoff must lie in (0, F_s/2)")
        for e, xi in self.current_gains.items():
            if xi <= 0:
                raise ValueError(f"{e}: current gain must be positive")
        for direction, table in self.disturbance.items():
            for h, a, phi in table:
                if h < 1 or int(h) != h:
                    raise ValueError("harmonic indices must be integers >= 1")
                if not (math.isfinite(a) and math.isfinite(phi)):
                    raise ValueError("harmonic amplitude and phase must be finite")
        self._assert_positive_gain()

    def _assert_positive_gain(self):
        lo, hi = self.amplifier_range
        swing = hi - lo
        rates = np.linspace(0.0, swing * self.sample_rate, 64)
        absements = np.linspace(0.0, swing, 64)
        for e in ELEMENTS:
            truth = self.elements[e]
            for direction in ("+", "-"):
                for udot in rates:
                    for ua in absements:
                        if truth.gain(udot, ua, direction) <= 0.0:
                            raise ValueError(
                                f"{e}{direction}: ground-truth gain non-positive at "
                                f"udot={udot}, ua={ua}"
                            )

    @property
    def ts(self):
        return 1.0 / self.sample_rate


def true_hysteresis(config, element, udot, ua, direction):
    """Ground-truth gain from voltage rate to displacement rate [m/V]."""
    if ua < 0:
        raise ValueError("absement must be nonnegative")
    return config.elements[element].gain(udot, ua, direction)


def kappa(shear_rates, clamp_positions, thresholds):
    """Mover rate selected by the clamp engagement state."""
    engaged1 = clamp_positions[0] >= thresholds[0]
    engaged2 = clamp_positions[1] >= thresholds[1]
    if engaged1 and not engaged2:
        return shear_rates[0]
    if engaged2 and not engaged1:
        return shear_rates[1]
    if engaged1 and engaged2:
        return 0.5 * (shear_rates[0] + shear_rates[1])
    return 0.0


def disturbance(config, alpha, f_alpha):
    """Angle-periodic mover-rate disturbance, scaled by |f_alpha|.

    The |f_alpha| scaling makes the per-step position ripple independent of
    the drive frequency.
    """
    if f_alpha == 0.0:
        return 0.0
    table = config.disturbance.get("+" if f_alpha > 0 else "-", ())
    rate = 0.0
    for h, a, phi in table:
        rate += a * math.sin(h * alpha + phi)
    return abs(f_alpha) * rate


class Sensor:
    """Discrete integrator -> one-sample delay -> 2nd-order lowpass -> noise."""

    def __init__(self, cutoff_hz, sample_rate, delay=1, noise_std=0.0, rng=None):
        self.ts = 1.0 / sample_rate
        self.noise_std = noise_std
        self.rng = rng if rng is not None else np.random.default_rng(0)
        lp = butter_lowpass(cutoff_hz, sample_rate, order=2)
        self._lp_coeffs = (lp.b, lp.a)
        self.delay = delay
        self.reset()

    def reset(self):
        self._integ = 0.0
        self._line = deque([0.0] * self.delay) if self.delay else None
        self._biquad = Biquad(*self._lp_coeffs)

    def step(self, rate):
        self._integ += self.ts * rate
        x = self._integ
        if self._line is not None:
            self._line.append(x)
            x = self._line.popleft()
        y = self._biquad.step(x)
        if self.noise_std > 0.0:
            y += self.noise_std * self.rng.standard_normal()
        return y

    def transfer_filter(self):
        """The sensor chain as a DiscreteFilter (noise excluded)."""
        from .lti import DiscreteFilter, delay_filter

        accumulator = DiscreteFilter(np.array([self.ts]), np.array([1.0, -1.0]))
        lp = DiscreteFilter(*self._lp_coeffs)
        return accumulator.series(delay_filter(self.delay)).series(lp)


class Plant:
    """Stateful synthetic actuator; strictly sequential per instance."""

    def __init__(self, config, seed=None):
        self.config = config
        self.reset(seed)

    def reset(self, seed=None):
        cfg = self.config
        self._seed = cfg.seed if seed is None else seed
        self.rng = np.random.default_rng(self._seed)
        self.voltages = {e: 0.0 for e in ELEMENTS}
        self.trackers = {e: AbsementTracker() for e in ELEMENTS}
        self.positions = {e: 0.0 for e in ELEMENTS}
        self.y_true = 0.0
        self.sensor = Sensor(
            cfg.sensor_cutoff_hz,
            cfg.sample_rate,
            delay=cfg.sensor_delay,
            noise_std=cfg.noise_std,
            rng=self.rng,
        )
        self.k = 0

    @property
    def absements(self):
        return {e: self.trackers[e].absement for e in ELEMENTS}

    def step(self, u_cmd, alpha=0.0, f_alpha=0.0):
        """Apply one sample of commanded voltages.

        Returns ``(y_measured, currents)`` where currents maps element name
        to the element current in A. The commutation angle and drive
        frequency only parameterize the slip disturbance; passing the
        defaults disables it.
        """
        cfg = self.config
        ts = cfg.ts
        lo, hi = cfg.amplifier_range
        currents = {}
        rates = {}
        for e in ELEMENTS:
            u_new = u_cmd[e]
            if not lo <= u_new <= hi:
                raise SimulationFault(
                    f"{e}: commanded {u_new} V outside amplifier range [{lo}, {hi}]"
                )
            du = u_new - self.voltages[e]
            tracker = self.trackers[e]
            ua = tracker.update(u_new)
            direction = "+" if tracker.sign >= 0 else "-"
            gain = cfg.elements[e].gain(du / ts, ua, direction)
            dy = gain * du
            self.positions[e] += dy
            currents[e] = dy / (ts * cfg.current_gains[e])
            rates[e] = dy / ts
            self.voltages[e] = u_new
        mover_rate = kappa(
            (rates["S1"], rates["S2"]),
            (self.positions["C1"], self.positions["C2"]),
            (cfg.clamp_thresholds["C1"], cfg.clamp_thresholds["C2"]),
        )
        mover_rate += disturbance(cfg, alpha, f_alpha)
        self.y_true += ts * mover_rate
        y = self.sensor.step(mover_rate)
        self.k += 1
        return y, currents


TRACE_COLUMNS = (
    ["t (s)", "alpha (rad)"]
    + [f"u_{e} (V)" for e in ELEMENTS]
    + [f"i_{e} (A)" for e in ELEMENTS]
    + [f"udot_{e} (V/s)" for e in ELEMENTS]
    + [f"ua_{e} (V)" for e in ELEMENTS]
    + ["y_true (m)", "y (m)", "r (m)"]
)


@dataclass
class Trace:
    """Column-oriented recording of one experiment."""

    data: dict = field(default_factory=dict)

    def __len__(self):
        return 0 if not self.data else len(next(iter(self.data.values())))

    def column(self, name):
        return self.data[name]

    def to_csv(self, path):
        cols = [self.data[c] for c in TRACE_COLUMNS]
        n = len(self)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for i in range(n):
                fh.write(",".join(f"{col[i]:.17g}" for col in cols) + "\n")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().rstrip("\n").split(",")
            raw = [line.rstrip("\n").split(",") for line in fh if line.strip()]
        arr = np.array(raw, dtype=float)
        return cls({name: arr[:, j] for j, name in enumerate(header)})


class TraceRecorder:
    """Accumulates per-sample rows into a Trace without Python-object bloat."""

    def __init__(self):
        import array

        self._cols = {name: array.array("d") for name in TRACE_COLUMNS}

    def record(self, t, alpha, u, i, udot, ua, y_true, y, r):
        c = self._cols
        c["t (s)"].append(t)
        c["alpha (rad)"].append(alpha)
        for e in ELEMENTS:
            c[f"u_{e} (V)"].append(u[e])
            c[f"i_{e} (A)"].append(i[e])
            c[f"udot_{e} (V/s)"].append(udot[e])
            c[f"ua_{e} (V)"].append(ua[e])
        c["y_true (m)"].append(y_true)
        c["y (m)"].append(y)
        c["r (m)"].append(r)

    def finish(self):
        return Trace({k: np.frombuffer(v, dtype=float).copy() if len(v) else np.empty(0)
                      for k, v in self._cols.items()})

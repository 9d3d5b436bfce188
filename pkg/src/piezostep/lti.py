"""Discrete-time LTI filter primitives shared by the sensor chain, the
learning filters, and the identification code.

Transfer functions use the scipy convention: ``H(z) = B(z^-1)/A(z^-1)`` with
coefficient arrays in ascending powers of ``z^-1`` and ``a[0]`` normalized
to 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal


@dataclass(frozen=True)
class DiscreteFilter:
    """Rational discrete-time filter with causal apply and frequency response."""

    b: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if a[0] == 0.0:
            raise ValueError("leading denominator coefficient must be nonzero")
        b = b / a[0]
        a = a / a[0]
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", a)

    def apply(self, x):
        """Causal filtering from zero initial conditions."""
        return signal.lfilter(self.b, self.a, np.asarray(x, dtype=float))

    def impulse(self, n):
        x = np.zeros(n)
        x[0] = 1.0
        return self.apply(x)

    def freq_response(self, w):
        """Response at angular frequencies ``w`` in rad/sample."""
        _, h = signal.freqz(self.b, self.a, worN=np.asarray(w, dtype=float))
        return h

    def poles(self):
        return np.roots(self.a)

    def zeros(self):
        return np.roots(self.b)

    @property
    def relative_degree(self):
        nz = np.nonzero(np.abs(self.b) > 0.0)[0]
        if nz.size == 0:
            raise ValueError("zero numerator has no relative degree")
        return int(nz[0])

    def is_stable(self, tol=1e-9):
        p = self.poles()
        return bool(np.all(np.abs(p) < 1.0 + tol))

    def dc_gain(self):
        return float(np.sum(self.b) / np.sum(self.a))

    def series(self, other):
        """Cascade ``self`` followed by ``other``."""
        return DiscreteFilter(np.convolve(self.b, other.b), np.convolve(self.a, other.a))

    def scaled(self, g):
        return DiscreteFilter(self.b * g, self.a)


def identity_filter():
    return DiscreteFilter(np.array([1.0]), np.array([1.0]))


def delay_filter(d):
    if d < 0:
        raise ValueError("delay must be nonnegative")
    b = np.zeros(d + 1)
    b[d] = 1.0
    return DiscreteFilter(b, np.array([1.0]))


def integrator_filter(ts):
    """Forward accumulator followed by a one-sample delay: ``T_s/(z-1)``."""
    return DiscreteFilter(np.array([0.0, ts]), np.array([1.0, -1.0]))


def butter_lowpass(cutoff_hz, sample_rate, order=2):
    """Bilinear-discretized Butterworth lowpass with unity DC gain."""
    if not 0.0 < cutoff_hz < sample_rate / 2.0:
        raise ValueError("cutoff must lie strictly inside (0, F_s/2)")
    b, a = signal.butter(order, cutoff_hz / (sample_rate / 2.0))
    return DiscreteFilter(b, a)


@dataclass
class Biquad:
    """Stateful second-order section in direct form II transposed.

    Scalar-at-a-time evaluation for use inside sample-by-sample simulation
    loops; coefficients follow the same (b, a) convention as DiscreteFilter.
    """

    b: np.ndarray
    a: np.ndarray
    _s1: float = field(default=0.0, repr=False)
    _s2: float = field(default=0.0, repr=False)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        a = np.asarray(self.a, dtype=float)
        if len(b) != 3 or len(a) != 3:
            raise ValueError("Biquad requires 3 coefficients each")
        self.b = b / a[0]
        self.a = a / a[0]

    def reset(self):
        self._s1 = 0.0
        self._s2 = 0.0

    def step(self, x):
        b0, b1, b2 = self.b
        _, a1, a2 = self.a
        y = b0 * x + self._s1
        self._s1 = b1 * x - a1 * y + self._s2
        self._s2 = b2 * x - a2 * y
        return y

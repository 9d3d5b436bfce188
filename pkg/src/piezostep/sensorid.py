"""Multisine identification of the shear-to-position responses and the
sensor model used by the learning scheme.

Each shear is excited with random-phase multisines while its clamp keeps it
in contact with the mover and the opposite clamp is retracted; the averaged
frequency responses are combined into a normalized integrator-scaled sensor
estimate and fitted with a low-order parametric model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .lti import DiscreteFilter


class IdentificationError(RuntimeError):
    pass


def multisine(n_samples, bins, amplitude, rng):
    """Sum of cosines at integer DFT lines with uniform random phases.

    The signal is periodic with the record length, so one period leaks no
    energy outside the requested bins.
    """
    bins = np.asarray(bins, dtype=int)
    if np.any(bins <= 0) or np.any(bins >= n_samples / 2):
        raise ValueError("bins must lie strictly between DC and Nyquist")
    if len(np.unique(bins)) != len(bins):
        raise ValueError("bins must be unique")
    t = np.arange(n_samples)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=len(bins))
    x = np.zeros(n_samples)
    for k, phi in zip(bins, phases):
        x += amplitude * np.cos(2.0 * np.pi * k * t / n_samples + phi)
    return x


@dataclass
class FrequencyResponse:
    """Nonparametric response on a bin grid with cross-realization statistics."""

    omega: np.ndarray                 # rad/sample, strictly increasing in (0, pi]
    values: np.ndarray                # complex
    n_realizations: int = 1
    variance: np.ndarray = None       # per-bin sample variance across realizations

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if np.any(np.diff(self.omega) <= 0) or np.any(self.omega <= 0) or np.any(self.omega > np.pi):
            raise ValueError("omega grid must be strictly increasing within (0, pi]")
        if self.n_realizations < 1:
            raise ValueError("need at least one realization")
        if self.variance is None:
            self.variance = np.zeros(len(self.omega))

    @property
    def variance_of_mean(self):
        return self.variance / self.n_realizations


def bla(input_records, output_records, period_samples, bins, discard_periods=1):
    """Best linear approximation averaged over multisine realizations.

    Each record holds an integer number of periods; the leading
    ``discard_periods`` are dropped as transient, the remaining periods are
    averaged in the time domain, and the per-realization responses
    Y(k)/U(k) at the excited bins are averaged across realizations.
    """
    bins = np.asarray(bins, dtype=int)
    n_real = len(input_records)
    if n_real < 1 or len(output_records) != n_real:
        raise ValueError("need matching, nonempty input/output record lists")
    per_real = []
    for u, y in zip(input_records, output_records):
        u = np.asarray(u, dtype=float)
        y = np.asarray(y, dtype=float)
        n_per = len(u) // period_samples
        if n_per <= discard_periods:
            raise ValueError("records must exceed the discarded transient periods")
        u = u[discard_periods * period_samples: n_per * period_samples]
        y = y[discard_periods * period_samples: n_per * period_samples]
        u_avg = u.reshape(-1, period_samples).mean(axis=0)
        y_avg = y.reshape(-1, period_samples).mean(axis=0)
        U = np.fft.rfft(u_avg)
        Y = np.fft.rfft(y_avg)
        if np.any(np.abs(U[bins]) < 1e-12 * max(np.abs(U).max(), 1e-300)):
            raise IdentificationError("zero input energy at a requested bin")
        per_real.append(Y[bins] / U[bins])
    stack = np.array(per_real)
    mean = stack.mean(axis=0)
    if n_real > 1:
        var = np.mean(np.abs(stack - mean) ** 2, axis=0) * n_real / (n_real - 1)
    else:
        var = np.zeros(len(bins))
    omega = 2.0 * np.pi * bins / period_samples
    return FrequencyResponse(omega, mean, n_real, var)


def average_sensor_frf(frf_s1, frf_s2, ts):
    """Integrator-scaled average of the two shear responses.

    Normalizes by the average response at the lowest measured frequency so
    the result behaves as a unit discrete-time integrator there.
    """
    if len(frf_s1.omega) != len(frf_s2.omega) or np.any(frf_s1.omega != frf_s2.omega):
        raise IdentificationError("shear responses must share the frequency grid")
    omega = frf_s1.omega
    avg = 0.5 * (frf_s1.values + frf_s2.values)
    c_g = avg[0]
    if abs(c_g) < 1e-300 or abs(c_g) < 1e-9 * np.abs(avg).max():
        raise IdentificationError("low-frequency normalization constant is ~0")
    z = np.exp(1j * omega)
    values = ts / (z - 1.0) * avg / c_g
    var = (frf_s1.variance + frf_s2.variance) / 4.0
    n = min(frf_s1.n_realizations, frf_s2.n_realizations)
    return FrequencyResponse(omega, values, n, var)


@dataclass
class SensorModel:
    """Low-order rational sensor model including the explicit integrator.

    ``b``/``a`` follow the DiscreteFilter convention. All poles must be
    strictly stable except the single integrator pole at z = 1.
    """

    b: np.ndarray
    a: np.ndarray
    relative_degree: int
    sample_rate: float
    fit_error: np.ndarray = None      # per-bin relative magnitude error

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        if self.relative_degree < 1:
            raise ValueError("sensor model must be strictly proper (d >= 1)")
        poles = np.roots(self.a)
        unit = np.abs(poles - 1.0) < 1e-6
        if np.count_nonzero(unit) > 1:
            raise ValueError("more than one integrator pole")
        if np.any(np.abs(poles[~unit]) >= 1.0):
            raise ValueError("non-integrator poles must be strictly inside the unit circle")

    def as_filter(self):
        return DiscreteFilter(self.b, self.a)

    def apply(self, x):
        return self.as_filter().apply(x)

    def freq_response(self, w):
        return self.as_filter().freq_response(w)

    @property
    def ts(self):
        return 1.0 / self.sample_rate


def _delta_poly_to_z(coeffs, scale):
    """Expand sum c_k ((z-1)*scale)^k into ascending powers of z."""
    from numpy.polynomial import polynomial as P

    acc = np.zeros(1)
    base = np.array([1.0])
    lin = np.array([-scale, scale])
    for c in coeffs:
        acc = P.polyadd(acc, c * base)
        base = P.polymul(base, lin)
    return acc


def fit_rational(omega, h, order, ts, n_iter=30, weights=None):
    """Weighted least-squares rational fit in the frequency domain.

    Linearized formulation with iterative denominator reweighting
    (Sanathanan-Koerner). The fit runs in a scaled delta variable
    (z-1)/(ts*s0), which stays well conditioned when all identification
    bins sit far below Nyquist, and is converted exactly to z-domain
    coefficients. Returns (b, a) in ascending powers of z^-1.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    z = np.exp(1j * omega)
    delta = (z - 1.0) / ts
    s0 = np.abs(delta).max()
    x = delta / s0
    powers = np.array([x ** k for k in range(order + 1)]).T      # m x (order+1)
    w0 = 1.0 / np.maximum(np.abs(h), 1e-300)                     # relative error weighting
    if weights is not None:
        w0 = w0 * np.asarray(weights, dtype=float)
    a = np.concatenate([[1.0], np.zeros(order)])
    b = np.zeros(order + 1)
    for _ in range(n_iter):
        aval = powers @ a
        w = w0 / np.maximum(np.abs(aval), 1e-300)
        cplx = np.hstack([-h[:, None] * powers[:, 1:], powers]) * w[:, None]
        A = np.vstack([cplx.real, cplx.imag])
        rhs = np.concatenate([(h * w).real, (h * w).imag])
        sol, _, _, _ = linalg.lstsq(A, rhs, lapack_driver="gelsd")
        a = np.concatenate([[1.0], sol[:order]])
        b = sol[order:]
    scale = 1.0 / (ts * s0)
    bz = _delta_poly_to_z(b, scale)
    az = _delta_poly_to_z(a, scale)
    n = max(len(bz), len(az)) - 1
    bz = np.pad(bz, (0, n + 1 - len(bz)))[::-1]
    az = np.pad(az, (0, n + 1 - len(az)))[::-1]
    return bz / az[0], az / az[0]


def reflect_unstable_poles(a):
    """Move poles outside the unit circle to their magnitude-preserving mirror.

    Each reflected pole p -> 1/conj(p) changes |A| on the unit circle by a
    constant factor 1/|p|; the returned gain compensates so the magnitude
    response is preserved.
    """
    poles = np.roots(a)
    gain = 1.0
    changed = False
    for i, p in enumerate(poles):
        if abs(p) > 1.0 and abs(p - 1.0) > 1e-9:
            poles[i] = 1.0 / np.conj(p)
            gain *= abs(p)
            changed = True
    if not changed:
        return np.asarray(a, dtype=float), 1.0
    a_new = np.real(np.poly(poles)) * a[0]
    return a_new, gain


def fit_parametric(frf, order, sample_rate, n_iter=20):
    """Parametric sensor model from the nonparametric estimate.

    The integrator is divided out before fitting and reattached afterwards.
    Stability of the proper part is enforced by pole reflection followed by
    a numerator refit against the original data.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    ts = 1.0 / sample_rate
    omega = frf.omega
    z = np.exp(1j * omega)
    h = frf.values * (z - 1.0) / ts
    # de-emphasize bins whose cross-realization scatter marks them unreliable
    noise_rel = np.sqrt(frf.variance_of_mean) / np.maximum(np.abs(frf.values), 1e-300)
    b, a = fit_rational(omega, h, order, ts, n_iter=n_iter,
                        weights=1.0 / (1.0 + 3.0 * noise_rel))
    a_stab, gain = reflect_unstable_poles(a)
    b = _refit_numerator(omega, h, a_stab, order)
    hfit = _eval_rational(b, a_stab, z)
    err = np.abs(hfit - h) / np.maximum(np.abs(h), 1e-300)
    if np.max(err) > 0.2:
        raise IdentificationError(
            f"parametric fit error {np.max(err):.3f} exceeds 20% after stabilization"
        )
    b_g = np.convolve(b, [0.0, ts])
    a_g = np.convolve(a_stab, [1.0, -1.0])
    rel = int(np.nonzero(np.abs(b_g) > 1e-9 * np.abs(b_g).max())[0][0])
    return SensorModel(b_g, a_g, rel, sample_rate, fit_error=err)


def _eval_rational(b, a, z):
    num = sum(bk * z ** (-k) for k, bk in enumerate(b))
    den = sum(ak * z ** (-k) for k, ak in enumerate(a))
    return num / den


def _refit_numerator(omega, h, a, order):
    """Exact weighted LSQ for the numerator with the denominator fixed.

    Weighting by 1/(|h| |A|) makes the equation error equal the relative
    output error, so the refit minimizes what the fit-error report measures.
    """
    z = np.exp(1j * omega)
    aval = sum(ak * z ** (-k) for k, ak in enumerate(a))
    w = 1.0 / np.maximum(np.abs(h) * np.abs(aval), 1e-300)
    target = h * aval * w
    m = len(z)
    A = np.empty((2 * m, order + 1))
    rhs = np.concatenate([target.real, target.imag])
    for k in range(order + 1):
        col = (z ** (-k)) * w
        A[:m, k] = col.real
        A[m:, k] = col.imag
    sol, _, _, _ = linalg.lstsq(A, rhs, lapack_driver="gelsd")
    return sol


def sensor_truth_response(plant_config, omega):
    """Frequency response of the synthetic sensor chain (for verification)."""
    from .plant import Sensor

    s = Sensor(plant_config.sensor_cutoff_hz, plant_config.sample_rate,
               delay=plant_config.sensor_delay, noise_std=0.0)
    return s.transfer_filter().freq_response(omega)

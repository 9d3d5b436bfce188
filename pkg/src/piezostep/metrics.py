"""Error metrics for stepping experiments."""

from __future__ import annotations

import numpy as np


def rmsd(eps):
    """Root-mean-square deviation of a sequence about its own mean."""
    eps = np.asarray(eps, dtype=float)
    if eps.size == 0:
        raise ValueError("rmsd of an empty sequence")
    return float(np.sqrt(np.mean((eps - eps.mean()) ** 2)))


def reverse_cumulative_spectrum(eps, sample_rate):
    """RMS content of all spectral lines at or above each frequency.

    Returns ``(frequencies, curve)`` where ``curve[i]`` is the RMS of the
    content at frequencies >= ``frequencies[i]``. The mean (DC) is excluded,
    so the value at zero frequency equals the total RMSD and the curve is
    monotone non-increasing.
    """
    eps = np.asarray(eps, dtype=float)
    n = len(eps)
    if n < 2:
        raise ValueError("need at least two samples")
    spec = np.fft.rfft(eps)
    n_bins = len(spec)
    power = np.empty(n_bins)
    power[0] = 0.0                                  # mean removed by definition
    power[1:] = 2.0 * np.abs(spec[1:]) ** 2 / n**2
    if n % 2 == 0:
        power[-1] = np.abs(spec[-1]) ** 2 / n**2    # Nyquist bin is not doubled
    tail = np.sqrt(np.maximum(np.cumsum(power[::-1])[::-1], 0.0))
    freqs = np.arange(n_bins) * sample_rate / n
    return freqs, tail

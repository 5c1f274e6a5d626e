"""Modulation/phase functions, time series and spectra of MTSFM waveforms."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import signal as sps

from .core import (RECT, GbfCoefficients, SampledWaveform, SamplingGrid, Symmetry, TaperKind,
                   WaveformError, WaveformParams, make_grid, unit_energy)

_SUPPORT_TOL = 1e-12
SPECTROGRAM_NPERSEG = 128
SPECTROGRAM_OVERLAP = 0.75


@dataclass(frozen=True, eq=False)
class SpectrumGrid:
    freqs: np.ndarray
    values: np.ndarray
    df: float

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.df)

    @property
    def eds(self) -> np.ndarray:
        """Energy density spectrum ``|S(f)|^2``."""
        return np.abs(self.values) ** 2


def _check_support(params: WaveformParams, t: np.ndarray) -> None:
    half = 0.5 * params.duration
    if np.any(np.abs(t) > half * (1 + _SUPPORT_TOL) + _SUPPORT_TOL):
        raise WaveformError(f"time outside the pulse support [-{half}, {half}]")


def _harmonic_args(params: WaveformParams, t: np.ndarray) -> np.ndarray:
    return 2.0 * np.pi * np.multiply.outer(t, params.harmonics) / params.duration


def modulation_function(params: WaveformParams, t) -> np.ndarray:
    """Instantaneous frequency ``m(t)`` in Hz.

    Even symmetry: ``a0/2 + sum a_k cos(2 pi k t / T)``; odd symmetry:
    ``sum b_k sin(2 pi k t / T)``, where ``a_k = k alpha_k / T`` (resp.
    ``b_k = k beta_k / T``).
    """
    t = np.asarray(t, dtype=float)
    _check_support(params, t)
    amps = params.harmonics * params.indices / params.duration
    arg = _harmonic_args(params, t)
    if params.symmetry is Symmetry.EVEN:
        return 0.5 * params.a0 + np.cos(arg) @ amps
    return np.sin(arg) @ amps


def phase_function(params: WaveformParams, t) -> np.ndarray:
    """Phase ``phi(t)`` in radians, the antiderivative of ``2 pi m(t)``."""
    t = np.asarray(t, dtype=float)
    _check_support(params, t)
    arg = _harmonic_args(params, t)
    if params.symmetry is Symmetry.EVEN:
        return np.pi * params.a0 * t + np.sin(arg) @ params.indices
    return -(np.cos(arg) @ params.indices)


def taper_window(params: WaveformParams, t: np.ndarray) -> np.ndarray:
    """Amplitude taper (unnormalized) evaluated at times ``t``."""
    if params.taper.is_rectangular:
        return np.ones_like(t)
    alpha = params.taper.tukey_alpha
    u = np.clip((np.asarray(t) + 0.5 * params.duration) / params.duration, 0.0, 1.0)
    edge = np.minimum(u, 1.0 - u)
    w = np.ones_like(u)
    ramp = edge < 0.5 * alpha
    w[ramp] = 0.5 * (1.0 - np.cos(2.0 * np.pi * edge[ramp] / alpha))
    return w


def synthesize(params: WaveformParams, grid: Optional[SamplingGrid] = None) -> SampledWaveform:
    """Unit-energy complex baseband samples ``a(t) exp(j phi(t))``.

    Args:
        params: Waveform parameters.
        grid: Sampling grid; chosen by :func:`mtsfm.core.make_grid` if omitted.
    """
    if grid is None:
        grid = make_grid(params)
    t = grid.times
    s = taper_window(params, t) * np.exp(1j * phase_function(params, t))
    return SampledWaveform(grid, unit_energy(s, grid.dt), params)


def _parabolic_peak(t: np.ndarray, y: np.ndarray, i: int) -> float:
    if i <= 0 or i >= y.size - 1:
        return float(y[i])
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    den = y0 - 2.0 * y1 + y2
    if den == 0.0:
        return float(y1)
    return float(y1 - 0.125 * (y0 - y2) ** 2 / den)


def swept_bandwidth(params: WaveformParams, grid: Optional[SamplingGrid] = None) -> float:
    """Peak-to-peak range of the instantaneous frequency, in Hz.

    The modulation function is evaluated at the grid cell edges plus the
    closing endpoint ``T/2`` (or on a dense default grid), and interior
    extrema are refined by parabolic interpolation.
    """
    T = params.duration
    if grid is None:
        n = max(64 * params.num_harmonics, 4096)
        t = np.linspace(-0.5 * T, 0.5 * T, n + 1)
    else:
        if grid.dt > T / (8 * params.num_harmonics) * (1 + 1e-12):
            raise WaveformError("grid does not resolve the highest harmonic (dt > T/(8K))")
        t = np.append(grid.edges, grid.t0 + grid.duration)
    m = modulation_function(params, t)
    hi = _parabolic_peak(t, m, int(np.argmax(m)))
    lo = -_parabolic_peak(t, -m, int(np.argmin(m)))
    return max(hi - lo, 0.0)


def time_bandwidth_product(params: WaveformParams) -> float:
    return params.duration * swept_bandwidth(params)


def scale_to_tbp(params: WaveformParams, target_tbp: float) -> WaveformParams:
    """Scale every modulation index by one factor so that ``T * df = target_tbp``."""
    current = time_bandwidth_product(params)
    if current <= 0.0:
        raise WaveformError("cannot scale a zero-bandwidth waveform to a target TBP")
    return params.with_indices(params.indices * (target_tbp / current))


def draw_indices(rng: np.random.Generator, num_harmonics: int,
                 weighting: str = "one_over_k") -> np.ndarray:
    """i.i.d. standard-normal indices, optionally weighted by ``1/k``."""
    x = rng.standard_normal(num_harmonics)
    if weighting == "one_over_k":
        return x / np.arange(1, num_harmonics + 1)
    if weighting == "flat":
        return x
    raise ValueError(f"unknown init weighting {weighting!r}")


def random_waveform(rng: np.random.Generator, num_harmonics: int, duration: float,
                    target_tbp: float, symmetry: Symmetry | str = Symmetry.EVEN,
                    taper=None, weighting: str = "one_over_k") -> WaveformParams:
    params = WaveformParams(duration, draw_indices(rng, num_harmonics, weighting),
                            symmetry=symmetry, taper=taper or RECT)
    return scale_to_tbp(params, target_tbp)


def _require_rect(params: WaveformParams, what: str) -> None:
    if not params.taper.is_rectangular:
        raise WaveformError(f"{what} assumes a rectangular window; got {params.taper.kind.value} taper")


def spectrum_closed_form(coeffs: GbfCoefficients, params: WaveformParams, freqs) -> SpectrumGrid:
    """``S(f) = sqrt(T) sum_l c_l sinc(pi T (f - l/T))`` on ``freqs``."""
    _require_rect(params, "closed-form spectrum")
    freqs = np.asarray(freqs, dtype=float)
    T = params.duration
    vals = math.sqrt(T) * (np.sinc(np.subtract.outer(T * freqs, coeffs.orders)) @ coeffs.values)
    df = float(freqs[1] - freqs[0]) if freqs.size > 1 else 0.0
    return SpectrumGrid(freqs, vals, df)


def spectrum_numeric(w: SampledWaveform, pad: int = 8) -> SpectrumGrid:
    """Continuous-time Fourier transform of the samples via a zero-padded FFT.

    Frequencies are returned in increasing order over the full Nyquist span.
    """
    g = w.grid
    n_fft = pad * g.num_samples
    spec = np.fft.fftshift(np.fft.fft(w.samples, n_fft))
    freqs = np.fft.fftshift(np.fft.fftfreq(n_fft, g.dt))
    t_first = g.t0 + 0.5 * g.dt
    spec = spec * g.dt * np.exp(-2j * np.pi * freqs * t_first)
    return SpectrumGrid(freqs, spec, 1.0 / (n_fft * g.dt))


def spectrogram(w: SampledWaveform, nperseg: int = SPECTROGRAM_NPERSEG,
                overlap: float = SPECTROGRAM_OVERLAP):
    """Two-sided spectrogram of the samples.

    Returns:
        (times, freqs, power) with ``power`` shaped ``(len(freqs), len(times))``,
        frequencies increasing and times on the centered pulse axis.
    """
    g = w.grid
    nperseg = min(nperseg, g.num_samples)
    f, t, p = sps.spectrogram(w.samples, fs=g.sample_rate, window="hann", nperseg=nperseg,
                              noverlap=int(round(overlap * nperseg)),
                              return_onesided=False, mode="psd", detrend=False)
    order = np.argsort(f, kind="stable")
    return t + g.t0, f[order], p[order]


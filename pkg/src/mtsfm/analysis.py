"""Correlation functions, ambiguity surfaces and scalar waveform metrics.

Correlations follow the symmetric convention

    R_mn(tau) = int s_m(t - tau/2) s_n*(t + tau/2) dt,

which for sampled pulses reduces to ``sum_n s_m[n] s_n*[n + k] dt`` at
``tau = k dt``. Closed forms are expressed through the GBF coefficients and
hold for rectangular windows only.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import (GbfCoefficients, MetricsReport, SampledWaveform, WaveformError,
                   WaveformParams, next_pow2, to_db)
from .synthesis import (modulation_function, spectrum_closed_form, spectrum_numeric,
                        swept_bandwidth)

NULL_THRESHOLD_DB = -10.0
COEFF_TRIM = 1e-12


class CorrelationKind(str, enum.Enum):
    AUTO = "auto"
    CROSS = "cross"


@dataclass(frozen=True, eq=False)
class CorrelationResult:
    delays: np.ndarray
    values: np.ndarray
    kind: CorrelationKind
    duration: float

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def power_db(self, floor_db: float = -100.0) -> np.ndarray:
        return to_db(self.power, floor_db)

    def one_sided(self) -> Tuple[np.ndarray, np.ndarray]:
        """Nonnegative delays and ``|R|^2`` there."""
        keep = self.delays >= 0.0
        return self.delays[keep], self.power[keep]


@dataclass(frozen=True, eq=False)
class AmbiguitySurface:
    delays: np.ndarray
    dopplers: np.ndarray
    values: np.ndarray  # shape (len(dopplers), len(delays))

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def volume(self) -> float:
        """``sum |chi|^2 dtau dnu`` over the uniform grid."""
        dtau = float(self.delays[1] - self.delays[0])
        dnu = float(self.dopplers[1] - self.dopplers[0])
        return float(np.sum(self.power) * dtau * dnu)


@dataclass(frozen=True)
class IsrResult:
    value: float
    tau_m: float
    mainlobe_area: float
    sidelobe_area: float
    null_found: bool

    @property
    def db(self) -> float:
        return float(to_db(self.value, floor_db=-np.inf)) if self.value > 0 else -np.inf


# ---------------------------------------------------------------- numeric path

def correlation_lags(n: int, dt: float) -> np.ndarray:
    return np.arange(-n, n + 1) * dt


def ccf_numeric(w1: SampledWaveform, w2: SampledWaveform) -> CorrelationResult:
    """Sampled CCF at every lag ``k dt`` for ``k = -N..N`` via FFT correlation."""
    if not w1.grid.matches(w2.grid):
        raise WaveformError("ccf_numeric needs waveforms on identical grids")
    g = w1.grid
    n = g.num_samples
    vals = _xcorr(w1.samples, w2.samples) * g.dt
    kind = CorrelationKind.AUTO if (w1 is w2 or np.array_equal(w1.samples, w2.samples)) \
        else CorrelationKind.CROSS
    return CorrelationResult(correlation_lags(n, g.dt), vals, kind, g.duration)


def _xcorr(s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    # out[k + N] = sum_n s1[n] conj(s2[n + k]),  k = -N..N
    n = s1.shape[-1]
    size = next_pow2(2 * n)
    x1 = np.fft.fft(s1, size, axis=-1)
    x2 = np.fft.fft(s2, size, axis=-1)
    # r[m] = sum_n s1[n + m] conj(s2[n]), so lag k sits at r[-k mod size]
    r = np.fft.ifft(x1 * np.conj(x2), axis=-1)
    return r[..., (-np.arange(-n, n + 1)) % size]


def ambiguity_numeric(w1: SampledWaveform, w2: SampledWaveform,
                      dopplers: Optional[Sequence[float]] = None,
                      max_lag: Optional[int] = None) -> AmbiguitySurface:
    """Sampled cross-ambiguity function.

    Args:
        w1, w2: Waveforms on identical grids.
        dopplers: Doppler shifts in Hz. If omitted, the full periodic Doppler
            span ``[-1/(2 dt), 1/(2 dt))`` is evaluated by FFT at spacing
            ``1/(2 N dt)``; on that grid the surface volume is exactly one for
            unit-energy inputs.
        max_lag: Largest ``|k|`` in samples (default ``N``).
    """
    if not w1.grid.matches(w2.grid):
        raise WaveformError("ambiguity_numeric needs waveforms on identical grids")
    g = w1.grid
    n = g.num_samples
    max_lag = n if max_lag is None else int(max_lag)
    lags = np.arange(-max_lag, max_lag + 1)
    t = g.times
    s1 = w1.samples
    s2c = np.conj(w2.samples)
    prods = np.zeros((lags.size, n), dtype=complex)
    for i, k in enumerate(lags):
        if k >= 0:
            prods[i, :n - k] = s1[:n - k] * s2c[k:]
        else:
            prods[i, -k:] = s1[-k:] * s2c[:n + k]
    delays = lags * g.dt
    if dopplers is None:
        size = 2 * n
        spec = np.fft.fftshift(np.fft.ifft(prods, size, axis=1) * size, axes=1)
        dopplers = np.fft.fftshift(np.fft.fftfreq(size, g.dt))
        # samples start at t[0]; half-delay term of the symmetric convention
        phase = np.exp(2j * np.pi * np.outer(dopplers, t[0] + 0.5 * delays))
        vals = spec.T * phase * g.dt
    else:
        dopplers = np.asarray(dopplers, dtype=float)
        kern = np.exp(2j * np.pi * np.outer(dopplers, t))
        vals = (kern @ prods.T) * np.exp(1j * np.pi * np.outer(dopplers, delays)) * g.dt
    return AmbiguitySurface(delays, np.asarray(dopplers), vals)


# ---------------------------------------------------------------- closed forms

def _require_rect(params: WaveformParams, what: str) -> None:
    if not params.taper.is_rectangular:
        raise WaveformError(f"{what} assumes a rectangular window; got {params.taper.kind.value} taper")


def _significant(coeffs: GbfCoefficients) -> Tuple[np.ndarray, np.ndarray]:
    big = np.nonzero(np.abs(coeffs.values) > COEFF_TRIM)[0]
    if big.size == 0:
        return coeffs.orders[:1], coeffs.values[:1] * 0
    sl = slice(big[0], big[-1] + 1)
    return coeffs.orders[sl], coeffs.values[sl]


def _lag_products(c1: GbfCoefficients, c2: GbfCoefficients, duration: float,
                  delays: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Doppler-independent part of the double sum, grouped by ``d = l - l'``.

    Returns ``(d, G)`` with ``G[d, tau] = sum_l' c1[l'+d] c2*[l']
    exp(-j pi (2 l' + d) tau / T)``.
    """
    l1, v1 = _significant(c1)
    l2, v2 = _significant(c2)
    d = np.arange(l1[0] - l2[-1], l1[-1] - l2[0] + 1)
    pos = d[:, None] + l2[None, :] - l1[0]
    ok = (pos >= 0) & (pos < l1.size)
    h = np.where(ok, v1[np.clip(pos, 0, l1.size - 1)], 0.0) * np.conj(v2)[None, :]
    steer = np.exp(-2j * np.pi * np.outer(l2, delays) / duration)
    g = (h @ steer) * np.exp(-1j * np.pi * np.outer(d, delays) / duration)
    return d, g


def _caf_rows(d: np.ndarray, g: np.ndarray, duration: float, delays: np.ndarray,
              doppler: float) -> np.ndarray:
    frac = np.clip((duration - np.abs(delays)) / duration, 0.0, None)
    kern = np.sinc(frac[None, :] * (doppler * duration + d[:, None]))
    return frac * np.sum(kern * g, axis=0)


def ccf_closed_form(coeffs1: GbfCoefficients, coeffs2: GbfCoefficients,
                    params: WaveformParams, delays) -> CorrelationResult:
    """Double GBF sum for the CCF of two rect-window MTSFM pulses of equal ``T``."""
    _require_rect(params, "closed-form CCF")
    delays = np.asarray(delays, dtype=float)
    d, g = _lag_products(coeffs1, coeffs2, params.duration, delays)
    vals = _caf_rows(d, g, params.duration, delays, 0.0)
    kind = CorrelationKind.AUTO if coeffs1 is coeffs2 else CorrelationKind.CROSS
    return CorrelationResult(delays, vals, kind, params.duration)


def acf_closed_form(coeffs: GbfCoefficients, params: WaveformParams, delays) -> CorrelationResult:
    return ccf_closed_form(coeffs, coeffs, params, delays)


def ambiguity_surface(coeffs1: GbfCoefficients, coeffs2: GbfCoefficients,
                      params: WaveformParams, delays, dopplers) -> AmbiguitySurface:
    """Closed-form CAF on a delay x Doppler grid (rect window only)."""
    _require_rect(params, "closed-form ambiguity function")
    delays = np.asarray(delays, dtype=float)
    dopplers = np.asarray(dopplers, dtype=float)
    d, g = _lag_products(coeffs1, coeffs2, params.duration, delays)
    vals = np.stack([_caf_rows(d, g, params.duration, delays, nu) for nu in dopplers])
    return AmbiguitySurface(delays, dopplers, vals)


def default_dopplers(duration: float, span: float = 20.0, step: float = 0.25) -> np.ndarray:
    """Doppler axis ``[-span/T, span/T]`` at ``step/T`` spacing."""
    n = int(round(span / step))
    return np.arange(-n, n + 1) * (step / duration)


# ---------------------------------------------------------------- metrics

def _covers_support(r: CorrelationResult) -> bool:
    T = r.duration
    step = float(np.min(np.diff(r.delays))) if r.delays.size > 1 else T
    tol = 0.5 * step + 1e-12 * T
    return r.delays[0] <= -T + tol and r.delays[-1] >= T - tol


def ccf_area(r: CorrelationResult) -> float:
    """Trapezoidal ``int_{-T}^{T} |R(tau)|^2 dtau``."""
    if not _covers_support(r):
        raise WaveformError("ccf_area needs delays covering [-T, T]")
    return float(np.trapezoid(r.power, r.delays))


def find_first_null(r: CorrelationResult,
                    threshold_db: float = NULL_THRESHOLD_DB) -> Tuple[float, bool]:
    """First local minimum of ``|R|^2`` below ``threshold_db`` for ``tau > 0``.

    Returns:
        (tau_m, found). When no interior null exists ``tau_m`` is the support
        edge ``T`` and ``found`` is False.
    """
    tau, p = r.one_sided()
    floor = 10.0 ** (threshold_db / 10.0) * max(float(p[0]), 1e-300)
    d = np.diff(p)
    # i is a discrete local minimum when the slope turns from falling to rising
    cand = np.nonzero((d[:-1] < 0) & (d[1:] >= 0))[0] + 1
    cand = cand[p[cand] < floor]
    if cand.size == 0:
        return r.duration, False
    i = int(cand[0])
    y0, y1, y2 = p[i - 1], p[i], p[i + 1]
    den = y0 - 2.0 * y1 + y2
    shift = 0.5 * (y0 - y2) / den if den > 0 else 0.0
    step = tau[i + 1] - tau[i]
    return float(tau[i] + np.clip(shift, -0.5, 0.5) * step), True


def first_null(r: CorrelationResult, threshold_db: float = NULL_THRESHOLD_DB) -> float:
    if r.kind is not CorrelationKind.AUTO:
        raise WaveformError("first_null is defined for autocorrelations")
    return find_first_null(r, threshold_db)[0]


def _split_areas(tau: np.ndarray, p: np.ndarray, tau_m: float) -> Tuple[float, float]:
    p_m = float(np.interp(tau_m, tau, p))
    inner = tau < tau_m
    t_in = np.append(tau[inner], tau_m)
    p_in = np.append(p[inner], p_m)
    t_out = np.insert(tau[~inner], 0, tau_m)
    p_out = np.insert(p[~inner], 0, p_m)
    return float(np.trapezoid(p_in, t_in)), float(np.trapezoid(p_out, t_out))


def isr_exact(r: CorrelationResult, tau_m: Optional[float] = None,
              threshold_db: float = NULL_THRESHOLD_DB) -> IsrResult:
    """Sidelobe area beyond the first null over the mainlobe area.

    ``tau_m`` may be pinned by the caller (the optimizer freezes it); by
    default it is detected with :func:`find_first_null`. A pulse whose only
    null is the support edge has ISR 0 and ``null_found=False``.
    """
    if r.kind is not CorrelationKind.AUTO:
        raise WaveformError("ISR is defined for autocorrelations")
    found = True
    if tau_m is None:
        tau_m, found = find_first_null(r, threshold_db)
    tau, p = r.one_sided()
    main, side = _split_areas(tau, p, tau_m)
    if main <= 0.0:
        raise WaveformError("mainlobe area is zero")
    return IsrResult(side / main, float(tau_m), main, side, found)


def rms_bandwidth_sq(params: WaveformParams) -> float:
    """Closed-form squared RMS bandwidth in rad^2/s^2.

    ``beta^2 = (2 pi)^2 * mean(m(t)^2) = (2 pi^2 / T^2) * sum_k k^2 index_k^2``
    for either symmetry with ``a0 = 0``.
    """
    if params.a0 != 0.0:
        raise WaveformError("closed-form RMS bandwidth assumes a0 = 0")
    k = params.harmonics
    return float(2.0 * np.pi ** 2 / params.duration ** 2 * np.sum((k * params.indices) ** 2))


def rms_bandwidth_sq_numeric(w: SampledWaveform) -> float:
    """``(2 pi)^2 sum f^2 |S|^2 / sum |S|^2`` over the pulse's own DFT bins.

    The unpadded DFT treats the pulse as one period, so the rect window's
    sinc tails (whose second moment diverges) do not enter.
    """
    g = w.grid
    spec = np.abs(np.fft.fft(w.samples)) ** 2
    f = np.fft.fftfreq(g.num_samples, g.dt)
    return float((2.0 * np.pi) ** 2 * np.sum(f ** 2 * spec) / np.sum(spec))


def fourth_power_area(coeffs: GbfCoefficients, params: WaveformParams,
                      guard_orders: int = 20, per_bin: int = 8) -> float:
    """``int |S(f)|^4 df`` from the closed-form spectrum."""
    orders, _ = _significant(coeffs)
    T = params.duration
    lo, hi = orders[0] - guard_orders, orders[-1] + guard_orders
    freqs = np.arange(lo * per_bin, hi * per_bin + 1) / (per_bin * T)
    spec = spectrum_closed_form(coeffs, params, freqs)
    return float(np.trapezoid(np.abs(spec.values) ** 4, freqs))


def isr_approx(coeffs: GbfCoefficients, params: WaveformParams) -> float:
    """``(2 beta_rms / pi) * int |S(f)|^4 df``."""
    _require_rect(params, "ISR approximation")
    beta_sq = rms_bandwidth_sq(params)
    if beta_sq <= 0.0:
        raise WaveformError("ISR approximation undefined for zero RMS bandwidth")
    return 2.0 * math.sqrt(beta_sq) / np.pi * fourth_power_area(coeffs, params)


def mainlobe_area_approx(beta_sq: float) -> float:
    """Approximate mainlobe area ``pi / (2 beta_rms)`` in seconds."""
    if beta_sq <= 0.0:
        raise WaveformError("mainlobe approximation undefined for zero RMS bandwidth")
    return np.pi / (2.0 * math.sqrt(beta_sq))


def papr(w: SampledWaveform) -> float:
    p = np.abs(w.samples) ** 2
    mean = float(np.mean(p))
    if mean <= 0.0:
        raise WaveformError("PAPR of a zero signal is undefined")
    return float(np.max(p) / mean)


def swept_band(params: WaveformParams) -> Tuple[float, float]:
    """Lowest and highest instantaneous frequency of the pulse, in Hz."""
    t = np.linspace(-0.5 * params.duration, 0.5 * params.duration,
                    max(64 * params.num_harmonics, 4096) + 1)
    m = modulation_function(params, t)
    centre = 0.5 * (float(np.max(m)) + float(np.min(m)))
    half = 0.5 * swept_bandwidth(params)
    return centre - half, centre + half


def spectral_efficiency(w: SampledWaveform, band: Optional[Tuple[float, float]] = None,
                        guard: float = 0.0, pad: int = 8) -> float:
    """Fraction of the pulse energy inside ``band`` (Hz), widened by ``guard``.

    Without an explicit band the swept band of ``w.params`` is used.
    """
    if band is None:
        if w.params is None:
            raise WaveformError("default band needs the waveform parameters")
        lo, hi = swept_band(w.params)
        if hi - lo <= 0.0:
            raise WaveformError("zero swept bandwidth: pass an explicit band")
    else:
        lo, hi = band
        if hi <= lo:
            raise WaveformError("band must be a nonempty interval")
    lo, hi = lo - guard, hi + guard
    spec = spectrum_numeric(w, pad)
    eds = spec.eds
    inside = (spec.freqs >= lo) & (spec.freqs <= hi)
    return float(min(1.0, np.sum(eds[inside]) / np.sum(eds)))


def metrics_report(w: SampledWaveform, partner: Optional[SampledWaveform] = None,
                   guard: Optional[float] = None) -> MetricsReport:
    """All scalar metrics of one waveform; ``ccf_area`` is against ``partner``
    when given, otherwise the ACF area."""
    params = w.params
    acf = ccf_numeric(w, w)
    isr = isr_exact(acf)
    area = ccf_area(ccf_numeric(w, partner)) if partner is not None else ccf_area(acf)
    bw = swept_bandwidth(params) if params is not None else 0.0
    if params is not None and params.a0 == 0.0:
        beta_sq = rms_bandwidth_sq(params)
    else:
        beta_sq = rms_bandwidth_sq_numeric(w)
    if guard is None:
        guard = 1.0 / w.grid.duration
    se = spectral_efficiency(w, guard=guard) if bw > 0 else 1.0
    return MetricsReport(isr=isr.value, ccf_area=area, rms_bandwidth_sq=beta_sq,
                         papr=papr(w), spectral_efficiency=se,
                         mainlobe_halfwidth=isr.tau_m, swept_bandwidth=bw)

"""Generalized Bessel function (GBF) coefficients of MTSFM waveforms.

The rectangular-window MTSFM pulse is a complex Fourier series on
``[-T/2, T/2]`` whose coefficients are K-dimensional cylindrical GBFs.
Two independent routes are provided:

* :func:`gbf_via_fft` samples ``exp(j*phi(t))`` over one period and takes a
  single FFT. This is the production path.
* :func:`gbf_via_convolution` builds the nested GBF sum by convolving the
  ordinary-Bessel (Jacobi-Anger) sequences of each harmonic. This is the
  oracle used to check the FFT path.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .core import GbfCoefficients, Symmetry, WaveformError, WaveformParams, next_pow2

MAX_ORACLE_HARMONICS = 8
BESSEL_CUTOFF = 1e-14
AUTO_TAIL = 1e-20


class TruncationError(WaveformError):
    """Requested order range would cut off significant coefficient energy."""


def _bessel_series(n_max: int, x: float) -> np.ndarray:
    # power series, used for |x| < 1
    out = np.zeros(n_max + 1)
    half = 0.5 * x
    for n in range(n_max + 1):
        term = half ** n / math.factorial(n)
        total = term
        m = 0
        while abs(term) > 1e-18 * max(abs(total), 1e-300):
            m += 1
            term *= -(half * half) / (m * (m + n))
            total += term
            if m > 200:
                break
        out[n] = total
    return out


def bessel_jn(n_max: int, x: float) -> np.ndarray:
    """Ordinary Bessel functions ``J_0(x) .. J_{n_max}(x)`` for real ``x``.

    Uses Miller's backward recurrence normalized by
    ``J_0 + 2 * sum(J_2k) = 1``; small arguments use the power series.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    x = float(x)
    if x == 0.0:
        out = np.zeros(n_max + 1)
        out[0] = 1.0
        return out
    sign = 1.0
    if x < 0.0:
        x, sign = -x, -1.0
    if x < 1.0:
        out = _bessel_series(n_max, x)
    else:
        top = max(n_max, int(math.ceil(x)))
        start = top + 30 + int(math.sqrt(160.0 * top))
        start += start % 2
        vals = np.zeros(start + 2)
        vals[start] = 1e-30
        for k in range(start, 0, -1):
            vals[k - 1] = (2.0 * k / x) * vals[k] - vals[k + 1]
            if abs(vals[k - 1]) > 1e250:
                vals[k - 1:] *= 1e-250
        norm = vals[0] + 2.0 * np.sum(vals[2:start + 1:2])
        out = vals[:n_max + 1] / norm
    if sign < 0:
        out = out * (-1.0) ** np.arange(n_max + 1)
    return out


def bessel_sequence(x: float) -> np.ndarray:
    """``J_m(x)`` for ``m = -M..M`` with ``M`` the last order above the cutoff."""
    n_max = int(math.ceil(abs(x))) + 40
    pos = bessel_jn(n_max, x)
    big = np.nonzero(np.abs(pos) >= BESSEL_CUTOFF)[0]
    m_top = int(big[-1]) if big.size else 0
    pos = pos[:m_top + 1]
    neg = pos[1:][::-1] * (-1.0) ** np.arange(m_top, 0, -1)
    return np.concatenate([neg, pos])


def index_sum(indices: Sequence[float]) -> float:
    idx = np.abs(np.asarray(indices, dtype=float))
    return float(np.sum(np.arange(1, idx.size + 1) * idx))


def truncation_bound(indices: Sequence[float]) -> int:
    """Smallest admissible ``max_order``: ``ceil(sum k|index_k|) + 8``."""
    return int(math.ceil(index_sum(indices))) + 8


def default_max_order(indices: Sequence[float]) -> int:
    s = index_sum(indices)
    return int(math.ceil(s)) + max(8, int(math.ceil(0.1 * s)))


def order_offset(params: WaveformParams) -> tuple[float, bool]:
    """Spectral shift ``a0*T/2`` in orders, and whether it is an integer."""
    shift = 0.5 * params.a0 * params.duration
    return shift, abs(shift - round(shift)) < 1e-9


def _unit_phase(indices: np.ndarray, symmetry: Symmetry, theta: np.ndarray) -> np.ndarray:
    k = np.arange(1, indices.size + 1)
    arg = np.outer(theta, k)
    if symmetry is Symmetry.EVEN:
        return np.sin(arg) @ indices
    return -(np.cos(arg) @ indices)


def gbf_via_fft(params: WaveformParams, max_order: Optional[int] = None) -> GbfCoefficients:
    """Fourier-series coefficients of ``exp(j*phi(t))`` by a single FFT.

    The taper in ``params`` is ignored: GBF coefficients describe the
    untapered phase.

    Args:
        params: Waveform parameters.
        max_order: Largest ``|l|`` (relative to the ``a0`` offset) to keep.
            By default starts from the Carson-style bound plus a 10% margin
            and doubles until the truncation tail is at most 1e-20; many
            weak high harmonics spread energy past the Carson bound.

    Returns:
        Coefficients centered on the ``a0`` offset order. When ``a0*T/2`` is
        not an integer the phase is no longer periodic over ``T``; the ramp is
        folded into the FFT input and ``non_periodic`` is set.

    Raises:
        TruncationError: ``max_order`` is below ``ceil(sum k|index_k|) + 8``.
    """
    idx = params.indices
    bound = truncation_bound(idx)
    if max_order is None:
        order = default_max_order(idx)
        while True:
            coeffs = _fft_coefficients(params, order)
            if coeffs.truncation_tail <= AUTO_TAIL or coeffs.non_periodic or order > 64 * bound:
                return coeffs
            order *= 2
    if max_order < bound:
        raise TruncationError(
            f"max_order={max_order} is below the truncation bound L*={bound}")
    return _fft_coefficients(params, max_order)


def _fft_coefficients(params: WaveformParams, max_order: int) -> GbfCoefficients:
    idx = params.indices
    shift, integral = order_offset(params)
    center = int(round(shift))
    m = next_pow2(max(4 * (max_order + 1), 256))
    theta = 2.0 * np.pi * (-0.5 + np.arange(m) / m)
    phase = _unit_phase(idx, params.symmetry, theta)
    if not integral:
        # ramp relative to the nearest integer order
        phase = phase + (shift - center) * theta
    spec = np.fft.fft(np.exp(1j * phase)) / m
    orders = np.arange(-max_order, max_order + 1)
    # t_n starts at -T/2, hence the (-1)^l factor
    vals = spec[orders % m] * (-1.0) ** orders
    # energy in the discarded bins; 1 - sum|c|^2 cancels below ~1e-16
    dropped = np.ones(m, dtype=bool)
    dropped[orders % m] = False
    tail = float(np.sum(np.abs(spec[dropped]) ** 2))
    return GbfCoefficients(center - max_order, center + max_order, vals, tail, not integral)


def gbf_via_convolution(indices: Sequence[float], symmetry: Symmetry | str,
                        max_order: Optional[int] = None) -> GbfCoefficients:
    """Nested-sum GBF coefficients by sequential convolution.

    Harmonic ``k`` contributes the Jacobi-Anger sequence of its index at
    order spacing ``k``: ``J_m(alpha_k)`` for even symmetry and
    ``(-j)^m J_m(beta_k)`` for odd symmetry. Exact up to dropping Bessel
    terms below 1e-14. Without ``max_order`` every reachable order is kept.

    Raises:
        WaveformError: more than eight harmonics.
    """
    idx = np.asarray(indices, dtype=float).reshape(-1)
    symmetry = Symmetry(symmetry)
    if idx.size > MAX_ORACLE_HARMONICS:
        raise WaveformError(
            f"convolution oracle supports K <= {MAX_ORACLE_HARMONICS}, got K={idx.size}")
    acc = np.ones(1, dtype=complex)
    lo = 0
    for k, x in enumerate(idx, start=1):
        seq = bessel_sequence(x).astype(complex)
        m_top = (seq.size - 1) // 2
        if symmetry is Symmetry.ODD:
            seq = seq * (-1j) ** (np.arange(-m_top, m_top + 1) % 4)
        spread = np.zeros(2 * m_top * k + 1, dtype=complex)
        spread[::k] = seq
        acc = np.convolve(acc, spread)
        lo -= m_top * k
    full = GbfCoefficients(lo, lo + acc.size - 1, acc)
    if max_order is None:
        max_order = -lo
    vals = full.window(-max_order, max_order)
    tail = max(0.0, 1.0 - float(np.sum(np.abs(vals) ** 2)))
    return GbfCoefficients(-max_order, max_order, vals, tail)

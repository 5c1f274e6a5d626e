"""Shared value types and sampling grids for MTSFM waveforms.

Time is always centered: a waveform of duration ``T`` lives on
``[-T/2, T/2]``. Samples are taken at the centers of ``N`` equal cells
spanning that interval, so discrete correlation sums are midpoint-rule
quadratures of the continuous integrals.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

MIN_SAMPLES = 256


class Symmetry(str, enum.Enum):
    EVEN = "even"
    ODD = "odd"


class TaperKind(str, enum.Enum):
    RECTANGULAR = "rectangular"
    TUKEY = "tukey"


class WaveformError(ValueError):
    """Raised for invalid waveform parameters or unsupported operations."""


@dataclass(frozen=True)
class TaperSpec:
    kind: TaperKind = TaperKind.RECTANGULAR
    tukey_alpha: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", TaperKind(self.kind))
        if self.kind is TaperKind.TUKEY and not 0.0 <= self.tukey_alpha <= 1.0:
            raise WaveformError(f"tukey_alpha must lie in [0, 1], got {self.tukey_alpha}")

    @property
    def is_rectangular(self) -> bool:
        return self.kind is TaperKind.RECTANGULAR or self.tukey_alpha == 0.0

    @classmethod
    def tukey(cls, alpha: float) -> "TaperSpec":
        return cls(TaperKind.TUKEY, float(alpha))


RECT = TaperSpec()


@dataclass(frozen=True, eq=False)
class WaveformParams:
    """Design parameters of one MTSFM waveform.

    Attributes:
        duration: Pulse length ``T`` in seconds.
        indices: Modulation indices, ``alpha_k`` for even symmetry or
            ``beta_k`` for odd symmetry, harmonic ``k = 1..K``.
        symmetry: Symmetry of the modulation function.
        a0: Constant term of the even modulation function in Hz; the
            instantaneous frequency is offset by ``a0 / 2``.
        taper: Amplitude window.
    """

    duration: float
    indices: np.ndarray
    symmetry: Symmetry = Symmetry.EVEN
    a0: float = 0.0
    taper: TaperSpec = RECT

    def __post_init__(self):
        idx = np.array(self.indices, dtype=float).reshape(-1)
        if idx.size < 1:
            raise WaveformError("at least one modulation index is required")
        if not np.all(np.isfinite(idx)):
            raise WaveformError("modulation indices must be finite")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise WaveformError(f"duration must be positive, got {self.duration}")
        if not math.isfinite(self.a0):
            raise WaveformError("a0 must be finite")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "symmetry", Symmetry(self.symmetry))
        object.__setattr__(self, "duration", float(self.duration))
        object.__setattr__(self, "a0", float(self.a0))

    @property
    def num_harmonics(self) -> int:
        return self.indices.size

    @property
    def harmonics(self) -> np.ndarray:
        return np.arange(1, self.num_harmonics + 1)

    def replace(self, **changes) -> "WaveformParams":
        kw = dict(duration=self.duration, indices=self.indices, symmetry=self.symmetry,
                  a0=self.a0, taper=self.taper)
        kw.update(changes)
        return WaveformParams(**kw)

    def with_indices(self, indices: Sequence[float]) -> "WaveformParams":
        return self.replace(indices=indices)

    def rectangular(self) -> "WaveformParams":
        return self.replace(taper=RECT)

    def same_as(self, other: "WaveformParams") -> bool:
        return (self.duration == other.duration and self.symmetry is other.symmetry
                and self.a0 == other.a0 and self.taper == other.taper
                and np.array_equal(self.indices, other.indices))


@dataclass(frozen=True)
class SamplingGrid:
    """Uniform grid of ``num_samples`` cells of width ``dt`` starting at ``t0``.

    Cell ``n`` covers ``[t0 + n*dt, t0 + (n+1)*dt)``; the waveform is sampled
    at the cell center.
    """

    num_samples: int
    dt: float
    t0: float
    degenerate: bool = False

    def __post_init__(self):
        if self.num_samples < 2:
            raise WaveformError("a sampling grid needs at least two samples")
        if not self.dt > 0:
            raise WaveformError("dt must be positive")

    @classmethod
    def for_duration(cls, duration: float, num_samples: int,
                     degenerate: bool = False) -> "SamplingGrid":
        return cls(int(num_samples), duration / num_samples, -duration / 2.0, degenerate)

    @property
    def duration(self) -> float:
        return self.num_samples * self.dt

    @property
    def edges(self) -> np.ndarray:
        return self.t0 + np.arange(self.num_samples) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + (np.arange(self.num_samples) + 0.5) * self.dt

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    def matches(self, other: "SamplingGrid") -> bool:
        return (self.num_samples == other.num_samples
                and math.isclose(self.dt, other.dt, rel_tol=1e-12)
                and math.isclose(self.t0, other.t0, rel_tol=1e-12, abs_tol=1e-15))


def unit_energy(samples: np.ndarray, dt: float) -> np.ndarray:
    energy = float(np.sum(np.abs(samples) ** 2) * dt)
    if energy <= 0.0:
        raise WaveformError("cannot normalize a zero-energy signal")
    return samples / math.sqrt(energy)


@dataclass(frozen=True, eq=False)
class SampledWaveform:
    grid: SamplingGrid
    samples: np.ndarray
    params: Optional[WaveformParams] = None

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex).reshape(-1)
        if s.size != self.grid.num_samples:
            raise WaveformError("sample count does not match grid")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.grid.dt)

    def normalized(self) -> "SampledWaveform":
        return SampledWaveform(self.grid, unit_energy(self.samples, self.grid.dt), self.params)


@dataclass(frozen=True, eq=False)
class GbfCoefficients:
    """Fourier-series coefficients ``c_l`` for orders ``min_order..max_order``."""

    min_order: int
    max_order: int
    values: np.ndarray
    truncation_tail: float = 0.0
    non_periodic: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=complex).reshape(-1)
        if v.size != self.max_order - self.min_order + 1:
            raise WaveformError("coefficient count does not match order range")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def orders(self) -> np.ndarray:
        return np.arange(self.min_order, self.max_order + 1)

    def __getitem__(self, order: int) -> complex:
        if order < self.min_order or order > self.max_order:
            return 0.0j
        return complex(self.values[order - self.min_order])

    def window(self, min_order: int, max_order: int) -> np.ndarray:
        """Coefficients on ``min_order..max_order``, zero outside the stored range."""
        out = np.zeros(max_order - min_order + 1, dtype=complex)
        lo, hi = max(min_order, self.min_order), min(max_order, self.max_order)
        if lo <= hi:
            out[lo - min_order:hi - min_order + 1] = self.values[lo - self.min_order:hi - self.min_order + 1]
        return out

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))


def to_db(x, floor_db: float = -100.0):
    """10*log10 of a power-like quantity, clipped at ``floor_db``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(x)
    return np.maximum(out, floor_db)


@dataclass(frozen=True)
class MetricsReport:
    isr: float
    ccf_area: float
    rms_bandwidth_sq: float
    papr: float
    spectral_efficiency: float
    mainlobe_halfwidth: float
    swept_bandwidth: float

    def __post_init__(self):
        for name in ("isr", "ccf_area", "rms_bandwidth_sq", "papr",
                     "spectral_efficiency", "mainlobe_halfwidth", "swept_bandwidth"):
            if getattr(self, name) < 0:
                raise WaveformError(f"{name} must be nonnegative")
        if self.spectral_efficiency > 1.0 + 1e-12:
            raise WaveformError("spectral efficiency cannot exceed 1")

    @property
    def isr_db(self) -> float:
        return float(to_db(self.isr))

    @property
    def papr_db(self) -> float:
        return float(to_db(self.papr))

    def as_dict(self) -> dict:
        return {
            "isr": self.isr,
            "isr_db": self.isr_db,
            "ccf_area": self.ccf_area,
            "rms_bandwidth_sq": self.rms_bandwidth_sq,
            "papr": self.papr,
            "papr_db": self.papr_db,
            "spectral_efficiency": self.spectral_efficiency,
            "mainlobe_halfwidth": self.mainlobe_halfwidth,
            "swept_bandwidth": self.swept_bandwidth,
        }


def next_pow2(n: float) -> int:
    n = max(int(math.ceil(n)), 1)
    return 1 << (n - 1).bit_length()


def make_grid(params: WaveformParams, oversample: float = 16.0,
              bandwidth: Optional[float] = None) -> SamplingGrid:
    """Choose a power-of-two grid resolving the waveform's swept band.

    Args:
        params: Waveform to be sampled.
        oversample: Samples per unit of swept bandwidth, at least 2.
        bandwidth: Swept bandwidth in Hz; measured from ``params`` if omitted.

    Returns:
        Grid with ``dt <= 1 / (oversample * bandwidth)``. A zero-bandwidth
        waveform gets ``max(64 * oversample, 256)`` samples and the
        ``degenerate`` flag.
    """
    if oversample < 2:
        raise WaveformError(f"oversample must be >= 2, got {oversample}")
    T = params.duration
    if bandwidth is None:
        from .synthesis import swept_bandwidth
        bandwidth = swept_bandwidth(params)
        # the offset term moves the band off DC
        bandwidth += abs(params.a0)
    if bandwidth <= 0.0:
        n = next_pow2(max(oversample * 64, MIN_SAMPLES))
        return SamplingGrid.for_duration(T, n, degenerate=True)
    n = next_pow2(max(oversample * bandwidth * T, MIN_SAMPLES, 8 * params.num_harmonics))
    return SamplingGrid.for_duration(T, n)

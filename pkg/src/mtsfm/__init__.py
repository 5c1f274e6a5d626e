"""Multi-tone sinusoidal frequency modulated (MTSFM) radar waveforms.

Synthesis, generalized-Bessel spectra, correlation and ambiguity analysis,
and constrained design of waveform families with low auto- and
cross-correlation sidelobes.
"""
from .core import (GbfCoefficients, MetricsReport, SampledWaveform, SamplingGrid, Symmetry,
                   TaperKind, TaperSpec, WaveformError, WaveformParams, make_grid)
from .gbf import gbf_via_convolution, gbf_via_fft
from .synthesis import modulation_function, phase_function, synthesize

__version__ = "0.1.0"

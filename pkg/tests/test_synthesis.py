import math

import numpy as np
import pytest
from scipy import integrate

from mtsfm.core import SamplingGrid, Symmetry, TaperSpec, WaveformError, WaveformParams
from mtsfm.gbf import gbf_via_fft
from mtsfm.synthesis import (modulation_function, phase_function, scale_to_tbp,
                             spectrogram, spectrum_closed_form, spectrum_numeric,
                             swept_bandwidth, synthesize, time_bandwidth_product)

from conftest import seeded_waveform


def test_modulation_single_cosine():
    p = WaveformParams(1.0, [1.0])
    m = modulation_function(p, [0.0, 0.25, 0.5])
    assert np.allclose(m, [1.0, 0.0, -1.0], atol=1e-15)


def test_modulation_with_dc_term():
    p = WaveformParams(2.0, [0.0], a0=10.0)
    assert np.allclose(modulation_function(p, [-1.0, 0.3, 1.0]), 5.0)


def test_odd_modulation_is_sine():
    p = WaveformParams(1.0, [2.0], symmetry="odd")
    assert math.isclose(float(modulation_function(p, 0.25)), 2.0, rel_tol=1e-14)
    assert abs(float(modulation_function(p, 0.0))) < 1e-15


def test_phase_outside_support_rejected():
    with pytest.raises(WaveformError):
        phase_function(WaveformParams(1.0, [1.0]), [0.6])


@pytest.mark.parametrize("symmetry", ["even", "odd"])
def test_phase_derivative_matches_modulation(symmetry):
    p = seeded_waveform(5, 8, 50.0).replace(symmetry=Symmetry(symmetry))
    t = np.linspace(-0.45, 0.45, 37)
    h = 1e-6
    fd = (phase_function(p, t + h) - phase_function(p, t - h)) / (2 * h)
    ref = 2 * np.pi * modulation_function(p, t)
    scale = np.max(np.abs(ref))
    assert np.max(np.abs(fd - ref)) / scale <= 1e-6


def test_modulation_symmetry():
    p = seeded_waveform(3, 6, 40.0)
    t = np.linspace(0, 0.5, 11)
    assert np.allclose(modulation_function(p, t), modulation_function(p, -t), atol=1e-12)
    q = p.replace(symmetry=Symmetry.ODD)
    assert np.allclose(modulation_function(q, t), -modulation_function(q, -t), atol=1e-12)


def test_modulation_linear_in_indices():
    a = seeded_waveform(1, 5, 30.0)
    b = seeded_waveform(2, 5, 30.0)
    t = np.linspace(-0.5, 0.5, 21)
    both = a.with_indices(2 * a.indices - 3 * b.indices)
    lhs = modulation_function(both, t)
    rhs = 2 * modulation_function(a, t) - 3 * modulation_function(b, t)
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_rect_samples_have_constant_envelope():
    w = synthesize(seeded_waveform(4, 16, 100.0))
    mag = np.abs(w.samples)
    assert np.ptp(mag) < 1e-12
    assert math.isclose(w.energy, 1.0, rel_tol=1e-12)


def test_swept_bandwidth_single_harmonic():
    # m(t) = a cos(2 pi t / T) spans [-a, a]
    p = WaveformParams(1.0, [3.0])
    assert math.isclose(swept_bandwidth(p), 6.0, rel_tol=1e-9)


def test_scale_to_tbp_hits_target():
    p = scale_to_tbp(seeded_waveform(7, 32, 10.0), 250.0)
    assert math.isclose(time_bandwidth_product(p), 250.0, rel_tol=1e-9)


def test_scale_zero_bandwidth_rejected(cw_params):
    with pytest.raises(WaveformError):
        scale_to_tbp(cw_params, 10.0)


def test_swept_bandwidth_grid_must_resolve_harmonics():
    p = seeded_waveform(1, 64, 100.0)
    with pytest.raises(WaveformError):
        swept_bandwidth(p, SamplingGrid.for_duration(1.0, 256))


def test_spectrum_closed_form_matches_fft():
    p = seeded_waveform(11, 4, 25.0)
    w = synthesize(p, SamplingGrid.for_duration(1.0, 4096))
    num = spectrum_numeric(w, pad=4)
    keep = np.abs(num.freqs) <= 60.0
    cf = spectrum_closed_form(gbf_via_fft(p), p, num.freqs[keep])
    err = np.max(np.abs(cf.values - num.values[keep]))
    assert err <= 1e-4 * np.max(np.abs(cf.values))


def test_numeric_spectrum_parseval():
    w = synthesize(seeded_waveform(2, 16, 100.0, taper=TaperSpec.tukey(0.05)))
    assert math.isclose(spectrum_numeric(w).energy, 1.0, rel_tol=1e-9)


def test_closed_form_spectrum_of_cw_is_sinc(cw_params):
    f = np.linspace(-3.3, 3.3, 41)
    s = spectrum_closed_form(gbf_via_fft(cw_params), cw_params, f)
    assert np.allclose(s.values, np.sinc(f), atol=1e-14)


def test_closed_form_spectrum_rejects_taper(fig1_params):
    with pytest.raises(WaveformError):
        spectrum_closed_form(gbf_via_fft(fig1_params), fig1_params, [0.0, 1.0])


def test_rect_energy_in_one_over_t_band():
    # sinc^2 energy inside |f| <= 1/T, integrated by adaptive quadrature
    ref = integrate.quad(lambda f: np.sinc(f) ** 2, -1.0, 1.0, limit=200)[0]
    w = synthesize(WaveformParams(1.0, [0.0]), SamplingGrid.for_duration(1.0, 1024))
    s = spectrum_numeric(w, pad=64)
    inside = np.abs(s.freqs) <= 1.0
    assert abs(np.sum(s.eds[inside]) * s.df - ref) < 2e-3


def test_spectrogram_tracks_instantaneous_frequency():
    p = WaveformParams(1.0, [20.0])
    w = synthesize(p, SamplingGrid.for_duration(1.0, 2048))
    t, f, power = spectrogram(w)
    assert power.shape == (f.size, t.size)
    assert np.all(np.diff(f) > 0)
    assert np.all((t > -0.5) & (t < 0.5))
    peak = f[np.argmax(power, axis=0)]
    # 128-sample windows at 2048 Hz give 16 Hz bins
    assert np.max(np.abs(peak - modulation_function(p, t))) <= 16.0

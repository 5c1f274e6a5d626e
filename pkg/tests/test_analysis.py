import math

import numpy as np
import pytest
from scipy import integrate

from mtsfm.analysis import (CorrelationKind, acf_closed_form, ambiguity_numeric,
                            ambiguity_surface, ccf_area, ccf_closed_form, ccf_numeric,
                            default_dopplers, find_first_null, isr_approx, isr_exact,
                            mainlobe_area_approx, metrics_report, papr, rms_bandwidth_sq,
                            rms_bandwidth_sq_numeric, spectral_efficiency)
from mtsfm.core import (SampledWaveform, SamplingGrid, TaperSpec, WaveformError,
                        WaveformParams, make_grid, unit_energy)
from mtsfm.gbf import gbf_via_fft
from mtsfm.synthesis import synthesize

from conftest import seeded_waveform


def _direct_ccf(s1, s2, dt):
    n = s1.size
    out = np.zeros(2 * n + 1, dtype=complex)
    for k in range(-n, n + 1):
        acc = 0j
        for i in range(n):
            if 0 <= i + k < n:
                acc += s1[i] * np.conj(s2[i + k])
        out[k + n] = acc * dt
    return out


def test_ccf_matches_direct_sum(rng):
    g = SamplingGrid.for_duration(1.0, 64)
    a = SampledWaveform(g, rng.standard_normal(64) + 1j * rng.standard_normal(64))
    b = SampledWaveform(g, rng.standard_normal(64) + 1j * rng.standard_normal(64))
    r = ccf_numeric(a, b)
    assert r.kind is CorrelationKind.CROSS
    assert np.max(np.abs(r.values - _direct_ccf(a.samples, b.samples, g.dt))) <= 1e-10


def test_cw_acf_is_triangle(cw_params):
    w = synthesize(cw_params, SamplingGrid.for_duration(1.0, 256))
    r = ccf_numeric(w, w)
    assert r.kind is CorrelationKind.AUTO
    assert np.allclose(r.values, 1.0 - np.abs(r.delays), atol=1e-12)


def test_mismatched_grids_rejected():
    a = synthesize(WaveformParams(1.0, [1.0]), SamplingGrid.for_duration(1.0, 256))
    b = synthesize(WaveformParams(1.0, [1.0]), SamplingGrid.for_duration(1.0, 512))
    with pytest.raises(WaveformError):
        ccf_numeric(a, b)


@pytest.mark.parametrize("seed", [3, 8])
def test_closed_form_acf_matches_numeric(seed):
    p = seeded_waveform(seed, 4, 25.0)
    w = synthesize(p)
    num = ccf_numeric(w, w)
    cf = acf_closed_form(gbf_via_fft(p), p, num.delays)
    assert np.max(np.abs(cf.values - num.values)) <= 1e-3


def test_closed_form_ccf_matches_numeric():
    p1, p2 = seeded_waveform(1, 6, 40.0), seeded_waveform(2, 6, 40.0)
    grid = SamplingGrid.for_duration(1.0, 2048)
    num = ccf_numeric(synthesize(p1, grid), synthesize(p2, grid))
    cf = ccf_closed_form(gbf_via_fft(p1), gbf_via_fft(p2), p1, num.delays)
    assert np.max(np.abs(cf.values - num.values)) <= 1e-3


def test_disjoint_bands_barely_correlate():
    # a0 = 400 Hz shifts the second pulse by 200 Hz, far outside the 20 Hz sweeps
    grid = SamplingGrid.for_duration(1.0, 2048)
    p1 = seeded_waveform(4, 4, 20.0)
    p2 = seeded_waveform(5, 4, 20.0).replace(a0=400.0)
    r = ccf_numeric(synthesize(p1, grid), synthesize(p2, grid))
    assert np.max(r.power_db()) <= -30.0


def test_cauchy_schwarz_bound():
    grid = make_grid(seeded_waveform(1, 16, 100.0))
    a = synthesize(seeded_waveform(1, 16, 100.0), grid)
    b = synthesize(seeded_waveform(2, 16, 100.0), grid)
    assert np.max(np.abs(ccf_numeric(a, b).values)) <= 1.0 + 1e-12
    assert np.max(np.abs(ccf_numeric(a, a).values)) <= 1.0 + 1e-12


def test_ccf_area_of_cw(cw_params):
    w = synthesize(cw_params, SamplingGrid.for_duration(1.0, 1024))
    assert math.isclose(ccf_area(ccf_numeric(w, w)), 2.0 / 3.0, rel_tol=1e-5)


def test_ccf_area_symmetric():
    grid = make_grid(seeded_waveform(1, 16, 100.0))
    a = synthesize(seeded_waveform(6, 16, 100.0), grid)
    b = synthesize(seeded_waveform(7, 16, 100.0), grid)
    assert math.isclose(ccf_area(ccf_numeric(a, b)), ccf_area(ccf_numeric(b, a)),
                        rel_tol=1e-12)


def test_numeric_af_volume_is_one():
    w = synthesize(seeded_waveform(2, 8, 30.0), SamplingGrid.for_duration(1.0, 128))
    af = ambiguity_numeric(w, w)
    assert math.isclose(af.volume(), 1.0, rel_tol=1e-9)


def test_zero_doppler_row_is_ccf():
    grid = SamplingGrid.for_duration(1.0, 256)
    a = synthesize(seeded_waveform(1, 4, 20.0), grid)
    b = synthesize(seeded_waveform(2, 4, 20.0), grid)
    af = ambiguity_numeric(a, b, dopplers=[0.0])
    assert np.allclose(af.values[0], ccf_numeric(a, b).values, atol=1e-13)
    full = ambiguity_numeric(a, b)
    row = full.values[np.argmin(np.abs(full.dopplers))]
    assert np.allclose(np.abs(row), np.abs(ccf_numeric(a, b).values), atol=1e-12)


def test_cw_ambiguity_formula(cw_params):
    w = synthesize(cw_params, SamplingGrid.for_duration(1.0, 512))
    nu = np.array([-2.5, -0.7, 0.0, 1.3, 3.0])
    af = ambiguity_numeric(w, w, dopplers=nu)
    u = 1.0 - np.abs(af.delays)
    ref = u[None, :] * np.abs(np.sinc(np.outer(nu, u)))
    assert np.max(np.abs(np.abs(af.values) - ref)) <= 1e-4


def test_closed_form_af_matches_numeric():
    p = seeded_waveform(9, 4, 25.0)
    w = synthesize(p)
    nu = np.linspace(-5.0, 5.0, 9)
    num = ambiguity_numeric(w, w, dopplers=nu, max_lag=w.grid.num_samples // 2)
    c = gbf_via_fft(p)
    cf = ambiguity_surface(c, c, p, num.delays, nu)
    assert np.max(np.abs(cf.values - num.values)) <= 1e-3


def test_thumbtack_pedestal(fig1_params):
    w = synthesize(fig1_params)
    tau_m = find_first_null(ccf_numeric(w, w))[0]
    nu = default_dopplers(1.0)
    af = ambiguity_numeric(w, w, dopplers=nu)
    far = (np.abs(af.dopplers)[:, None] > 2.0) & (np.abs(af.delays)[None, :] > 2 * tau_m)
    mean_pedestal = float(np.mean(af.power[far]))
    assert 10 * math.log10(1.0 / mean_pedestal) >= 10.0


def test_isr_of_cw_is_zero(cw_params):
    w = synthesize(cw_params, SamplingGrid.for_duration(1.0, 512))
    res = isr_exact(ccf_numeric(w, w))
    assert res.value == 0.0
    assert not res.null_found


def test_isr_splits_total_area(fig1_params):
    r = ccf_numeric(*(2 * [synthesize(fig1_params)]))
    res = isr_exact(r)
    tau, p = r.one_sided()
    assert res.null_found
    assert math.isclose(res.mainlobe_area + res.sidelobe_area, np.trapezoid(p, tau), rel_tol=1e-12)
    assert math.isclose(res.value, res.sidelobe_area / res.mainlobe_area)


def test_isr_rejects_cross_correlation():
    grid = SamplingGrid.for_duration(1.0, 256)
    a = synthesize(seeded_waveform(1, 4, 20.0), grid)
    b = synthesize(seeded_waveform(2, 4, 20.0), grid)
    with pytest.raises(WaveformError):
        isr_exact(ccf_numeric(a, b))


def test_isr_grid_convergence(fig1_params):
    vals = []
    for os_ in (16, 32):
        w = synthesize(fig1_params, make_grid(fig1_params, oversample=os_))
        vals.append(isr_exact(ccf_numeric(w, w)).value)
    assert abs(vals[1] - vals[0]) <= 0.02 * vals[1]


def test_isr_approximation_band():
    # thumbtack regime: many harmonics at a large time-bandwidth product
    p = seeded_waveform(1, 64, 300.0)
    w = synthesize(p)
    ratio = isr_approx(gbf_via_fft(p), p) / isr_exact(ccf_numeric(w, w)).value
    assert 0.5 <= ratio <= 2.0


@pytest.mark.parametrize("indices, expected", [([1.0], 2 * np.pi ** 2),
                                               ([1.0, 1.0], 10 * np.pi ** 2)])
def test_rms_bandwidth_examples(indices, expected):
    assert math.isclose(rms_bandwidth_sq(WaveformParams(1.0, indices)), expected, rel_tol=1e-14)


def test_rms_bandwidth_scales_with_duration():
    p = seeded_waveform(3, 8, 40.0)
    longer = WaveformParams(2.0, p.indices)
    assert math.isclose(rms_bandwidth_sq(longer), rms_bandwidth_sq(p) / 4, rel_tol=1e-14)


def test_rms_bandwidth_closed_vs_numeric():
    p = seeded_waveform(12, 16, 100.0)
    num = rms_bandwidth_sq_numeric(synthesize(p))
    assert abs(num - rms_bandwidth_sq(p)) <= 0.05 * rms_bandwidth_sq(p)


def test_rms_bandwidth_rejects_offset():
    with pytest.raises(WaveformError):
        rms_bandwidth_sq(WaveformParams(1.0, [1.0], a0=2.0))


def test_mainlobe_area_approx_example():
    assert math.isclose(mainlobe_area_approx(np.pi ** 2), 0.5, rel_tol=1e-14)
    with pytest.raises(WaveformError):
        mainlobe_area_approx(0.0)


def test_papr_rect_and_tukey():
    p = seeded_waveform(1, 16, 100.0)
    assert abs(10 * math.log10(papr(synthesize(p)))) <= 1e-12
    alpha = 0.05
    tapered = synthesize(p.replace(taper=TaperSpec.tukey(alpha)),
                         SamplingGrid.for_duration(1.0, 1 << 16))
    # mean of the squared Tukey window is 1 - 5 alpha / 8
    assert math.isclose(papr(tapered), 1.0 / (1.0 - 5 * alpha / 8), rel_tol=1e-4)


def test_papr_of_zero_rejected():
    g = SamplingGrid.for_duration(1.0, 8)
    with pytest.raises(WaveformError):
        papr(SampledWaveform(g, np.zeros(8, dtype=complex)))


def test_spectral_efficiency_of_cw(cw_params):
    ref = integrate.quad(lambda f: np.sinc(f) ** 2, -1.0, 1.0, limit=200)[0]
    w = synthesize(cw_params, SamplingGrid.for_duration(1.0, 1024))
    se = spectral_efficiency(w, band=(-1.0, 1.0), pad=64)
    assert abs(se - ref) <= 2e-3


def test_spectral_efficiency_needs_a_band(cw_params):
    w = synthesize(cw_params, SamplingGrid.for_duration(1.0, 256))
    with pytest.raises(WaveformError):
        spectral_efficiency(w)


def test_metrics_report_fields(fig1_params):
    rep = metrics_report(synthesize(fig1_params))
    assert rep.papr_db <= 0.35
    assert 0.0 < rep.mainlobe_halfwidth < 0.5
    assert math.isclose(rep.swept_bandwidth, 100.0, rel_tol=1e-6)
    assert set(rep.as_dict()) >= {"isr", "ccf_area", "papr", "spectral_efficiency"}

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from nvxy8.analysis import (AlignmentError, BoundaryPeakError, InversionError, NonPhysicalDensityError,
                            SweepCurve, contrast_to_field, find_peak_tau, fit_double_exponential,
                            fit_lorentzian_pair, frequency_resolution, nv_density_from_id, repeat_statistics)
from nvxy8.dynamics import (RFField, echo_rates, filter_function, phase_closed_form, resonant_phase,
                            simulate_hahn_decay, simulate_odmr, xy8_signal)
from nvxy8.physics import NVParams, bias_for_center, coherence_envelope
from nvxy8.pulses import build_xy8

FREQ = np.arange(2.752e9, 2.762e9, 10e3)


def odmr_curve(params, widths=(0.31e6, 0.34e6), noise=0.0, rng=None):
    b = bias_for_center(params, 2.7571e9)
    y = simulate_odmr(params, b, FREQ, widths)
    if noise:
        y = y + rng.normal(0, noise, y.shape)
    return SweepCurve(FREQ, y, None, "freq_Hz", "pl")


# --- Lorentzian pair -------------------------------------------------------------

def test_lorentzian_round_trip(params):
    fit = fit_lorentzian_pair(odmr_curve(params))
    assert fit.converged and fit.flags == []
    assert fit["center1"] == pytest.approx(2.7556e9, rel=1e-3, abs=10e3)
    assert fit["center2"] == pytest.approx(2.7586e9, abs=10e3)
    assert fit["fwhm1"] == pytest.approx(0.31e6, rel=1e-3)
    assert fit["fwhm2"] == pytest.approx(0.34e6, rel=1e-3)
    assert fit["depth1"] == pytest.approx(0.03, rel=1e-3)
    assert fit["depth2"] == pytest.approx(0.03, rel=1e-3)
    assert fit["baseline"] == pytest.approx(1.0, rel=1e-3)
    assert all(v >= 0 for v in fit.stderr.values())


def test_lorentzian_degenerate():
    single = NVParams(hyperfine_A=0.05e6)
    fit = fit_lorentzian_pair(odmr_curve(single))
    assert "degenerate" in fit.flags


def test_lorentzian_flat():
    fit = fit_lorentzian_pair(SweepCurve(FREQ, np.ones_like(FREQ)))
    assert not fit.converged and "no_signal" in fit.flags
    assert any(line == "converged = false" for line in fit.report_lines())


def test_lorentzian_undersampled(params):
    f = np.arange(2.752e9, 2.762e9, 100e3)
    y = simulate_odmr(params, bias_for_center(params, 2.7571e9), f, (0.31e6, 0.34e6))
    assert "undersampled" in fit_lorentzian_pair(SweepCurve(f, y)).flags


def test_lorentzian_degrades_with_noise(params):
    err = []
    for sigma in (2e-4, 8e-4):
        rng = np.random.default_rng(7)
        e = [abs(fit_lorentzian_pair(odmr_curve(params, noise=sigma, rng=rng))["center1"] - 2.7556e9)
             for _ in range(30)]
        err.append(np.sqrt(np.mean(np.square(e))))
    assert err[1] / err[0] == pytest.approx(4.0, rel=0.35)


# --- double exponential ----------------------------------------------------------------

TAU = np.linspace(2e-6, 250e-6, 100)


def test_double_exponential_round_trip(params):
    fit = fit_double_exponential(SweepCurve(TAU, coherence_envelope(params, TAU)))
    assert fit.converged
    assert fit["t_fast"] == pytest.approx(33e-6, rel=1e-2)
    assert fit["t_slow"] == pytest.approx(77e-6, rel=1e-2)
    assert fit["w"] == pytest.approx(0.5, rel=1e-2)
    assert fit.flags == []


def test_double_exponential_swap_normalized():
    y = 0.3 * np.exp(-TAU / 90e-6) + 0.7 * np.exp(-TAU / 20e-6)
    fit = fit_double_exponential(SweepCurve(TAU, y))
    assert fit["t_fast"] <= fit["t_slow"]
    assert fit["t_fast"] == pytest.approx(20e-6, rel=1e-3)
    assert fit["w"] == pytest.approx(0.7, rel=1e-3)


def test_single_exponential_flagged():
    fit = fit_double_exponential(SweepCurve(TAU, np.exp(-TAU / 50e-6)))
    assert "effectively_single" in fit.flags
    assert fit["t_single"] == pytest.approx(50e-6, rel=1e-6)


def test_short_span_flagged(params):
    t = np.linspace(1e-6, 100e-6, 60)
    assert "short_span" in fit_double_exponential(SweepCurve(t, coherence_envelope(params, t))).flags


def test_double_exponential_preconditions():
    with pytest.raises(ValueError):
        fit_double_exponential(SweepCurve(np.array([]), np.array([])))
    with pytest.raises(ValueError):
        fit_double_exponential(SweepCurve(TAU, -np.ones_like(TAU)))


def test_double_exponential_degrades_with_noise(params):
    clean = coherence_envelope(params, TAU)
    err = []
    for sigma in (1e-3, 4e-3):
        rng = np.random.default_rng(3)
        e = [fit_double_exponential(SweepCurve(TAU, np.abs(clean + rng.normal(0, sigma, TAU.shape))))["t_slow"]
             - 77e-6 for _ in range(30)]
        err.append(np.sqrt(np.mean(np.square(e))))
    assert err[1] / err[0] == pytest.approx(4.0, rel=0.35)


# --- instantaneous diffusion ----------------------------------------------------------------

ANGLES = np.linspace(0, np.pi, 7)
S2 = np.sin(ANGLES / 2) ** 2


def fitted_rates(params, **kw):
    slow, fast = [], []
    for th in ANGLES:
        fit = fit_double_exponential(SweepCurve(TAU, simulate_hahn_decay(params, TAU, th, **kw)))
        slow.append(1 / fit["t_slow"])
        fast.append(1 / fit["t_fast"])
    return np.array(slow), np.array(fast)


@pytest.mark.parametrize("ppm", [0.05, 0.02])
def test_density_round_trip(ppm):
    p = NVParams(n_nv_ppm=ppm)
    slow, fast = fitted_rates(p)
    est = nv_density_from_id(SweepCurve(S2, slow), p.consts)
    assert est.density_ppm == pytest.approx(ppm, rel=0.02)
    assert est.linear and est.r_squared > 0.999
    assert nv_density_from_id(SweepCurve(S2, fast), p.consts).density_ppm == pytest.approx(ppm, rel=0.02)


def test_background_reference_does_not_change_slope(params):
    slow, _ = fitted_rates(params, reference_angle=0.0)
    est = nv_density_from_id(SweepCurve(S2, slow), params.consts)
    assert est.density_ppm == pytest.approx(0.05, rel=0.02)
    assert est.intercept == pytest.approx(1 / 77e-6, rel=0.02)


def test_exact_rates_regression(params):
    rates = np.array([echo_rates(params, th)[1] for th in ANGLES])
    est = nv_density_from_id(SweepCurve(S2, rates), params.consts)
    assert est.density_ppm == pytest.approx(0.05, rel=1e-10)


def test_zero_and_negative_slope(params):
    flat = nv_density_from_id(SweepCurve(S2, np.full_like(S2, 1e4)), params.consts)
    assert flat.density_ppm == 0.0 and "zero_slope" in flat.flags
    with pytest.raises(NonPhysicalDensityError):
        nv_density_from_id(SweepCurve(S2, 2e4 - 5e3 * S2), params.consts)
    with pytest.raises(ValueError):
        nv_density_from_id(SweepCurve(S2[:2], S2[:2]), params.consts)


def test_nonlinear_fast_component_flagged(params):
    # extra fast-component rate following sin^2(theta), not sin^2(theta/2)
    rates = 1 / 33e-6 + 7.3e3 * S2 + 2e4 * np.sin(ANGLES) ** 2
    est = nv_density_from_id(SweepCurve(S2, rates), params.consts)
    assert not est.linear and "nonlinear" in est.flags
    # with per-point sigma the chi-square test decides
    est = nv_density_from_id(SweepCurve(S2, rates, np.full_like(S2, 300.0)), params.consts)
    assert not est.linear


def test_linear_with_sigma_accepted(params, rng):
    rates = 1 / 77e-6 + 7307.0 * S2 + rng.normal(0, 100.0, S2.shape)
    est = nv_density_from_id(SweepCurve(S2, rates, np.full_like(S2, 100.0)), params.consts)
    assert est.linear
    assert est.density_ppm == pytest.approx(0.05, rel=0.1)


# --- frequency resolution --------------------------------------------------------------------

def test_frequency_resolution_examples():
    assert frequency_resolution(26e-9, 100e-12) == pytest.approx(73964.5, abs=0.1)
    assert frequency_resolution(26e-9, 0.0) == 0.0
    assert frequency_resolution(26e-9, 2e-9) == pytest.approx(1.479e6, rel=1e-3)
    with pytest.raises(ValueError):
        frequency_resolution(0.0, 1e-12)


@given(st.floats(1e-9, 1e-6), st.floats(1e-13, 1e-9), st.floats(0.1, 100))
def test_frequency_resolution_homogeneous(tau, dtau, k):
    assert frequency_resolution(tau, k * dtau) == pytest.approx(k * frequency_resolution(tau, dtau), rel=1e-12)


# --- peak finding ----------------------------------------------------------------------------

def filter_sweep(f_signal, taus=np.arange(20e-9, 32e-9 + 1e-15, 100e-12)):
    y = [filter_function(build_xy8(16, t, 12.5e-9), f_signal) for t in taus]
    return SweepCurve(taus, np.array(y), None, "tau_s", "weight")


@pytest.mark.parametrize("f_signal", [19.23e6, 18.9e6, 20.1e6, 17.3e6])
def test_peak_of_filter_shaped_sweep(f_signal):
    sweep = filter_sweep(f_signal)
    peak = find_peak_tau(sweep)
    # the continuous maximum, located by a dense golden-section search
    from scipy.optimize import minimize_scalar

    t0 = 1 / (2 * f_signal)
    best = minimize_scalar(lambda t: -filter_function(build_xy8(16, t, 12.5e-9), f_signal),
                           bounds=(t0 - 0.3e-9, t0 + 0.3e-9), method="bounded", options={"xatol": 1e-15}).x
    assert abs(peak.tau - best) <= 100e-12 / 4
    assert not peak.ambiguous


def test_default_sweep_peak_position():
    assert find_peak_tau(filter_sweep(19.23e6)).tau == pytest.approx(26.0e-9, abs=0.025e-9)


def test_boundary_peak():
    x = np.linspace(0, 1, 20)
    with pytest.raises(BoundaryPeakError):
        find_peak_tau(SweepCurve(x, x))
    with pytest.raises(ValueError):
        find_peak_tau(SweepCurve(x[:4], [0, 1, 0, 0]))


def test_two_equal_peaks():
    x = np.arange(20.0)
    y = np.exp(-(x - 5) ** 2) + np.exp(-(x - 14) ** 2)
    peak = find_peak_tau(SweepCurve(x, y))
    assert peak.ambiguous and peak.tau == pytest.approx(5.0, abs=1e-9)


@given(st.floats(0.01, 100), st.floats(-10, 10))
def test_peak_affine_invariant(a, b):
    sweep = filter_sweep(19.23e6, np.arange(24e-9, 28e-9, 200e-12))
    base = find_peak_tau(sweep).tau
    scaled = SweepCurve(sweep.x, a * sweep.y + b)
    assert find_peak_tau(scaled).tau == pytest.approx(base, abs=1e-15)


# --- repeat statistics -----------------------------------------------------------------------

def test_repeat_statistics():
    x = np.linspace(0, 1, 11)
    a = SweepCurve(x, np.sin(x))
    assert repeat_statistics([a, a, a], x[3]) == (pytest.approx(np.sin(x[3])), 0.0)
    b = SweepCurve(x, np.sin(x) + 0.3)
    assert repeat_statistics([a, b], x[5])[1] == pytest.approx(0.3 / np.sqrt(2))
    with pytest.raises(AlignmentError):
        repeat_statistics([a, SweepCurve(x + 0.05, x)], x[2])
    with pytest.raises(AlignmentError):
        repeat_statistics([a, b], 0.55)
    with pytest.raises(ValueError):
        repeat_statistics([a], x[0])


# --- contrast to field --------------------------------------------------------------------------

SEQ0 = build_xy8(16, 26e-9, 12.5e-9)
SEQ90 = build_xy8(16, 26e-9, 12.5e-9, readout_phase=np.pi / 2)


def test_field_round_trip_default_amplitude(params):
    phi = phase_closed_form(SEQ0, RFField(0.44e-6, 1 / 52e-9), params.consts)
    assert contrast_to_field(xy8_signal(phi, SEQ0, params), SEQ0, params) == pytest.approx(0.44e-6, rel=1e-4)
    assert contrast_to_field(0.0, SEQ0, params) == 0.0


def test_field_range_edge(params):
    env = coherence_envelope(params, SEQ0.sensing_time)
    b_max = np.pi / resonant_phase(SEQ0, 1.0, params.consts)
    assert contrast_to_field(env, SEQ0, params) == pytest.approx(b_max, rel=1e-12)
    with pytest.raises(InversionError):
        contrast_to_field(env * 1.01, SEQ0, params)
    assert contrast_to_field(env * 1.01, SEQ0, params, clip=True) == pytest.approx(b_max)
    with pytest.raises(InversionError):
        contrast_to_field(0.01, build_xy8(1, 26e-9, 12.5e-9, readout_phase=1.0), params)


@given(st.floats(0.0, 1.0))
def test_field_inverse_property(frac):
    params = NVParams()
    k = resonant_phase(SEQ0, 1.0, params.consts)
    b = frac * (np.pi / k) / 2
    assume(b * k <= 1.0)
    delta = xy8_signal(b * k, SEQ0, params)
    # 1 - cos(phi) cancels in double precision below ~1e-7 rad
    assert contrast_to_field(delta, SEQ0, params) == pytest.approx(b, rel=1e-4, abs=1e-11)


@given(st.floats(-1.0, 1.0))
def test_signed_readout_inverse(phi):
    params = NVParams()
    k = resonant_phase(SEQ90, 1.0, params.consts)
    delta = xy8_signal(phi, SEQ90, params)
    assert contrast_to_field(delta, SEQ90, params) == pytest.approx(phi / k, rel=1e-4, abs=1e-11)

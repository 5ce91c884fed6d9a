import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import amplitude_at, sos_gain, sos_pole_radii, xcorr_lag
from scipy.signal import find_peaks

from ppgmorph import dsp
from ppgmorph.errors import (
    ArgumentError,
    DemodError,
    DesignError,
    LengthError,
    NormalizationError,
)

FS = 400.0
DEFAULT = dsp.FilterSpec()


@pytest.fixture(scope="module")
def coeffs():
    return dsp.design_cheby2_lowpass(DEFAULT)


def finite(lo=-1e3, hi=1e3):
    return st.floats(lo, hi, allow_nan=False, allow_infinity=False)


# -- filter design ---------------------------------------------------------------


def test_dc_gain(coeffs):
    assert sos_gain(coeffs.sos, [0.0], FS)[0] == pytest.approx(1.0, abs=0.01)


def test_gain_at_20hz(coeffs):
    assert 20 * np.log10(sos_gain(coeffs.sos, [20.0], FS)[0]) <= -40.0


def test_stopband_dense_grid(coeffs):
    f = np.linspace(0, FS / 2, 4096)
    g = sos_gain(coeffs.sos, f[f >= 10.0], FS)
    assert np.max(20 * np.log10(np.maximum(g, 1e-300))) <= -40.0


def test_poles_inside_unit_circle(coeffs):
    assert np.all(sos_pole_radii(coeffs.sos) < 1.0)


def test_response_matches_polynomial_oracle(coeffs):
    f = np.linspace(0, 200, 257)
    assert np.allclose(np.abs(coeffs.response(f, FS)), sos_gain(coeffs.sos, f, FS), atol=1e-12)


@pytest.mark.parametrize("kw", [dict(stopband_edge=200.0), dict(stopband_edge=250.0),
                                dict(stopband_edge=0.0), dict(order=0), dict(order=2.5),
                                dict(stopband_attenuation=0.0), dict(fs=-1.0)])
def test_bad_designs(kw):
    with pytest.raises(DesignError):
        dsp.design_cheby2_lowpass(dsp.FilterSpec(**kw))


@given(order=st.integers(1, 8), edge=st.floats(1.0, 150.0), atten=st.floats(10.0, 80.0))
def test_any_valid_design_is_stable(order, edge, atten):
    c = dsp.design_cheby2_lowpass(dsp.FilterSpec(order, edge, atten, FS))
    assert np.all(sos_pole_radii(c.sos) < 1.0)
    f = np.linspace(edge, FS / 2, 512)
    assert np.all(sos_gain(c.sos, f, FS) <= 10 ** (-atten / 20) * (1 + 1e-9))


# -- zero-phase filtering ----------------------------------------------------------


def test_constant_passes_unchanged(coeffs):
    y = dsp.filter_zero_phase(np.full(2000, 3.7), coeffs)
    assert np.max(np.abs(y - 3.7)) <= 1e-9


def test_one_hz_sine_amplitude_and_lag(coeffs):
    t = np.arange(int(10 * FS)) / FS
    x = np.sin(2 * np.pi * t)
    y = dsp.filter_zero_phase(x, coeffs)
    mid = slice(400, -400)
    assert amplitude_at(y[mid], FS, 1.0) / amplitude_at(x[mid], FS, 1.0) >= 0.99
    assert abs(xcorr_lag(x[mid], y[mid])) <= 1


def test_fifty_hz_removed(coeffs):
    t = np.arange(int(10 * FS)) / FS
    y = dsp.filter_zero_phase(np.sin(2 * np.pi * 50 * t), coeffs)
    assert amplitude_at(y[400:-400], FS, 50.0) <= 10 ** (-80 / 20)


def test_too_short(coeffs):
    with pytest.raises(LengthError):
        dsp.filter_zero_phase(np.zeros(10), coeffs)


@given(a=finite(-5, 5), b=finite(-5, 5), seed=st.integers(0, 2**16))
def test_filter_is_linear(coeffs, a, b, seed):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=300), r.normal(size=300)
    lhs = dsp.filter_zero_phase(a * x + b * y, coeffs)
    rhs = a * dsp.filter_zero_phase(x, coeffs) + b * dsp.filter_zero_phase(y, coeffs)
    assert np.allclose(lhs, rhs, atol=1e-9)


# -- moving average / detrend --------------------------------------------------------


def test_moving_average_hand_example():
    assert np.allclose(dsp.moving_average([1, 2, 3, 4, 5], 3), [1.5, 2, 3, 4, 4.5])


def test_window_one_is_identity():
    x = np.random.default_rng(0).normal(size=50)
    assert np.array_equal(dsp.moving_average(x, 1), x)


@pytest.mark.parametrize("w", [0, 2, 4, -3, 2.5])
def test_bad_windows(w):
    with pytest.raises(ArgumentError):
        dsp.moving_average(np.zeros(20), w)


def test_window_longer_than_signal():
    with pytest.raises(ArgumentError):
        dsp.moving_average(np.zeros(5), 7)


@given(c=finite(), w=st.sampled_from([1, 3, 5, 11, 401]), n=st.integers(401, 900))
def test_moving_average_keeps_constants(c, w, n):
    assert np.allclose(dsp.moving_average(np.full(n, c), w), c, rtol=1e-12, atol=1e-9)


@given(x=arrays(np.float64, st.integers(5, 60), elements=finite()),
       w=st.sampled_from([1, 3, 5]))
def test_moving_average_matches_direct_mean(x, w):
    h = w // 2
    ref = [np.mean(x[max(i - h, 0): i + h + 1]) for i in range(x.size)]
    assert np.allclose(dsp.moving_average(x, w), ref, atol=1e-9 * (1 + np.abs(x).max()))


@given(a=finite(-5, 5), b=finite(-5, 5), seed=st.integers(0, 2**16), w=st.sampled_from([3, 9, 41]))
def test_moving_average_and_detrend_linear(a, b, seed, w):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=200), r.normal(size=200)
    for op in (dsp.moving_average, dsp.detrend_cma):
        assert np.allclose(op(a * x + b * y, w), a * op(x, w) + b * op(y, w), atol=1e-9)


def test_detrend_constant_is_zero():
    assert np.allclose(dsp.detrend_cma(np.full(500, 4.2), 101), 0.0, atol=1e-12)


def test_detrend_ramp_interior_zero():
    w = 101
    y = dsp.detrend_cma(0.3 * np.arange(1000.0) - 7, w)
    assert np.max(np.abs(y[w // 2: -(w // 2)])) <= 1e-9


def test_detrend_removes_drift_keeps_pulse():
    t = np.arange(int(100 * FS)) / FS  # 2 drift cycles, 100 sine cycles
    sine = np.sin(2 * np.pi * t)
    drift = 2.0 * np.sin(2 * np.pi * 0.02 * t)
    y = dsp.detrend_cma(sine + drift, dsp.odd_window(1.0, FS))
    drift_before = amplitude_at(sine + drift, FS, 0.02) ** 2
    drift_after = amplitude_at(y, FS, 0.02) ** 2
    assert 10 * np.log10(drift_before / drift_after) >= 20
    assert amplitude_at(y, FS, 1.0) == pytest.approx(1.0, rel=0.05)


def test_detrend_window_too_long():
    with pytest.raises(ArgumentError):
        dsp.detrend_cma(np.zeros(11), 11)


# -- envelope / demodulation -----------------------------------------------------------


def test_envelope_of_sine():
    t = np.arange(int(10 * FS)) / FS
    env = dsp.analytic_envelope(2 * np.sin(2 * np.pi * 1.2 * t))
    assert np.allclose(env[400:-400], 2.0, rtol=0.02)


def test_envelope_of_zeros():
    assert np.array_equal(dsp.analytic_envelope(np.zeros(64)), np.zeros(64))


def test_envelope_of_am_chirp():
    t = np.arange(int(20 * FS)) / FS
    mod = 1 + 0.5 * np.sin(2 * np.pi * 0.25 * t)
    carrier = np.sin(2 * np.pi * (5 * t + 0.25 * t**2))  # 5 -> 15 Hz
    env = dsp.analytic_envelope(mod * carrier)
    mid = slice(400, -400)
    rmse = np.sqrt(np.mean((env[mid] - mod[mid]) ** 2))
    assert rmse <= 0.05 * mod.mean()


def test_envelope_too_short():
    with pytest.raises(LengthError):
        dsp.analytic_envelope(np.ones(8))


def _pulse_train(mod_depth, seconds=60.0):
    t = np.arange(int(seconds * FS)) / FS
    phase = (t % 0.8) / 0.8
    beat = np.exp(-0.5 * ((phase - 0.25) / 0.06) ** 2) + 0.4 * np.exp(-0.5 * ((phase - 0.55) / 0.1) ** 2)
    mod = 1 + mod_depth * np.sin(2 * np.pi * 0.25 * t)
    return t, beat * mod


def _peak_cv(y):
    pk, _ = find_peaks(y, distance=int(0.5 * FS))
    v = y[pk[2:-2]]
    return np.std(v) / np.mean(v)


def test_demodulation_flattens_peaks():
    _, x = _pulse_train(0.3)
    d = dsp.detrend_cma(x, dsp.odd_window(1.0, FS))
    y = dsp.demodulate(d, dsp.odd_window(dsp.estimate_beat_period(d, FS), FS))
    assert _peak_cv(y) <= 0.2 * _peak_cv(d)


def test_two_second_envelope_window_under_tracks_respiration():
    # a 2 s boxcar keeps only sinc(0.5) ~ 0.64 of a 0.25 Hz modulator
    _, x = _pulse_train(0.3)
    d = dsp.detrend_cma(x, dsp.odd_window(1.0, FS))
    y = dsp.demodulate(d, dsp.odd_window(2.0, FS))
    assert 0.3 < _peak_cv(y) / _peak_cv(d) < 0.6


@pytest.mark.parametrize("period", [0.35, 0.6, 0.8, 1.1, 1.6])
def test_beat_period_estimate(period):
    t = np.arange(int(30 * FS)) / FS
    phase = (t % period) / period
    x = np.exp(-0.5 * ((phase - 0.2) / 0.05) ** 2) + 0.3 * np.exp(-0.5 * ((phase - 0.5) / 0.08) ** 2)
    assert dsp.estimate_beat_period(x, FS) == pytest.approx(period, abs=1.5 / FS)


def test_unmodulated_sine_peaks_near_one():
    t = np.arange(int(20 * FS)) / FS
    y = dsp.demodulate(np.sin(2 * np.pi * 1.0 * t), dsp.odd_window(2.0, FS))
    pk, _ = find_peaks(y[800:-800])
    assert np.allclose(y[800:-800][pk], 1.0, atol=0.02)


def test_silent_gap_is_an_error():
    _, x = _pulse_train(0.0, 20)
    d = dsp.detrend_cma(x, dsp.odd_window(1.0, FS))
    d[4000:4200] = 0.0
    with pytest.raises(DemodError) as err:
        dsp.demodulate(d, dsp.odd_window(2.0, FS))
    assert err.value.index == 4000


def test_all_zero_signal_rejected():
    with pytest.raises(DemodError):
        dsp.demodulate(np.zeros(1000), 101)


# -- z-score ----------------------------------------------------------------------------


def test_zscore_closed_form():
    z = dsp.zscore([1.0, 2.0, 3.0])
    assert np.allclose(z, (np.array([1, 2, 3]) - 2) / np.sqrt(2 / 3))


def test_zscore_constant():
    with pytest.raises(NormalizationError):
        dsp.zscore(np.full(10, 5.0))


@given(arrays(np.float64, st.integers(3, 200), elements=finite(-1e3, 1e3)))
def test_zscore_idempotent(x):
    try:
        z = dsp.zscore(x)
    except NormalizationError:
        return
    assert np.allclose(dsp.zscore(z), z, atol=1e-12 * max(1, np.abs(z).max()) * 100)
    assert abs(z.mean()) < 1e-9 and z.std() == pytest.approx(1.0, abs=1e-9)


# -- whole chain ------------------------------------------------------------------------


def test_preprocess_length_and_stats():
    _, x = _pulse_train(0.2, 30)
    y = dsp.preprocess(x + 0.5, FS)
    assert y.shape == x.shape
    assert abs(y.mean()) < 1e-9 and y.std() == pytest.approx(1.0)


def test_preprocess_with_fixed_envelope_window():
    _, x = _pulse_train(0.2, 30)
    y = dsp.preprocess(x, FS, dsp.PreprocessConfig(envelope_window_s=0.8))
    assert np.array_equal(y, dsp.preprocess(x, FS))  # estimate is exactly 0.8 s here


def test_preprocess_deterministic():
    _, x = _pulse_train(0.2, 30)
    assert np.array_equal(dsp.preprocess(x, FS), dsp.preprocess(x.copy(), FS))

"""Preprocessing primitives for raw PPG.

The chain applied to every recording is::

    x -> cheby2 low-pass (zero phase) -> moving average -> CMA detrend
      -> divide by smoothed Hilbert envelope -> z-score

Default filter parameters (order 4, stopband from 10 Hz, 40 dB) keep the
pulse harmonics below ~8 Hz and remove sensor and mains noise. All
operations are length preserving and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as ss

from .errors import ArgumentError, DemodError, DesignError, LengthError, NormalizationError

# Stopband is designed this many dB deeper than requested so the
# "<= -atten everywhere past the edge" guarantee survives round-off at the
# equiripple peaks.
_ATTEN_MARGIN_DB = 0.01


@dataclass(frozen=True)
class FilterSpec:
    order: int = 4
    stopband_edge: float = 10.0
    stopband_attenuation: float = 40.0
    fs: float = 400.0

    def validate(self):
        if int(self.order) != self.order or self.order < 1:
            raise DesignError(f"filter order must be a positive integer, got {self.order}")
        if self.fs <= 0:
            raise DesignError(f"fs must be positive, got {self.fs}")
        if not 0 < self.stopband_edge < self.fs / 2:
            raise DesignError(
                f"stopband edge {self.stopband_edge} Hz must lie in (0, {self.fs / 2}) Hz"
            )
        if self.stopband_attenuation <= 0:
            raise DesignError("stopband attenuation must be positive")


@dataclass(frozen=True)
class IIRCoefficients:
    """Cascade of second-order sections, one ``[b0 b1 b2 1 a1 a2]`` row each."""

    sos: np.ndarray
    order: int

    @property
    def ba(self):
        return ss.sos2tf(self.sos)

    def poles(self):
        return np.concatenate([np.roots(s[3:]) for s in self.sos])

    def is_stable(self):
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def response(self, freqs, fs):
        """Complex frequency response at ``freqs`` (Hz)."""
        _, h = ss.sosfreqz(self.sos, worN=np.asarray(freqs, dtype=float), fs=fs)
        return h


def design_cheby2_lowpass(spec: FilterSpec) -> IIRCoefficients:
    spec.validate()
    sos = ss.cheby2(
        int(spec.order),
        spec.stopband_attenuation + _ATTEN_MARGIN_DB,
        spec.stopband_edge,
        btype="lowpass",
        output="sos",
        fs=spec.fs,
    )
    # cheby2 low-pass has unit DC gain analytically; normalise away round-off
    dc = np.prod(sos[:, :3].sum(axis=1) / sos[:, 3:].sum(axis=1))
    sos = sos.copy()
    sos[0, :3] /= dc
    coeffs = IIRCoefficients(sos=sos, order=int(spec.order))
    if not coeffs.is_stable():
        raise DesignError("designed filter is unstable")
    return coeffs


def filter_zero_phase(x, c: IIRCoefficients):
    """Forward-backward application of ``c``; zero group delay, squared magnitude."""
    x = np.asarray(x, dtype=float)
    if x.size <= 3 * c.order:
        raise LengthError(f"signal of {x.size} samples too short for order-{c.order} filter")
    # odd extension padding like filtfilt, capped by the signal length
    padlen = min(3 * (2 * len(c.sos) + 1), x.size - 1)
    return ss.sosfiltfilt(c.sos, x, padlen=padlen)


def _check_window(window, n):
    if int(window) != window:
        raise ArgumentError(f"window must be an integer, got {window}")
    window = int(window)
    if window < 1 or window % 2 == 0:
        raise ArgumentError(f"window must be a positive odd integer, got {window}")
    if window > n:
        raise ArgumentError(f"window {window} exceeds signal length {n}")
    return window


def moving_average(x, window):
    """Centred moving average of odd ``window``.

    Near the ends the window is truncated to the samples that exist, so
    ``[1, 2, 3, 4, 5]`` with window 3 gives ``[1.5, 2, 3, 4, 4.5]``.
    Computed by direct convolution (no running sums) to avoid cumulative
    round-off on long records.
    """
    x = np.asarray(x, dtype=float)
    window = _check_window(window, x.size)
    if window == 1:
        return x.copy()
    kernel = np.ones(window)
    sums = ss.oaconvolve(x, kernel, mode="same") if x.size > 4096 else np.convolve(x, kernel, "same")
    half = window // 2
    idx = np.arange(x.size)
    counts = np.minimum(idx, half) + np.minimum(x.size - 1 - idx, half) + 1
    return sums / counts


def detrend_cma(x, window):
    x = np.asarray(x, dtype=float)
    if int(window) == window and window >= x.size:
        raise ArgumentError(f"detrend window {window} must be shorter than the signal ({x.size})")
    return x - moving_average(x, window)


def analytic_envelope(x):
    """Magnitude of the analytic signal, built in the frequency domain.

    Negative-frequency bins are zeroed and positive ones doubled; DC and
    (for even lengths) Nyquist are kept once.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 16:
        raise LengthError(f"need at least 16 samples for an envelope, got {n}")
    spec = np.fft.fft(x)
    gain = np.zeros(n)
    gain[0] = 1.0
    if n % 2 == 0:
        gain[n // 2] = 1.0
        gain[1 : n // 2] = 2.0
    else:
        gain[1 : (n + 1) // 2] = 2.0
    return np.abs(np.fft.ifft(spec * gain))


def demodulate(x_detrended, smooth_window, eps_rel=1e-6):
    """Divide a detrended signal by its CMA-smoothed envelope.

    Raises
    ------
    DemodError
        If the smoothed envelope falls to ``eps_rel * max|x|`` or below, or
        if the signal is flat (``|x| <= eps``) for ``smooth_window // 8`` or
        more consecutive samples. A silent stretch carries no amplitude
        information; dividing through it would inject spurious dips into
        the neighbouring beats. ``DemodError.index`` is the first offending
        sample.
    """
    x = np.asarray(x_detrended, dtype=float)
    peak = np.max(np.abs(x)) if x.size else 0.0
    eps = eps_rel * peak
    if peak == 0.0:
        raise DemodError("signal is identically zero", index=0)

    run = max(smooth_window // 8, 2)
    quiet = np.abs(x) <= eps
    start = _first_run(quiet, run)
    if start is not None:
        raise DemodError(f"flat signal for >= {run} samples starting at index {start}", index=start)

    env = moving_average(analytic_envelope(x), smooth_window)
    low = np.flatnonzero(env <= eps)
    if low.size:
        raise DemodError(f"envelope below {eps:.3g} at index {low[0]}", index=int(low[0]))
    return x / env


def _first_run(mask, length):
    """Start index of the first run of ``length`` True values, or None."""
    if mask.size < length:
        return None
    c = np.convolve(mask.astype(int), np.ones(length, dtype=int), mode="valid")
    hit = np.flatnonzero(c == length)
    return int(hit[0]) if hit.size else None


def zscore(x):
    x = np.asarray(x, dtype=float)
    mu = x.mean()
    sd = x.std()
    if not sd > 0 or sd <= 1e-12 * max(abs(mu), 1.0):
        raise NormalizationError("cannot standardise a constant signal")
    return (x - mu) / sd


def estimate_beat_period(x, fs, min_s=0.3, max_s=2.0):
    """Dominant beat period (s): highest autocorrelation peak with lag in ``[min_s, max_s]``."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    n = x.size
    hi = min(int(max_s * fs), n - 1)
    lo = max(int(min_s * fs), 1)
    if hi <= lo + 2:
        raise LengthError(f"signal of {n} samples too short to estimate a beat period")
    spec = np.fft.rfft(x, 2 * n)
    ac = np.fft.irfft(spec * np.conj(spec))[: hi + 2]
    if ac[0] <= 0:
        raise DemodError("cannot estimate a beat period from a flat signal", index=0)
    pk, _ = ss.find_peaks(ac[lo - 1 : hi + 2])
    pk = pk + lo - 1
    if pk.size == 0:
        return hi / fs
    return float(pk[np.argmax(ac[pk])] / fs)


def odd_window(seconds, fs):
    w = max(int(round(seconds * fs)), 1)
    return w if w % 2 else w + 1


@dataclass(frozen=True)
class PreprocessConfig:
    filter_order: int = 4
    stopband_hz: float = 10.0
    atten_db: float = 40.0
    ma_window: int = 5
    detrend_window_s: float = 1.0
    # None: one estimated beat period, which nulls the beat-rate ripple of
    # the envelope while tracking respiration (see ``estimate_beat_period``)
    envelope_window_s: float | None = None


def preprocess(x, fs, cfg: PreprocessConfig | None = None):
    """Run the full denoise/detrend/demodulate/normalise chain."""
    cfg = cfg or PreprocessConfig()
    coeffs = design_cheby2_lowpass(
        FilterSpec(cfg.filter_order, cfg.stopband_hz, cfg.atten_db, fs)
    )
    y = filter_zero_phase(x, coeffs)
    y = moving_average(y, cfg.ma_window)
    y = detrend_cma(y, odd_window(cfg.detrend_window_s, fs))
    env_s = cfg.envelope_window_s or estimate_beat_period(y, fs)
    y = demodulate(y, odd_window(env_s, fs))
    return zscore(y)

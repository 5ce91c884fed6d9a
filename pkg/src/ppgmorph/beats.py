"""Beat onsets, segmentation to a canonical length, and template averaging.

Onsets come from the first derivative: candidate upstrokes are VPG peaks
above half the rolling 75th percentile of recent peak heights (10 s
window), separated by a 0.3 s refractory period. Each accepted upstroke
is walked back downhill to the local minimum before it.

Segments are time-normalised: every inter-onset slice is linearly
resampled to ``L`` samples, so templates from different heart rates line
up point by point. Real durations are kept alongside for timing features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .errors import ArgumentError, QualityError

BEAT_LEN = 400
MIN_BEAT_S = 0.3
MAX_BEAT_S = 2.0
MIN_BEATS = 10
CORR_GATE = 0.8
THRESHOLD_FRAC = 0.5
THRESHOLD_PCT = 75.0
THRESHOLD_WINDOW_S = 10.0


@dataclass(frozen=True)
class BeatSegment:
    samples: np.ndarray
    source_onset_idx: int
    duration_s: float


class Segments(list):
    """List of :class:`BeatSegment` that also remembers how many were dropped."""

    def __init__(self, items=(), dropped=0):
        super().__init__(items)
        self.dropped = int(dropped)


@dataclass(frozen=True)
class SegmentStats:
    ibi_mean_s: float
    ibi_std_s: float
    amp_std: float
    n_segments: int


@dataclass(frozen=True)
class BeatTemplate:
    samples: np.ndarray
    n_beats_averaged: int
    fs_equiv: float
    stats: SegmentStats | None = None

    @property
    def duration_s(self):
        return len(self.samples) / self.fs_equiv


def _rolling_percentile(times, values, window, q):
    """``q``-th percentile of ``values`` within +-window/2 of each time."""
    half = window / 2
    lo = np.searchsorted(times, times - half, side="left")
    hi = np.searchsorted(times, times + half, side="right")
    return np.array([np.percentile(values[a:b], q) for a, b in zip(lo, hi)])


def detect_onsets(x, fs, *, refractory_s=MIN_BEAT_S, window_s=THRESHOLD_WINDOW_S,
                  min_beats=MIN_BEATS):
    """Beat onset sample indices of a preprocessed PPG signal.

    Returns a strictly increasing integer array. Consecutive onsets are at
    least ``refractory_s`` apart. A pause longer than ``MAX_BEAT_S`` shows
    up as a single long interval with no onsets inside it; segmentation
    drops that interval.

    Raises
    ------
    QualityError
        If fewer than ``min_beats`` onsets are found.
    """
    x = np.asarray(x, dtype=float)
    if fs <= 0:
        raise ArgumentError("fs must be positive")
    if x.size < 3:
        raise QualityError(f"signal of {x.size} samples holds no beats")
    vpg = np.gradient(x) * fs
    refractory = max(int(round(refractory_s * fs)), 1)

    # distance= keeps the tallest peak within each refractory span
    peaks, props = find_peaks(vpg, height=0.0, distance=refractory)
    if peaks.size == 0:
        raise QualityError("no upstrokes found")
    heights = props["peak_heights"]
    thr = THRESHOLD_FRAC * _rolling_percentile(peaks / fs, heights, window_s, THRESHOLD_PCT)
    chosen = peaks[heights >= thr]

    onsets = []
    prev = 0
    for p in chosen:
        # walk back to the foot of the upstroke, but never further than one
        # refractory span: in a long flat pause the true minimum can lie
        # far from the beat it belongs to
        i = p
        stop = max(prev, p - refractory)
        while i > stop and x[i - 1] < x[i]:
            i -= 1
        if onsets and i - onsets[-1] < refractory:
            continue
        onsets.append(i)
        prev = i
    onsets = np.asarray(onsets, dtype=int)
    if onsets.size < min_beats:
        raise QualityError(f"only {onsets.size} beats detected (need {min_beats})")
    return onsets


def resample_linear(x, n):
    """Linearly resample ``x`` onto ``n`` evenly spaced points covering ``[0, len(x))``."""
    x = np.asarray(x, dtype=float)
    pos = np.arange(n) * (len(x) / n)
    return np.interp(pos, np.arange(len(x)), x)


def segment_and_resample(x, onsets, L=BEAT_LEN, fs=400.0,
                         min_s=MIN_BEAT_S, max_s=MAX_BEAT_S) -> Segments:
    """Cut ``x`` between consecutive onsets and resample each beat to ``L`` samples.

    Beats shorter than ``min_s`` or longer than ``max_s`` are dropped; the
    number dropped is available as ``result.dropped``. The sample at the
    closing onset is used only as the right interpolation neighbour.
    """
    x = np.asarray(x, dtype=float)
    onsets = np.asarray(onsets, dtype=int)
    if onsets.size < 2:
        raise ArgumentError("need at least two onsets to cut a beat")
    if np.any(np.diff(onsets) <= 0):
        raise ArgumentError("onsets must be strictly increasing")
    out, dropped = [], 0
    for a, b in zip(onsets[:-1], onsets[1:]):
        dur = (b - a) / fs
        if not min_s <= dur <= max_s or b >= x.size:
            dropped += 1
            continue
        n = b - a
        pos = np.arange(L) * (n / L)
        seg = np.interp(pos, np.arange(n + 1), x[a : b + 1])
        out.append(BeatSegment(samples=seg, source_onset_idx=int(a), duration_s=float(dur)))
    return Segments(out, dropped)


def _pearson_rows(M, ref):
    Mc = M - M.mean(axis=1, keepdims=True)
    rc = ref - ref.mean()
    num = Mc @ rc
    den = np.sqrt((Mc * Mc).sum(axis=1) * (rc @ rc))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / den, 0.0)
    return r


def _order_free_mean(M):
    # sorting each column first makes the sum independent of row order
    return np.sort(M, axis=0).sum(axis=0) / M.shape[0]


def average_template(segments, corr_gate=CORR_GATE, min_beats=MIN_BEATS) -> BeatTemplate:
    """Mean of the segments that correlate with the median beat at ``corr_gate`` or better.

    The result does not depend on the order of ``segments``.
    """
    segments = list(segments)
    if len(segments) < min_beats:
        raise QualityError(f"{len(segments)} segments, need at least {min_beats}")
    M = np.vstack([s.samples for s in segments])
    med = np.median(M, axis=0)
    r = _pearson_rows(M, med)
    keep = r >= corr_gate
    n = int(keep.sum())
    if n < min_beats:
        raise QualityError(f"only {n} beats pass the correlation gate {corr_gate}")
    kept = M[keep]
    template = _order_free_mean(kept)
    L = M.shape[1]
    durs = np.array([s.duration_s for s, k in zip(segments, keep) if k])
    durs_sorted = np.sort(durs)
    amps = np.sort(kept.max(axis=1) - kept.min(axis=1))
    stats = SegmentStats(
        ibi_mean_s=float(durs_sorted.mean()),
        ibi_std_s=float(durs_sorted.std()),
        amp_std=float(amps.std()),
        n_segments=n,
    )
    if np.argmax(template) > 0.6 * L:
        raise QualityError("template peak lies in the last 40% of the beat")
    return BeatTemplate(samples=template, n_beats_averaged=n,
                        fs_equiv=L / stats.ibi_mean_s, stats=stats)


def template_from_signal(x, fs, L=BEAT_LEN, corr_gate=CORR_GATE, min_beats=MIN_BEATS):
    """Onsets, segments and template of one preprocessed recording."""
    onsets = detect_onsets(x, fs, min_beats=min_beats)
    segs = segment_and_resample(x, onsets, L=L, fs=fs)
    return average_template(segs, corr_gate=corr_gate, min_beats=min_beats), segs, onsets

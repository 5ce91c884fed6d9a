"""Derivative waveforms and fiducial points of a single beat.

The beat template is differentiated four times (VPG, APG, JPG, SPG). Each
stage is a central difference followed by a 5-point moving average, which
keeps the fourth derivative usable: without smoothing the per-stage noise
gain grows like omega**4.

Fiducials are picked from zero crossings and local extrema of the
derivatives:

* ``u`` global VPG maximum (steepest upstroke)
* ``O`` last VPG up-crossing before ``u`` (beat start if none)
* ``S`` first VPG down-crossing after ``u``
* ``v`` VPG minimum after ``S``; ``w`` first VPG local maximum after ``v``
* ``a`` APG maximum on ``[O, u)``; ``b, c, d, e`` the alternating APG
  extrema that follow
* ``N`` the dicrotic notch: the first PPG local minimum (VPG up-crossing)
  after ``v``; when the notch is only an inflection, the APG local maximum
  after ``S`` closest to ``w``
* ``D`` first PPG local maximum (VPG down-crossing) after ``N``

Points that cannot be found are reported absent rather than guessed.
Only a missing ``S`` is fatal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .dsp import moving_average
from .errors import FiducialError

DERIVATIVE_NAMES = ("vpg", "apg", "jpg", "spg")
POINT_NAMES = ("O", "S", "N", "D", "u", "v", "w", "a", "b", "c", "d", "e")
SMOOTH_WINDOW = 5
# local extrema smaller than this fraction of the waveform's range are ignored
PROMINENCE_FRAC = 0.01


@dataclass(frozen=True)
class DerivativeStack:
    ppg: np.ndarray
    vpg: np.ndarray
    apg: np.ndarray
    jpg: np.ndarray
    spg: np.ndarray
    fs: float

    def __len__(self):
        return len(self.ppg)

    def waveform(self, name):
        return getattr(self, name)


def _diff(x, fs):
    d = np.gradient(x, 1.0 / fs, edge_order=1)
    return moving_average(d, SMOOTH_WINDOW) if d.size >= SMOOTH_WINDOW else d


def derivatives(template, fs=None) -> DerivativeStack:
    """Four smoothed derivatives of a beat, in units per second.

    ``template`` is a :class:`~ppgmorph.beats.BeatTemplate` or an array; for
    a bare array pass ``fs`` (samples per second of the beat axis).
    """
    if fs is None:
        fs = template.fs_equiv
        x = np.asarray(template.samples, dtype=float)
    else:
        x = np.asarray(getattr(template, "samples", template), dtype=float)
    out = [x]
    for _ in DERIVATIVE_NAMES:
        out.append(_diff(out[-1], fs))
    return DerivativeStack(*out, fs=float(fs))


@dataclass(frozen=True)
class Marker:
    index: int
    derivative: str
    direction: str  # "up" (- to +) or "down" (+ to -)


def zero_crossings(y):
    """``(index, direction)`` of every sign change of ``y``.

    The reported index is whichever of the two bracketing samples is
    closer to zero. Exact zeros inherit the sign before them, so touching
    zero without changing sign is not a crossing.
    """
    y = np.asarray(y, dtype=float)
    s = np.sign(y)
    nz = np.flatnonzero(s)
    if nz.size < 2:
        return []
    # forward-fill zeros with the previous nonzero sign
    idx = np.maximum.accumulate(np.where(s != 0, np.arange(s.size), 0))
    filled = s[idx]
    filled[: nz[0]] = s[nz[0]]
    change = np.flatnonzero(filled[1:] != filled[:-1])
    out = []
    for i in change:
        j = i + 1
        k = i if abs(y[i]) <= abs(y[j]) else j
        out.append((int(k), "up" if filled[j] > 0 else "down"))
    return out


def detect_inflection_markers(stack: DerivativeStack):
    """Zero crossings of every derivative waveform, sorted by index."""
    markers = []
    for name in DERIVATIVE_NAMES:
        for k, direction in zero_crossings(stack.waveform(name)):
            markers.append(Marker(k, name, direction))
    markers.sort(key=lambda m: (m.index, DERIVATIVE_NAMES.index(m.derivative)))
    return markers


@dataclass(frozen=True)
class Point:
    idx: int
    val: float


@dataclass(frozen=True)
class FiducialSet:
    O: Point | None = None
    S: Point | None = None
    N: Point | None = None
    D: Point | None = None
    u: Point | None = None
    v: Point | None = None
    w: Point | None = None
    a: Point | None = None
    b: Point | None = None
    c: Point | None = None
    d: Point | None = None
    e: Point | None = None
    length: int = 0

    @property
    def flags(self):
        return {n: getattr(self, n) is not None for n in POINT_NAMES}

    def idx(self, name):
        p = getattr(self, name)
        return None if p is None else p.idx

    def to_dict(self):
        out = {}
        for n in POINT_NAMES:
            p = getattr(self, n)
            out[n] = None if p is None else {"idx": p.idx, "val": p.val}
        out["flags"] = self.flags
        return out

    def ordering_violations(self):
        """Names of the ordering rules this set breaks (empty if consistent)."""
        i = {n: self.idx(n) for n in POINT_NAMES}
        bad = []

        def chk(name, *names, strict=True):
            vals = [i[n] for n in names]
            if any(v is None for v in vals):
                return
            ok = all((x < y) if strict else (x <= y) for x, y in zip(vals, vals[1:]))
            if not ok:
                bad.append(name)

        chk("O<u<S", "O", "u", "S")
        chk("a<b", "a", "b")
        chk("O<=a", "O", "a", strict=False)
        chk("a<u", "a", "u")
        chk("a<S", "a", "S")
        chk("S<N<D", "S", "N", "D")
        chk("a<b<c<d<e", *[n for n in "abcde" if i[n] is not None])
        if i["D"] is not None and i["D"] > self.length - 1:
            bad.append("D<=L-1")
        return bad


def _local_max(y, lo, hi):
    """Indices of prominent local maxima of ``y`` within ``[lo, hi)``."""
    if hi - lo < 3:
        return np.array([], dtype=int)
    seg = y[lo:hi]
    prom = PROMINENCE_FRAC * (np.max(y) - np.min(y))
    if prom <= 0:
        return np.array([], dtype=int)
    pk, _ = find_peaks(seg, prominence=prom)
    return pk + lo


def _local_min(y, lo, hi):
    return _local_max(-np.asarray(y), lo, hi)


def _pt(y, k):
    return None if k is None else Point(int(k), float(y[k]))


def detect_fiducials(stack: DerivativeStack) -> FiducialSet:
    ppg, vpg, apg = stack.ppg, stack.vpg, stack.apg
    L = len(ppg)

    u = int(np.argmax(vpg))
    crossings = zero_crossings(vpg)
    ups_before = [k for k, d in crossings if d == "up" and k < u]
    O = ups_before[-1] if ups_before else 0
    downs_after = [k for k, d in crossings if d == "down" and k > u]
    if not downs_after:
        raise FiducialError("no systolic peak: VPG never turns negative after its maximum")
    S = downs_after[0]

    v = w = None
    if S < L - 1:
        v = S + 1 + int(np.argmin(vpg[S + 1 :]))
        peaks = _local_max(vpg, v + 1, L)
        w = int(peaks[0]) if peaks.size else None

    a = O + int(np.argmax(apg[O:u])) if u > O else None
    b = c = d = e = None
    if a is not None:
        mins = _local_min(apg, a + 1, L)
        b = int(mins[0]) if mins.size else None
        if b is not None:
            maxs = _local_max(apg, b + 1, L)
            c = int(maxs[0]) if maxs.size else None
        if c is not None:
            mins = _local_min(apg, c + 1, L)
            d = int(mins[0]) if mins.size else None
        if d is not None:
            maxs = _local_max(apg, d + 1, L)
            e = int(maxs[0]) if maxs.size else None

    N = D = None
    if v is not None:
        dips = [k for k, dd in crossings if dd == "up" and k > v]
        if dips:
            N = dips[0]
        elif w is not None:
            cand = _local_max(apg, S + 1, L)
            if cand.size:
                N = int(cand[np.argmin(np.abs(cand - w))])
    if N is not None:
        after = [k for k, dd in crossings if dd == "down" and k > N]
        if after:
            D = after[0]
        else:
            pk = _local_max(ppg, N + 1, L)
            D = int(pk[0]) if pk.size else None

    return FiducialSet(
        O=_pt(ppg, O),
        S=_pt(ppg, S),
        N=_pt(ppg, N),
        D=_pt(ppg, D),
        u=_pt(vpg, u),
        v=_pt(vpg, v),
        w=_pt(vpg, w),
        a=_pt(apg, a),
        b=_pt(apg, b),
        c=_pt(apg, c),
        d=_pt(apg, d),
        e=_pt(apg, e),
        length=L,
    )


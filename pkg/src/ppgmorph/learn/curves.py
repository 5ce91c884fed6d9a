"""Loss-curve summaries: smoothing and a settled-by-epoch check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ArgumentError


def smooth(values, window=10):
    """Trailing moving average; entry ``i`` averages epochs ``i-window+1 .. i``.

    The first ``window - 1`` entries average whatever epochs exist so far.
    """
    v = np.asarray(values, float)
    if window < 1:
        raise ArgumentError("window must be >= 1")
    c = np.concatenate([[0.0], np.cumsum(v)])
    i = np.arange(1, v.size + 1)
    lo = np.maximum(i - window, 0)
    return (c[i] - c[lo]) / (i - lo)


@dataclass(frozen=True)
class CurveCheck:
    total_drop: float  # first epoch minus the smoothed minimum
    max_rise: float  # largest later-minus-earlier increase of the smoothed curve
    tail_change: float  # |smoothed(by_epoch) - smoothed(last)|
    rise_tol: float
    plateau_tol: float

    @property
    def non_increasing(self):
        return self.max_rise <= self.rise_tol * self.total_drop

    @property
    def plateaued(self):
        return self.tail_change <= self.plateau_tol * self.total_drop

    @property
    def ok(self):
        return self.total_drop > 0 and self.non_increasing and self.plateaued


def check_curve(train_loss, window=10, by_epoch=250, rise_tol=0.15, plateau_tol=0.10):
    """Does the smoothed loss fall, stay down and flatten by ``by_epoch``?

    Mini-batch noise makes a strictly monotone curve unrealistic, so both
    conditions are measured against the total decrease: a rise counts only
    if it exceeds ``rise_tol`` of it, and the curve has plateaued when the
    change after ``by_epoch`` (1-based) is within ``plateau_tol`` of it.
    """
    v = np.asarray(train_loss, float)
    if v.size < by_epoch:
        raise ArgumentError(f"need at least {by_epoch} epochs, got {v.size}")
    sm = smooth(v, window)
    # running minimum from the left: the biggest climb above any earlier value
    rise = float(np.max(sm - np.minimum.accumulate(sm)))
    return CurveCheck(total_drop=float(v[0] - sm.min()), max_rise=rise,
                      tail_change=float(abs(sm[by_epoch - 1] - sm[-1])),
                      rise_tol=rise_tol, plateau_tol=plateau_tol)

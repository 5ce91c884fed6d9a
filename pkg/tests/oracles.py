"""Independent reference computations used by the tests.

Nothing here calls into ppgmorph; each oracle is the textbook formula
written out directly.
"""

import itertools

import numpy as np


def sos_gain(sos, freqs, fs):
    """|H(e^jw)| from the second-order sections, by evaluating each polynomial."""
    z = np.exp(1j * 2 * np.pi * np.asarray(freqs, float) / fs)
    h = np.ones_like(z)
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 / z + b2 / z**2) / (a0 + a1 / z + a2 / z**2)
    return np.abs(h)


def sos_pole_radii(sos):
    return np.concatenate([np.abs(np.roots(row[3:])) for row in sos])


def mann_whitney_auc(scores, labels):
    """P(score_pos > score_neg) + 0.5 P(tie), over all positive/negative pairs."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p, n in itertools.product(pos, neg):
        total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def pearson_abs(x, y):
    """|r| by the definitional sums; 0 for a constant column."""
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return 0.0
    return abs(sxy) / (sxx * syy) ** 0.5


def top_k_by_abs_r(X, y, k):
    """Indices of the k largest |r|; ties go to the lower column index."""
    scores = [pearson_abs(list(X[:, j]), list(y)) for j in range(X.shape[1])]
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
    return order[:k], scores


def amplitude_at(x, fs, f0):
    """Amplitude of the f0 component by projection on sin/cos (integer number of cycles)."""
    t = np.arange(len(x)) / fs
    c = 2 * np.mean(x * np.cos(2 * np.pi * f0 * t))
    s = 2 * np.mean(x * np.sin(2 * np.pi * f0 * t))
    return float(np.hypot(c, s))


def xcorr_lag(a, b):
    """Integer lag maximising the cross-correlation of b against a."""
    c = np.correlate(b - b.mean(), a - a.mean(), mode="full")
    return int(np.argmax(c) - (len(a) - 1))

"""Stratified, subject-grouped train/val/test partition."""

from __future__ import annotations

import numpy as np

from ..errors import SplitError
from ..io import Dataset

MIN_ROWS = 20


def _apportion(counts, frac):
    """Integer shares of ``round(frac * sum(counts))`` by largest remainder."""
    counts = np.asarray(counts, dtype=float)
    total = int(np.floor(frac * counts.sum() + 0.5))
    exact = frac * counts
    base = np.floor(exact).astype(int)
    short = total - base.sum()
    order = np.lexsort((np.arange(len(counts)), -(exact - base)))
    base[order[:short]] += 1
    return base


def split(ds: Dataset, ratios=(0.70, 0.15, 0.15), seed=0, stratify_by_class=True,
          classes=None, groups="subject_ids"):
    """Partition ``ds`` into train, val and test.

    ``classes`` gives a stratification label per row (defaults to
    ``ds.labels``). Rows sharing a subject id always land in the same fold,
    so augmented copies never leak across folds; pass ``groups=None`` to
    split rows individually. Fold sizes count groups: the test and val
    shares are ``round(ratio * n_groups)`` overall, spread over classes by
    largest remainder.

    Raises
    ------
    SplitError
        Fewer than 20 rows, ratios that do not sum to 1, a group mixing
        classes, or a class with fewer than 3 groups when stratifying.
    """
    r = np.asarray(ratios, dtype=float)
    if r.shape != (3,) or np.any(r < 0) or abs(r.sum() - 1.0) > 1e-9:
        raise SplitError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    if ds.n < MIN_ROWS:
        raise SplitError(f"need at least {MIN_ROWS} rows to split, got {ds.n}")
    cls = np.asarray(ds.labels if classes is None else classes).reshape(-1)
    if cls.shape[0] != ds.n:
        raise SplitError("classes length differs from row count")

    if groups == "subject_ids" and ds.subject_ids is not None:
        keys = np.asarray(ds.subject_ids)
    elif groups is None or groups == "subject_ids":
        keys = np.arange(ds.n).astype(str)
    else:
        keys = np.asarray(groups).astype(str)
    uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    gcls = cls[first]
    if np.any(cls != gcls[inverse]):
        raise SplitError("a subject's rows carry different classes")

    rng = np.random.default_rng(seed)
    fold = np.zeros(len(uniq), dtype=int)  # 0 train, 1 val, 2 test
    if stratify_by_class:
        labels, gcount = np.unique(gcls, return_counts=True)
        if np.any(gcount < 3):
            bad = labels[np.argmin(gcount)]
            raise SplitError(f"class {bad!r} has {gcount.min()} subjects; need at least 3")
        n_test = _apportion(gcount, r[2])
        n_val = _apportion(gcount, r[1])
        for c, nt, nv in zip(labels, n_test, n_val):
            members = np.flatnonzero(gcls == c)
            members = members[rng.permutation(members.size)]
            fold[members[:nt]] = 2
            fold[members[nt : nt + nv]] = 1
    else:
        g = len(uniq)
        nt = int(np.floor(r[2] * g + 0.5))
        nv = int(np.floor(r[1] * g + 0.5))
        perm = rng.permutation(g)
        fold[perm[:nt]] = 2
        fold[perm[nt : nt + nv]] = 1

    row_fold = fold[inverse]
    return tuple(ds.subset(np.flatnonzero(row_fold == k)) for k in (0, 1, 2))

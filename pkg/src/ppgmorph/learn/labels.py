"""Age to class label mapping."""

from __future__ import annotations

import numpy as np

from ..errors import LabelError
from .models import normalize_task

MIN_AGE = 3.0
BINARY_EDGE = 15.0  # age <= 15 is class 0
THREE_CLASS_EDGES = (12.0, 30.0)  # <=12 | (12, 30] | >30

CLASS_NAMES = {
    "binary": ["3-15", "15+"],
    "three_class": ["3-12", "13-30", "30+"],
}


def make_labels(ages, task):
    """Class index per age; regression returns the ages unchanged as floats."""
    task = normalize_task(task)
    a = np.asarray(ages, dtype=float).reshape(-1)
    if not np.all(np.isfinite(a)):
        raise LabelError("ages must be finite")
    low = np.flatnonzero(a < MIN_AGE)
    if low.size:
        raise LabelError(f"age {a[low[0]]} at row {low[0]} is below {MIN_AGE}")
    if task == "regression":
        return a.copy()
    if task == "binary":
        return (a > BINARY_EDGE).astype(int)
    lo, hi = THREE_CLASS_EDGES
    return np.where(a <= lo, 0, np.where(a <= hi, 1, 2)).astype(int)

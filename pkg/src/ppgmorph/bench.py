"""Detector-vs-generator benchmarks shared by the scripts and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import synth
from .fiducials import derivatives, detect_fiducials

# detection tolerance per landmark, milliseconds
FIDUCIAL_TOL_MS = {"S": 10.0, "N": 15.0, "D": 15.0}


@dataclass
class FiducialReport:
    n_beats: int
    errors_ms: dict = field(default_factory=dict)  # landmark -> errors where truth is present
    missed: dict = field(default_factory=dict)  # truth present, detector found nothing
    ordering_failures: list = field(default_factory=list)  # (beat index, violations)

    def hit_rate(self, name, tol_ms=None):
        """Fraction of beats with the landmark present whose detection is within tolerance."""
        tol = FIDUCIAL_TOL_MS[name] if tol_ms is None else tol_ms
        e = np.asarray(self.errors_ms.get(name, []), float)
        total = e.size + self.missed.get(name, 0)
        return float(np.sum(np.abs(e) <= tol) / total) if total else float("nan")

    def summary(self):
        out = {}
        for name in FIDUCIAL_TOL_MS:
            e = np.abs(np.asarray(self.errors_ms.get(name, []), float))
            out[name] = {"present": int(e.size + self.missed.get(name, 0)),
                         "hit_rate": self.hit_rate(name),
                         "max_abs_ms": float(e.max()) if e.size else None,
                         "median_abs_ms": float(np.median(e)) if e.size else None}
        out["ordering_failures"] = len(self.ordering_failures)
        return out


def fiducial_accuracy(n_beats=200, seed=11, L=400) -> FiducialReport:
    """Run the detector on ``n_beats`` clean beats drawn from the default cohort law.

    Each beat comes from a fresh subject (ages spread over the cohort range),
    is cut at its true onset, and is scored against the continuous-model truth.
    """
    spec = synth.CohortSpec.default(n_subjects=n_beats, seed=seed)
    rep = FiducialReport(n_beats=n_beats, errors_ms={k: [] for k in FIDUCIAL_TOL_MS},
                         missed={k: 0 for k in FIDUCIAL_TOL_MS})
    for i in range(n_beats):
        _, model, *_ = synth.sample_subject(spec, i)
        x, truth = synth.gen_beat(model, L=L, align="onset")
        T = model.beat_period_s
        fid = detect_fiducials(derivatives(x, fs=L / T))
        bad = fid.ordering_violations()
        if bad:
            rep.ordering_failures.append((i, bad))
        for name in FIDUCIAL_TOL_MS:
            t = getattr(truth, name)
            if t is None:
                continue
            k = fid.idx(name)
            if k is None:
                rep.missed[name] += 1
            else:
                rep.errors_ms[name].append((k * T / L - t) * 1000.0)
    return rep

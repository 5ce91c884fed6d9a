"""Detector error against generator truth, per landmark.

    python scripts/fiducial_accuracy.py --n-beats 200 --seed 11
"""

import json
from dataclasses import dataclass

import numpy as np
from _common import parse_into

from ppgmorph.bench import fiducial_accuracy


@dataclass(frozen=True)
class Args:
    n_beats: int = 200
    seed: int = 11
    beat_len: int = 400


def main():
    a = parse_into(Args, __doc__.splitlines()[0])
    rep = fiducial_accuracy(a.n_beats, a.seed, a.beat_len)
    print(json.dumps(rep.summary(), indent=1))
    for name, e in rep.errors_ms.items():
        e = np.asarray(e)
        q = np.percentile(e, [5, 50, 95]) if e.size else []
        print(name, "signed error ms p5/p50/p95:", np.round(q, 2))


if __name__ == "__main__":
    main()

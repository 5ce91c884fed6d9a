"""Worst backprop-vs-finite-difference error over many random batches.

    python scripts/gradcheck_sweep.py --seeds 30
"""

from dataclasses import dataclass

import numpy as np
from _common import parse_into

from ppgmorph.io import Dataset
from ppgmorph.learn import ModelConfig, grad_check


@dataclass(frozen=True)
class Args:
    seeds: int = 30
    batch: int = 4
    dim: int = 26


def main():
    a = parse_into(Args, __doc__.splitlines()[0])
    worst, skipped = {}, 0
    for seed in range(a.seeds):
        rng = np.random.default_rng(seed)
        batch = Dataset(rng.normal(size=(a.batch, a.dim)), rng.uniform(3, 65, a.batch),
                        [f"f{i}" for i in range(a.dim)])
        for kind in ("ffnn", "cnn"):
            for task in ("binary", "three_class", "regression"):
                r = grad_check(ModelConfig(kind=kind, task=task, input_dim=a.dim, seed=seed), batch,
                               raise_on_fail=False)
                skipped += r.skipped
                key = f"{kind}/{task}"
                if r.max_rel_error > worst.get(key, (0, ""))[0]:
                    worst[key] = (r.max_rel_error, r.worst()[0])
    for key, (err, tensor) in sorted(worst.items()):
        print(f"{key:20s} {err:.3e}  ({tensor})")
    print("kink-straddling probes skipped:", skipped)


if __name__ == "__main__":
    main()

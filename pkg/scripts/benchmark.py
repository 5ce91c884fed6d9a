"""Full default-cohort run, then the benchmark and loss-curve verdicts.

    python scripts/benchmark.py --out runs/default --seed 7
"""

import json
import time
from dataclasses import dataclass, replace

from _common import parse_into

from ppgmorph.config import PipelineConfig
from ppgmorph.learn import check_curve
from ppgmorph.pipeline import run_pipeline


@dataclass(frozen=True)
class Args:
    out: str = "runs/default"
    seed: int = 7
    epochs: int = 300
    jobs: int = 1


def main():
    a = parse_into(Args, __doc__.splitlines()[0])
    base = PipelineConfig()
    cfg = replace(base, seed=a.seed, jobs=a.jobs, train=replace(base.train, epochs=a.epochs))
    t0 = time.perf_counter()
    res = run_pipeline(cfg, a.out)
    wall = time.perf_counter() - t0
    tasks = res.metrics["tasks"]
    ffnn_bin = tasks["binary"]["ffnn"]["accuracy"]
    ffnn_3 = tasks["three_class"]["ffnn"]["accuracy"]
    lr_3 = tasks["three_class"]["logistic"]["accuracy"]
    mae = tasks["regression"]["ffnn"]["mae"]
    checks = {
        "ffnn binary accuracy >= 0.95": (ffnn_bin, ffnn_bin >= 0.95),
        "ffnn three-class accuracy >= 0.90": (ffnn_3, ffnn_3 >= 0.90),
        "ffnn regression MAE <= 5": (mae, mae <= 5.0),
        "logistic three-class < ffnn": (lr_3, lr_3 < ffnn_3),
        "wall time < 300 s": (wall, wall < 300),
    }
    for (task, kind), model in sorted(res.models.items()):
        if a.epochs >= 250:
            c = check_curve(model.history["train_loss"])
            checks[f"loss settled {task}/{kind}"] = (round(c.max_rise / c.total_drop, 4), c.ok)
    for name, (value, ok) in checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({value:.4g})")
    print(json.dumps(res.manifest["timings_s"], indent=1))


if __name__ == "__main__":
    main()

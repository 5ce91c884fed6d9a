"""Logistic vs FFNN vs CNN over several run seeds on one extracted cohort.

Features are extracted once; each seed changes the augmentation noise, the
split, the initialisation and the batch order.

    python scripts/seed_sweep.py --seeds 1 2 3 4 5 6 --tasks three_class binary
"""

import json
from dataclasses import dataclass, replace

import numpy as np
from _common import parse_into

from ppgmorph import features
from ppgmorph.config import PipelineConfig
from ppgmorph.learn import evaluate, train
from ppgmorph.pipeline import MODEL_TASKS, extract_dataset, model_config, split_for_task


@dataclass(frozen=True)
class Args:
    seeds: tuple = (1, 2, 3, 4, 5, 6)
    tasks: tuple = ("three_class", "binary")
    models: tuple = ("logistic", "linear", "ffnn")
    epochs: int = 300
    cohort_seed: int = 7
    out: str = ""


def main():
    a = parse_into(Args, __doc__.splitlines()[0])
    base = replace(PipelineConfig(seed=a.cohort_seed), train=replace(PipelineConfig().train, epochs=a.epochs))
    ds, _, _ = extract_dataset(base)
    ranked = features.pearson_rank(ds, base.features.k)
    kept = ds.select(ranked.kept_names)
    table = {}
    for seed in a.seeds:
        cfg = replace(base, seed=seed)
        aug = features.augment_gaussian(kept, cfg.features.augment_factor, cfg.features.sigma_frac, seed=seed)
        for task in a.tasks:
            tr, va, te = split_for_task(aug, task, cfg)
            for kind in a.models:
                if task not in MODEL_TASKS[kind]:
                    continue
                m = evaluate(train(model_config(cfg, kind, task, aug.X.shape[1]), tr, va), te)
                score = m.mae if task == "regression" else m.accuracy
                table.setdefault(f"{task}/{kind}", []).append(score)
                print(f"seed {seed} {task:12s} {kind:9s} {score:.4f}", flush=True)
    print()
    for key, vals in table.items():
        v = np.array(vals)
        print(f"{key:24s} mean {v.mean():.4f}  sd {v.std(ddof=1) if v.size > 1 else 0:.4f}  "
              f"min {v.min():.4f}  max {v.max():.4f}")
    if a.out:
        with open(a.out, "w") as fh:
            json.dump(table, fh, indent=1)


if __name__ == "__main__":
    main()

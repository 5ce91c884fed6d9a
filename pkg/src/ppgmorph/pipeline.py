"""End-to-end run: recordings -> templates -> features -> models -> reports.

Stages run in order; per-subject work (synthesis, preprocessing, beat
averaging, fiducials, features) goes through a process pool of
``cfg.jobs`` workers. All randomness derives from ``cfg.seed``.

Artifacts written to the output directory:

* ``features.csv``  un-augmented 60-feature matrix with subject ids
* ``ranking.json``  |r| per feature and the kept set
* ``metrics.json``  test metrics per task and model (no timings, so reruns
  compare byte for byte)
* ``confusion.csv`` FFNN confusion matrix (percent) of the first
  classification task, ``confusion_<task>_<model>.csv`` for every model
* ``auc_table.csv`` accuracy and AUC per model and task
* ``loss_curves.csv`` per-epoch train/val curves of every model
* ``regression_scatter.csv`` / ``.svg`` FFNN age predictions on the test fold
* ``models/`` one manifest + blob per trained model
* ``manifest.json`` config, seeds, versions, input hashes, stage timings
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, beats, dsp, features, svg
from .config import PipelineConfig
from .errors import FeatureError, FiducialError, PPGError, QualityError
from .io import Dataset, load_recording, save_feature_matrix, write_json, write_table
from .learn import CLASS_NAMES, ModelConfig, evaluate, make_labels, save_model, split, train
from .learn.models import normalize_task
from .synth import CohortSpec, gen_subject, with_zero_age_slope

log = logging.getLogger("ppgmorph.pipeline")

MODEL_TASKS = {
    "linear": ("regression",),
    "logistic": ("binary", "three_class"),
    "ffnn": ("binary", "three_class", "regression"),
    "cnn": ("binary", "three_class", "regression"),
}
# rows lost to quality gates are skipped; anything else aborts the run
SUBJECT_ERRORS = (QualityError, FiducialError, FeatureError)


class StageError(PPGError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class SubjectResult:
    subject_id: str
    age: float
    values: np.ndarray | None = None
    template: np.ndarray | None = None
    fs_equiv: float | None = None
    n_beats: int = 0
    dropped: int = 0
    error: str | None = None


def cohort_spec(cfg: PipelineConfig) -> CohortSpec:
    s = cfg.synth
    spec = CohortSpec.default(n_subjects=s.n_subjects, seed=cfg.synth_seed,
                              age_range=tuple(s.age_range), duration_s=s.duration_s, fs=s.fs)
    return with_zero_age_slope(spec) if s.zero_age_slope else spec


def process_signal(samples, fs, meta, cfg: PipelineConfig):
    """Preprocess one recording and return (FeatureVector, template, stack, fiducials, segments)."""
    y = dsp.preprocess(samples, fs, cfg.preprocess)
    b = cfg.beats
    tpl, segs, _ = beats.template_from_signal(y, fs, L=b.beat_len, corr_gate=b.corr_gate,
                                              min_beats=b.min_beats)
    fv, stack, fid = features.features_from_template(tpl, meta)
    return fv, tpl, stack, fid, segs


def _subject_job(job):
    kind, payload, cfg = job
    if kind == "synth":
        spec, index = payload
        subj = gen_subject(spec, index)
        rec, meta = subj.recording, subj.meta
    else:
        rec = load_recording(payload)
        meta = rec.meta
    res = SubjectResult(subject_id=meta.subject_id, age=float(meta.age))
    try:
        fv, tpl, _, _, segs = process_signal(rec.samples, rec.fs, meta, cfg)
    except SUBJECT_ERRORS as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        return res
    res.values = fv.values
    res.template = tpl.samples
    res.fs_equiv = tpl.fs_equiv
    res.n_beats = tpl.n_beats_averaged
    res.dropped = segs.dropped
    return res


def _map(fn, jobs, n_workers):
    if n_workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * n_workers))))


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def acquire_jobs(cfg: PipelineConfig):
    """Work items for the extraction stage and a record of the inputs."""
    if cfg.input_dir:
        paths = sorted(p for p in Path(cfg.input_dir).glob("*.csv"))
        if not paths:
            raise StageError("acquire", f"no recordings (*.csv) in {cfg.input_dir}")
        inputs = {p.name: _sha256(p) for p in paths}
        for p in paths:
            side = p.with_suffix(".json")
            if side.exists():
                inputs[side.name] = _sha256(side)
        return [("file", str(p), cfg) for p in paths], {"source": "files", "files": inputs}
    spec = cohort_spec(cfg)
    law = json.dumps(spec.law, sort_keys=True).encode()
    info = {"source": "synthetic", "n_subjects": spec.n_subjects, "seed": spec.seed,
            "law_sha256": hashlib.sha256(law).hexdigest()}
    return [("synth", (spec, i), cfg) for i in range(spec.n_subjects)], info


def extract_dataset(cfg: PipelineConfig):
    """Feature matrix of every usable subject plus the per-subject results."""
    jobs, info = acquire_jobs(cfg)
    results = _map(_subject_job, jobs, cfg.jobs)
    ok = [r for r in results if r.error is None]
    if len(ok) < 3:
        raise StageError("extract", f"only {len(ok)} subjects produced features")
    ds = Dataset(np.vstack([r.values for r in ok]), [r.age for r in ok], features.FEATURE_NAMES,
                 [r.subject_id for r in ok])
    return ds, results, info


def model_jobs(cfg: PipelineConfig):
    """(task, kind) pairs to train, in a fixed order."""
    out = []
    for task in cfg.train.tasks:
        task = normalize_task(task)
        for kind in cfg.train.models:
            if task in MODEL_TASKS[kind]:
                out.append((task, kind))
    return out


def model_config(cfg: PipelineConfig, kind, task, input_dim):
    t = cfg.train
    return ModelConfig(kind=kind, task=task, input_dim=input_dim, learning_rate=t.lr.get(kind),
                       epochs=t.epochs, batch_size=t.batch_size, l1=t.l1, l2=t.l2,
                       dropout_rate=t.dropout_rate, seed=cfg.seed)


def split_for_task(ds: Dataset, task, cfg: PipelineConfig):
    # regression folds are stratified on the three age groups
    strat = "three_class" if task == "regression" else task
    return split(ds, cfg.train.split, seed=cfg.seed, classes=make_labels(ds.labels, strat))


@dataclass
class RunResult:
    out_dir: Path
    metrics: dict
    manifest: dict
    models: dict = field(default_factory=dict)


class _Timer:
    def __init__(self, manifest):
        self.manifest = manifest

    def __call__(self, stage):
        return _Stage(self.manifest, stage)


class _Stage:
    def __init__(self, manifest, name):
        self.manifest, self.name = manifest, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s", self.name)
        return self

    def __exit__(self, et, ev, tb):
        self.manifest["timings_s"][self.name] = round(time.perf_counter() - self.t0, 4)
        if ev is not None and not isinstance(ev, StageError):
            raise StageError(self.name, ev) from ev
        return False


def versions():
    import scipy

    return {"ppgmorph": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def run_pipeline(cfg: PipelineConfig, out_dir) -> RunResult:
    """Run every stage and write the artifacts listed in the module docstring."""
    cfg.validate()
    out = Path(out_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    manifest = {"status": "running", "config": cfg.to_dict(), "seeds": {"run": cfg.seed,
                "synth": cfg.synth_seed}, "versions": versions(), "timings_s": {}, "artifacts": []}
    stage = _Timer(manifest)
    mpath = out / "manifest.json"

    def wrote(name):
        manifest["artifacts"].append(name)

    try:
        with stage("extract"):
            ds, results, inputs = extract_dataset(cfg)
            manifest["inputs"] = inputs
            manifest["excluded_subjects"] = {r.subject_id: r.error for r in results if r.error}
            save_feature_matrix(ds, out / "features.csv")
            wrote("features.csv")
            first = next(r for r in results if r.error is None)
            write_table(out / "example_template.csv", ["sample"], [[float(v)] for v in first.template])
            wrote("example_template.csv")

        with stage("rank"):
            k = min(cfg.features.k, len(ds.feature_names))
            ranking = features.pearson_rank(ds, k)
            write_json(out / "ranking.json", ranking.as_dict())
            wrote("ranking.json")
            kept = ds.select(ranking.kept_names)

        with stage("augment"):
            aug = features.augment_gaussian(kept, cfg.features.augment_factor,
                                            cfg.features.sigma_frac, seed=cfg.seed)

        metrics = {"dataset": {"n_subjects": ds.n, "n_augmented": aug.n,
                               "kept_features": ranking.kept_names}, "tasks": {}}
        curves, scatter, trained = [], None, {}
        for task, kind in model_jobs(cfg):
            with stage(f"train:{task}:{kind}"):
                tr, va, te = split_for_task(aug, task, cfg)
                mcfg = model_config(cfg, kind, task, aug.X.shape[1])
                model = train(mcfg, tr, va)
                m = evaluate(model, te)
                entry = m.to_dict()
                entry.update(n_train=tr.n, n_val=va.n, n_test=te.n)
                metrics["tasks"].setdefault(task, {})[kind] = entry
                trained[(task, kind)] = model
                save_model(model, out / "models" / f"{kind}_{task}", extra={"test_metrics": entry})
                wrote(f"models/{kind}_{task}.json")
                h = model.history
                for i, ep in enumerate(h["epoch"]):
                    curves.append([task, kind, ep] + [_at(h, c, i) for c in CURVE_COLUMNS])
                if task == "regression" and (scatter is None or kind == "ffnn"):
                    scatter = (kind, te, model.predict(te.X), m.mae)

        with stage("report"):
            write_json(out / "metrics.json", metrics)
            wrote("metrics.json")
            write_table(out / "loss_curves.csv", ["task", "model", "epoch", *CURVE_COLUMNS], curves)
            wrote("loss_curves.csv")
            _write_auc_table(out / "auc_table.csv", metrics)
            wrote("auc_table.csv")
            for name in _write_confusions(out, metrics):
                wrote(name)
            if scatter is not None:
                kind, te, pred, mae_v = scatter
                write_table(out / "regression_scatter.csv", ["subject_id", "true_age", "predicted_age"],
                            [[sid, float(a), float(p)] for sid, a, p in zip(te.subject_ids, te.labels, pred)])
                svg.save(out / "regression_scatter.svg",
                         svg.scatter_figure(te.labels, pred, mae_v, f"{kind} regression (test fold)"))
                wrote("regression_scatter.csv")
                wrote("regression_scatter.svg")
    except StageError as exc:
        manifest["status"] = "incomplete"
        manifest["failed_stage"] = exc.stage
        manifest["error"] = str(exc.cause)
        write_json(mpath, manifest)
        raise

    manifest["status"] = "complete"
    manifest["metrics_summary"] = _summary(metrics)
    manifest["metrics_sha256"] = _sha256(out / "metrics.json")
    write_json(mpath, manifest)
    return RunResult(out, metrics, manifest, trained)


CURVE_COLUMNS = ("train_loss", "val_loss", "train_accuracy", "val_accuracy", "train_auc", "val_auc",
                 "train_mae", "val_mae")


def _at(h, key, i):
    v = h.get(key)
    return "" if not v else v[i]


def _summary(metrics):
    out = {}
    for task, models in metrics["tasks"].items():
        for kind, m in models.items():
            key = "mae" if task == "regression" else "accuracy"
            out[f"{task}/{kind}/{key}"] = m.get(key)
    return out


def _write_auc_table(path, metrics):
    tasks = [t for t in ("binary", "three_class") if t in metrics["tasks"]]
    kinds = []
    for t in metrics["tasks"].values():
        kinds += [k for k in t if k not in kinds]
    header = ["model"]
    for t in tasks:
        header += [f"{t}_accuracy", f"{t}_auc"]
    if "regression" in metrics["tasks"]:
        header.append("regression_mae")
    rows = []
    for k in kinds:
        row = [k]
        for t in tasks:
            m = metrics["tasks"][t].get(k, {})
            row += [m.get("accuracy", ""), m.get("auc", "") if m.get("auc") is not None else ""]
        if "regression" in metrics["tasks"]:
            row.append(metrics["tasks"]["regression"].get(k, {}).get("mae", ""))
        rows.append(row)
    write_table(path, header, rows)


def _confusion_rows(task, conf):
    names = CLASS_NAMES[task]
    return ["true\\pred"] + names, [[names[i]] + [float(v) for v in row] for i, row in enumerate(conf)]


def _write_confusions(out, metrics):
    """Every model's matrix, plus ``confusion.csv`` for the first classification task.

    That file holds the FFNN matrix when an FFNN was trained, otherwise the
    first model's.
    """
    written, main = [], None
    for task, models in metrics["tasks"].items():
        if task == "regression":
            continue
        for kind, m in models.items():
            header, rows = _confusion_rows(task, m["confusion"])
            name = f"confusion_{task}_{kind}.csv"
            write_table(out / name, header, rows)
            written.append(name)
        if main is None:
            kind = "ffnn" if "ffnn" in models else next(iter(models))
            main = _confusion_rows(task, models[kind]["confusion"])
    if main is not None:
        write_table(out / "confusion.csv", *main)
        written.append("confusion.csv")
    return written

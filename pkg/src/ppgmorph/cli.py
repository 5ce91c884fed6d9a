"""Command line interface.

Every subcommand accepts the global flags ``--config``, ``--seed``,
``--jobs`` and ``--out`` (before or after the subcommand name). The log
level comes from ``PPGMORPH_LOG`` (default WARNING).

Exit codes: 0 success, 1 a check failed (gradcheck), 2 bad input or
arguments, 3 a pipeline stage failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import beats, dsp, features, svg
from .config import PipelineConfig, load_config
from .errors import FileError, GradCheckError, PPGError
from .fiducials import derivatives, detect_fiducials
from .io import (
    load_feature_matrix,
    load_recording,
    load_template,
    read_table,
    save_feature_matrix,
    save_recording,
    save_template,
    write_json,
    write_table,
)

log = logging.getLogger("ppgmorph")


# -- helpers --------------------------------------------------------------------


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    return cfg.validate()


def _out(args, default):
    p = Path(args.out or default)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _need(path):
    p = Path(path)
    if not p.exists():
        raise FileError(f"input not found: {p}")
    return p


def _template_meta_path(path):
    return Path(path).with_suffix(".json")


# -- subcommands ----------------------------------------------------------------


def cmd_synth(args):
    from .pipeline import cohort_spec
    from .synth import gen_subject

    cfg = _config(args)
    synth = cfg.synth
    if args.n is not None:
        synth = replace(synth, n_subjects=args.n)
    cfg = replace(cfg, synth=replace(synth, seed=args.seed if args.seed is not None else synth.seed))
    spec = cohort_spec(cfg)
    out = _out(args, "cohort")
    for i in range(spec.n_subjects):
        subj = gen_subject(spec, i)
        save_recording(subj.recording, out / f"{subj.meta.subject_id}.csv")
    print(f"wrote {spec.n_subjects} recordings to {out}")
    return 0


def cmd_preprocess(args):
    cfg = _config(args)
    rec = load_recording(_need(args.input), fs=args.fs, require_meta=False)
    y = dsp.preprocess(rec.samples, rec.fs, cfg.preprocess)
    out = Path(args.out or Path(args.input).with_name(Path(args.input).stem + "_pre.csv"))
    write_table(out, ["t", "ppg"], [[float(i / rec.fs), float(v)] for i, v in enumerate(y)])
    print(out)
    return 0


def cmd_beats(args):
    cfg = _config(args)
    rec = load_recording(_need(args.input), fs=args.fs, require_meta=False)
    x = rec.samples if args.preprocessed else dsp.preprocess(rec.samples, rec.fs, cfg.preprocess)
    b = cfg.beats
    L = args.beat_len or b.beat_len
    gate = args.corr_gate if args.corr_gate is not None else b.corr_gate
    min_beats = args.min_beats or b.min_beats
    tpl, segs, onsets = beats.template_from_signal(x, rec.fs, L=L, corr_gate=gate, min_beats=min_beats)
    out = Path(args.out or Path(args.input).with_name(Path(args.input).stem + "_template.csv"))
    save_template(tpl.samples, out)
    write_json(_template_meta_path(out), {
        "fs_equiv": tpl.fs_equiv, "n_beats_averaged": tpl.n_beats_averaged,
        "n_onsets": int(onsets.size), "dropped_segments": segs.dropped,
        "ibi_mean_s": tpl.stats.ibi_mean_s, "ibi_std_s": tpl.stats.ibi_std_s,
        "amp_std": tpl.stats.amp_std,
    })
    print(out)
    return 0


def _load_template_with_fs(path, fs):
    samples = load_template(_need(path))
    side = _template_meta_path(path)
    if fs is None and side.exists():
        fs = json.loads(side.read_text())["fs_equiv"]
    if fs is None:
        fs = float(len(samples))  # one-second beat
    return samples, float(fs)


def cmd_fiducials(args):
    samples, fs = _load_template_with_fs(args.input, args.fs)
    stack = derivatives(samples, fs=fs)
    fid = detect_fiducials(stack)
    text = json.dumps(fid.to_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    if args.svg:
        svg.save(args.svg, svg.derivative_figure(stack, fid))
    return 0


def cmd_extract(args):
    from .pipeline import extract_dataset

    cfg = _config(args)
    if args.input_dir:
        cfg = replace(cfg, input_dir=str(_need(args.input_dir)))
    if args.n is not None:
        cfg = replace(cfg, synth=replace(cfg.synth, n_subjects=args.n))
    ds, results, _ = extract_dataset(cfg)
    out = Path(args.out or "features.csv")
    save_feature_matrix(ds, out)
    skipped = [r.subject_id for r in results if r.error]
    print(f"{ds.n} subjects -> {out}" + (f" ({len(skipped)} skipped)" if skipped else ""))
    return 0


def cmd_rank(args):
    ds = load_feature_matrix(_need(args.input))
    ranked = features.pearson_rank(ds, args.k)
    out = Path(args.out or Path(args.input).with_name("features_ranked.csv"))
    save_feature_matrix(ds.select(ranked.kept_names), out)
    write_json(out.with_suffix(".json"), ranked.as_dict())
    for n, s in zip(ranked.kept_names, ranked.kept_scores):
        print(f"{s:.4f}  {n}")
    return 0


def cmd_augment(args):
    cfg = _config(args)
    ds = load_feature_matrix(_need(args.input))
    seed = cfg.seed if args.seed is None else args.seed
    aug = features.augment_gaussian(ds, args.factor, args.sigma, seed=seed)
    out = Path(args.out or Path(args.input).with_name("features_augmented.csv"))
    save_feature_matrix(aug, out)
    print(f"{ds.n} -> {aug.n} rows: {out}")
    return 0


def cmd_train(args):
    from .learn import evaluate, save_model, train
    from .pipeline import CURVE_COLUMNS, model_config, split_for_task

    cfg = _config(args)
    if args.epochs:
        cfg = replace(cfg, train=replace(cfg.train, epochs=args.epochs))
    if args.lr:
        cfg = replace(cfg, train=replace(cfg.train, lr={**cfg.train.lr, args.model: args.lr}))
    ds = load_feature_matrix(_need(args.input))
    task = args.task.replace("-", "_")
    tr, va, te = split_for_task(ds, task, cfg)
    mcfg = model_config(cfg, args.model, task, ds.X.shape[1])
    model = train(mcfg, tr, va)
    m = evaluate(model, te).to_dict()
    out = _out(args, "model")
    save_model(model, out / f"{args.model}_{task}", extra={"test_metrics": m})
    h = model.history
    keys = [k for k in CURVE_COLUMNS if k in h]
    write_table(out / "loss_curves.csv", ["epoch"] + keys,
                [[e] + [h[k][i] for k in keys] for i, e in enumerate(h["epoch"])])
    save_feature_matrix(te, out / "test_split.csv")
    print(json.dumps(m, indent=2))
    return 0


def cmd_eval(args):
    from .learn import evaluate, load_model

    model = load_model(_need(args.model))
    ds = load_feature_matrix(_need(args.input))
    ds = ds.select(model.feature_names)
    m = evaluate(model, ds).to_dict()
    text = json.dumps(m, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_pipeline(args):
    from .pipeline import run_pipeline

    cfg = _config(args)
    tr = cfg.train
    if args.task:
        tr = replace(tr, tasks=tuple(t.replace("-", "_") for t in args.task))
    if args.models:
        tr = replace(tr, models=tuple(args.models))
    if args.epochs:
        tr = replace(tr, epochs=args.epochs)
    cfg = replace(cfg, train=tr)
    if args.input_dir:
        cfg = replace(cfg, input_dir=str(_need(args.input_dir)))
    if args.n is not None:
        cfg = replace(cfg, synth=replace(cfg.synth, n_subjects=args.n))
    res = run_pipeline(cfg.validate(), _out(args, "run"))
    print(json.dumps(res.manifest["metrics_summary"], indent=2, sort_keys=True))
    return 0


def cmd_plot(args):
    out = _out(args, "plots")
    made = []
    if args.template:
        samples, fs = _load_template_with_fs(args.template, args.fs)
        stack = derivatives(samples, fs=fs)
        fid = detect_fiducials(stack)
        p = out / "derivatives.svg"
        svg.save(p, svg.derivative_figure(stack, fid))
        made.append(p)
    if args.curves:
        header, rows = read_table(_need(args.curves))
        made += _plot_curves(header, rows, out)
    if args.scatter:
        header, rows = read_table(_need(args.scatter))
        i_t, i_p = header.index("true_age"), header.index("predicted_age")
        t = np.array([float(r[i_t]) for r in rows])
        p_ = np.array([float(r[i_p]) for r in rows])
        p = out / "regression_scatter.svg"
        svg.save(p, svg.scatter_figure(t, p_, float(np.mean(np.abs(t - p_)))))
        made.append(p)
    if not made:
        raise FileError("nothing to plot: pass --template, --curves and/or --scatter")
    for p in made:
        print(p)
    return 0


def _plot_curves(header, rows, out):
    col = {h: i for i, h in enumerate(header)}
    groups = {}
    for r in rows:
        key = (r[col["task"]], r[col["model"]]) if "task" in col else ("", "")
        groups.setdefault(key, []).append(r)
    made = []
    for (task, model), rs in sorted(groups.items()):
        ep = np.array([float(r[col["epoch"]]) for r in rs])
        series = {}
        for metric in ("loss", "accuracy", "auc", "mae"):
            lines = {}
            for name in (f"train_{metric}", f"val_{metric}"):
                if name in col and rs[0][col[name]] != "":
                    lines[name] = np.array([float(r[col[name]]) for r in rs])
            if lines:
                series[metric] = lines
        stem = "_".join(x for x in ("curves", task, model) if x)
        p = out / f"{stem}.svg"
        svg.save(p, svg.curves_figure(ep, series, f"{model} {task}".strip()))
        made.append(p)
    return made


def cmd_gradcheck(args):
    from .io import Dataset as _DS
    from .learn import ModelConfig, grad_check

    cfg = _config(args)
    rng = np.random.default_rng(cfg.seed)
    X = rng.normal(size=(args.batch, args.dim))
    ages = rng.uniform(3, 65, args.batch)
    batch = _DS(X, ages, [f"f{i}" for i in range(args.dim)])
    failed = 0
    for kind in args.models:
        for task in args.tasks:
            task = task.replace("-", "_")
            mcfg = ModelConfig(kind=kind, task=task, input_dim=args.dim, seed=cfg.seed)
            try:
                res = grad_check(mcfg, batch)
                status = "ok"
            except GradCheckError as exc:
                res, status = None, f"FAIL ({exc.tensor})"
                failed += 1
            err = res.max_rel_error if res else float("nan")
            print(f"{kind:8s} {task:12s} max_rel_error={err:.3e} {status}")
    return 1 if failed else 0


# -- parser ---------------------------------------------------------------------


def _globals(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="TOML or JSON run configuration")
    p.add_argument("--seed", type=int, default=d, help="run seed (overrides config)")
    p.add_argument("--jobs", type=int, default=d, help="worker processes for per-subject stages")
    p.add_argument("--out", default=d, help="output file or directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="ppgmorph", description="PPG beat morphology features and age models.")
    _globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _globals(p, suppress=True)
        p.set_defaults(fn=fn)
        return p

    p = add("synth", cmd_synth, "write a synthetic cohort (recordings + metadata)")
    p.add_argument("what", nargs="?", default="cohort", choices=["cohort"])
    p.add_argument("--n", type=int, help="number of subjects")

    p = add("preprocess", cmd_preprocess, "filter, detrend, demodulate and z-score one recording")
    p.add_argument("input")
    p.add_argument("--fs", type=float)

    p = add("beats", cmd_beats, "average one recording's beats into a template")
    p.add_argument("input")
    p.add_argument("--fs", type=float)
    p.add_argument("--preprocessed", action="store_true", help="input is already preprocessed")
    p.add_argument("--beat-len", type=int)
    p.add_argument("--corr-gate", type=float)
    p.add_argument("--min-beats", type=int)

    p = add("fiducials", cmd_fiducials, "detect fiducial points on a template (JSON)")
    p.add_argument("input", help="template CSV")
    p.add_argument("--fs", type=float, help="template samples per second (default: sidecar JSON)")
    p.add_argument("--svg", help="also write a five-panel derivative plot")

    p = add("extract", cmd_extract, "features of every recording in a directory or of a synthetic cohort")
    p.add_argument("--input-dir")
    p.add_argument("--n", type=int, help="synthetic cohort size when no --input-dir")

    p = add("rank", cmd_rank, "keep the k features most correlated with age")
    p.add_argument("input")
    p.add_argument("--k", type=int, default=26)

    p = add("augment", cmd_augment, "Gaussian-noise augmentation of a feature matrix")
    p.add_argument("input")
    p.add_argument("--factor", type=int, default=15)
    p.add_argument("--sigma", type=float, default=0.05)

    p = add("train", cmd_train, "train one model on a feature matrix")
    p.add_argument("input")
    p.add_argument("--model", default="ffnn", choices=["linear", "logistic", "ffnn", "cnn"])
    p.add_argument("--task", default="binary", choices=["binary", "three-class", "three_class", "regression"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)

    p = add("eval", cmd_eval, "evaluate a saved model on a feature matrix")
    p.add_argument("model", help="model manifest (.json)")
    p.add_argument("input", help="feature CSV with age_label")

    p = add("pipeline", cmd_pipeline, "run every stage and write all reports")
    p.add_argument("--task", action="append", choices=["binary", "three-class", "three_class", "regression"],
                   help="restrict to this task (repeatable)")
    p.add_argument("--models", nargs="+", choices=["linear", "logistic", "ffnn", "cnn"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--input-dir")
    p.add_argument("--n", type=int, help="synthetic cohort size")

    p = add("plot", cmd_plot, "SVG figures from stage outputs")
    p.add_argument("--template", help="template CSV: five-panel derivative plot")
    p.add_argument("--fs", type=float)
    p.add_argument("--curves", help="loss_curves.csv: loss/accuracy/AUC vs epoch")
    p.add_argument("--scatter", help="regression_scatter.csv: predicted vs true age")

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of backprop")
    p.add_argument("--models", nargs="+", default=["ffnn", "cnn"], choices=["ffnn", "cnn"])
    p.add_argument("--tasks", nargs="+", default=["binary", "three_class", "regression"])
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--dim", type=int, default=26)
    return parser


def main(argv=None):
    level = os.environ.get("PPGMORPH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    from .pipeline import StageError

    try:
        return args.fn(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except PPGError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

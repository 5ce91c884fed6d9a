"""Run configuration: dataclasses plus TOML/JSON loading.

File layout (every key optional)::

    seed = 7
    jobs = 1
    input_dir = "recordings/"     # omit for a synthetic cohort

    [synth]     n_subjects, seed, age_range, duration_s, fs, zero_age_slope
    [filter]    order, stopband_hz, atten_db
    [ma]        window
    [detrend]   window_s
    [envelope]  window_s
    [beats]     beat_len, corr_gate, min_beats
    [features]  k, augment_factor, sigma_frac
    [train]     tasks, models, epochs, batch_size, l1, l2, dropout_rate,
                split = [0.70, 0.15, 0.15], lr = {ffnn = 1e-2, ...}
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .dsp import PreprocessConfig
from .errors import ArgumentError, FileError, ParseError
from .learn.models import KINDS, TASKS, normalize_task

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 179
    seed: int | None = None  # falls back to the run seed
    age_range: tuple[float, float] = (3.0, 65.0)
    duration_s: float = 120.0
    fs: float = 400.0
    zero_age_slope: bool = False


@dataclass(frozen=True)
class BeatsConfig:
    beat_len: int = 400
    corr_gate: float = 0.8
    min_beats: int = 10


@dataclass(frozen=True)
class FeaturesConfig:
    k: int = 26
    augment_factor: int = 15
    sigma_frac: float = 0.05


@dataclass(frozen=True)
class TrainConfig:
    tasks: tuple[str, ...] = TASKS
    models: tuple[str, ...] = KINDS
    epochs: int = 300
    batch_size: int = 32
    l1: float = 1e-4
    l2: float = 1e-4
    dropout_rate: float = 0.2
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    lr: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 7
    jobs: int = 1
    input_dir: str | None = None
    synth: SynthConfig = SynthConfig()
    preprocess: PreprocessConfig = PreprocessConfig()
    beats: BeatsConfig = BeatsConfig()
    features: FeaturesConfig = FeaturesConfig()
    train: TrainConfig = TrainConfig()

    def validate(self):
        for t in self.train.tasks:
            normalize_task(t)
        bad = [m for m in self.train.models if m not in KINDS]
        if bad:
            raise ArgumentError(f"unknown model kinds {bad}; expected some of {KINDS}")
        if self.jobs < 1:
            raise ArgumentError("jobs must be >= 1")
        if self.features.k < 1:
            raise ArgumentError("k must be >= 1")
        return self

    def to_dict(self):
        d = asdict(self)
        d["train"]["tasks"] = list(self.train.tasks)
        d["train"]["models"] = list(self.train.models)
        d["train"]["split"] = list(self.train.split)
        d["synth"]["age_range"] = list(self.synth.age_range)
        return d

    @property
    def synth_seed(self):
        return self.seed if self.synth.seed is None else self.synth.seed


# file section -> (config attribute, {file key: dataclass field})
_SECTIONS = {
    "filter": ("preprocess", {"order": "filter_order", "stopband_hz": "stopband_hz", "atten_db": "atten_db"}),
    "ma": ("preprocess", {"window": "ma_window"}),
    "detrend": ("preprocess", {"window_s": "detrend_window_s"}),
    "envelope": ("preprocess", {"window_s": "envelope_window_s"}),
    "synth": ("synth", None),
    "beats": ("beats", None),
    "features": ("features", None),
    "train": ("train", None),
}
_TUPLES = {"tasks", "models", "split", "age_range"}


def _merge(obj, values, mapping, section):
    names = {f.name for f in fields(obj)}
    upd = {}
    for key, v in values.items():
        attr = mapping.get(key) if mapping else key
        if attr is None or attr not in names:
            raise ArgumentError(f"unknown config key {section}.{key}")
        if attr in _TUPLES:
            v = tuple(normalize_task(t) for t in v) if attr == "tasks" else tuple(v)
        upd[attr] = v
    return replace(obj, **upd)


def from_dict(d: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    top = {}
    for key, value in d.items():
        if key in _SECTIONS:
            attr, mapping = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ArgumentError(f"config section {key} must be a table")
            cfg = replace(cfg, **{attr: _merge(getattr(cfg, attr), value, mapping, key)})
        elif key in ("seed", "jobs", "input_dir"):
            top[key] = value
        else:
            raise ArgumentError(f"unknown config key {key}")
    return replace(cfg, **top).validate()


def load_config(path) -> PipelineConfig:
    """Read a TOML (``.toml``) or JSON (anything else) config file."""
    p = Path(path)
    if not p.exists():
        raise FileError(f"config file not found: {p}")
    text = p.read_text()
    try:
        d = tomllib.loads(text) if p.suffix == ".toml" else json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{p}: {exc}") from exc
    return from_dict(d)

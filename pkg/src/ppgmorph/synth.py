"""Synthetic PPG cohorts with known ground truth.

A beat is a sum of Gaussian waves (systolic, optional late-systolic
"tidal" shoulder, optional reflected/diastolic wave) with an optional
narrow negative Gaussian deepening the dicrotic notch. Because the model
is closed form, its fiducial points are located directly on the
continuous waveform: a dense scan of the analytic first derivative
brackets every extremum and ``brentq`` refines it. None of this shares
code with :mod:`ppgmorph.fiducials`.

The age law (how morphology and demographics move with age) lives in
``data/cohort_default.toml`` so benchmark numbers stay pinned.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
from scipy.optimize import brentq

from .errors import ArgumentError
from .io import RawRecording, SubjectMeta

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


@dataclass(frozen=True)
class Wave:
    amp: float
    center_s: float
    width_s: float


@dataclass(frozen=True)
class BeatModel:
    systolic: Wave
    reflected: Wave | None = None
    tidal: Wave | None = None
    notch_depth: float = 0.0
    notch_pos: float = 0.58
    notch_width_s: float = 0.02
    beat_period_s: float = 0.8
    jitter_s: float = 0.0

    def validate(self):
        waves = [w for w in (self.systolic, self.reflected, self.tidal) if w is not None]
        for w in waves:
            if not w.amp > 0:
                raise ArgumentError(f"wave amplitude must be positive, got {w.amp}")
            if not w.width_s > 0:
                raise ArgumentError("wave width must be positive")
            if not 0 <= w.center_s < self.beat_period_s:
                raise ArgumentError("wave centre must lie within the beat")
        if self.reflected is not None and self.reflected.center_s <= self.systolic.center_s:
            raise ArgumentError("reflected wave must follow the systolic wave")
        if self.beat_period_s <= 0:
            raise ArgumentError("beat period must be positive")
        if self.notch_depth < 0 or self.jitter_s < 0:
            raise ArgumentError("notch depth and jitter must be non-negative")

    @property
    def notch(self):
        """Dip wave, ``notch_pos`` of the way from the systolic to the reflected centre."""
        if self.reflected is None or self.notch_depth == 0:
            return None
        s, r = self.systolic.center_s, self.reflected.center_s
        c = s + self.notch_pos * (r - s)
        return Wave(self.notch_depth * self.systolic.amp, c, self.notch_width_s)


def _gauss(t, w: Wave, order=0):
    u = (t - w.center_s) / w.width_s
    g = w.amp * np.exp(-0.5 * u * u)
    if order == 0:
        return g
    if order == 1:
        return -u / w.width_s * g
    if order == 2:
        return (u * u - 1.0) / w.width_s**2 * g
    raise ValueError(order)


def beat_value(model: BeatModel, t, order=0):
    """Single (non-periodic) beat or its analytic derivative at times ``t`` (s)."""
    t = np.asarray(t, dtype=float)
    out = _gauss(t, model.systolic, order)
    for w in (model.tidal, model.reflected):
        if w is not None:
            out = out + _gauss(t, w, order)
    n = model.notch
    if n is not None:
        out = out - _gauss(t, n, order)
    return out


def periodic_value(model: BeatModel, t, order=0):
    """Beat as it appears inside a steady train: neighbouring beats' tails added."""
    T = model.beat_period_s
    return sum(beat_value(model, t + k * T, order) for k in (-2, -1, 0, 1, 2))


@dataclass(frozen=True)
class TrueFiducials:
    """Ground-truth landmark times (s) on the continuous beat; None if absent."""

    period_s: float
    O: float | None
    S: float | None
    N: float | None
    D: float | None
    u: float | None

    def index(self, name, L):
        t = getattr(self, name)
        return None if t is None else t * L / self.period_s

    def present(self, name):
        return getattr(self, name) is not None


def _roots_of(fn, lo, hi, n, kind):
    """Roots of ``fn`` in [lo, hi] where it changes sign in direction ``kind``.

    ``kind`` is 'down' (+ to -) or 'up' (- to +).
    """
    t = np.linspace(lo, hi, n)
    f = fn(t)
    if kind == "down":
        idx = np.flatnonzero((f[:-1] > 0) & (f[1:] <= 0))
    else:
        idx = np.flatnonzero((f[:-1] < 0) & (f[1:] >= 0))
    out = []
    for i in idx:
        if f[i + 1] == 0:
            out.append(float(t[i + 1]))
        else:
            out.append(brentq(fn, t[i], t[i + 1], xtol=1e-12))
    return out


def _onset_time(model: BeatModel, n):
    """Last local minimum of the periodic waveform before the systolic upstroke."""
    T = model.beat_period_s
    c = model.systolic.center_s
    ups = _roots_of(lambda t: periodic_value(model, t, 1), c - 0.5 * T, c, n, "up")
    if ups:
        return ups[-1]
    grid = np.linspace(c - 0.5 * T, c, n)
    return float(grid[np.argmin(periodic_value(model, grid))])


def true_fiducials(model: BeatModel, L=400, periodic=True, start_s=0.0) -> TrueFiducials:
    """Locate O, S, N, D, u on the continuous model by a 10x-oversampled scan.

    Times are relative to ``start_s`` (the first sample of the beat window).
    A landmark outside ``[0, T)`` of that window is reported as None.
    """
    T = model.beat_period_s
    f = periodic_value if periodic else beat_value

    def val(t):
        return f(model, t + start_s)

    def d1(t):
        return f(model, t + start_s, 1)

    def d2(t):
        return f(model, t + start_s, 2)

    n = 10 * L + 1
    grid = np.linspace(0, T, n, endpoint=False)
    t_S = float(grid[np.argmax(val(grid))])
    maxima = _roots_of(d1, 0, T, n, "down")
    if maxima:
        t_S = min(maxima, key=lambda m: abs(m - t_S))

    if periodic:
        t_O = _onset_time(model, n) - start_s
        if t_O < -1e-9 or t_O >= t_S:
            t_O = None
        t_O = None if t_O is None else max(t_O, 0.0)
    else:
        pre = np.linspace(0, t_S, n)
        t_O = float(pre[np.argmin(val(pre))])

    lo = 0.0 if t_O is None else t_O
    ups = _roots_of(d2, lo, t_S, n, "down")
    t_u = max(ups, key=lambda m: float(d1(np.array([m]))[0])) if ups else None

    t_N = t_D = None
    if model.reflected is not None:
        r = model.reflected
        hi = min(r.center_s + r.width_s - start_s, T)
        after = _roots_of(d1, t_S + 1e-9, hi, n, "up") if hi > t_S else []
        if after:
            t_N = after[0]
            peaks = _roots_of(d1, t_N + 1e-9, T, n, "down")
            t_D = peaks[0] if peaks else None
            if t_D is None:
                t_N = None
    return TrueFiducials(T, t_O, t_S, t_N, t_D, t_u)


def gen_beat(model: BeatModel, L=400, periodic=True, align="origin"):
    """Sample one beat on ``L`` points over one period and return it with its truth.

    ``align="origin"`` starts the window at model time 0; ``align="onset"``
    starts it at the true onset, the way templates cut from a recording
    start at detected onsets (requires ``periodic``).
    """
    model.validate()
    if align not in ("origin", "onset"):
        raise ArgumentError(f"align must be 'origin' or 'onset', got {align!r}")
    start = 0.0
    if align == "onset":
        if not periodic:
            raise ArgumentError("onset alignment needs a periodic beat")
        start = _onset_time(model, 10 * L + 1)
    t = start + np.arange(L) * model.beat_period_s / L
    x = periodic_value(model, t) if periodic else beat_value(model, t)
    return x, true_fiducials(model, L, periodic, start)


@dataclass(frozen=True)
class Respiration:
    rate_hz: float = 0.25
    depth: float = 0.0
    phase: float = 0.0


@dataclass(frozen=True)
class Drift:
    rate_hz: float = 0.02
    amp: float = 0.0
    phase: float = 0.0


@dataclass
class RecordingTruth:
    beat_starts: np.ndarray  # model beat origin times (s)
    envelope: np.ndarray  # respiration modulator
    clean: np.ndarray  # modulated beat train without drift or noise
    model: BeatModel
    fs: float
    _onsets: np.ndarray | None = field(default=None, repr=False)

    @property
    def onsets(self):
        """True onset sample positions (float); computed on first use."""
        if self._onsets is None:
            self._onsets = _true_onsets(self.model, self.beat_starts, self.fs, self.clean.size)
        return self._onsets


def gen_recording(
    model: BeatModel,
    duration_s=120.0,
    fs=400.0,
    respiration: Respiration | None = None,
    drift: Drift | None = None,
    noise_sigma=0.0,
    seed=0,
    pauses=(),
    meta: SubjectMeta | None = None,
):
    """Beat train with period jitter, respiratory AM, baseline drift and noise.

    ``pauses`` is a sequence of ``(after_beat_index, seconds)`` that inserts
    silent gaps into the train.
    """
    if duration_s < 10:
        raise ArgumentError("duration must be at least 10 s")
    model.validate()
    rng = np.random.default_rng(seed)
    respiration = respiration or Respiration()
    drift = drift or Drift()
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    T = model.beat_period_s
    pause_after = dict(pauses)

    starts = []
    tk = -0.5 * T
    k = 0
    while tk < duration_s + T:
        starts.append(tk)
        step = T + (rng.normal(0, model.jitter_s) if model.jitter_s > 0 else 0.0)
        step = float(np.clip(step, 0.5 * T, 1.5 * T))
        tk += step + pause_after.get(k, 0.0)
        k += 1
    starts = np.array(starts)

    train = np.zeros(n)
    span = 3 * T
    for s in starts:
        lo = max(int(np.floor((s - span) * fs)), 0)
        hi = min(int(np.ceil((s + span) * fs)) + 1, n)
        if lo < hi:
            train[lo:hi] += beat_value(model, t[lo:hi] - s)

    env = 1.0 + respiration.depth * np.sin(2 * np.pi * respiration.rate_hz * t + respiration.phase)
    clean = train * env
    x = clean + drift.amp * np.sin(2 * np.pi * drift.rate_hz * t + drift.phase)
    if noise_sigma > 0:
        x = x + rng.normal(0.0, noise_sigma, n)

    truth = RecordingTruth(beat_starts=starts, envelope=env, clean=clean, model=model, fs=fs)
    return RawRecording(meta=meta, fs=fs, samples=x), truth


def _true_onsets(model, starts, fs, n):
    """Minimum of the noise-free train before each systolic upstroke.

    Neighbouring beats are summed exactly, so overlap from the previous
    beat's diastolic tail shifts the onset just as it does in the data.
    """
    out = []
    c_s = model.systolic.center_s
    for s in starts:
        lo, hi = s + c_s - 0.45 * model.beat_period_s, s + c_s
        if lo < 0 or hi * fs >= n - 1:
            continue
        near = starts[np.abs(starts - s) < 3 * model.beat_period_s]

        def d1(tt, near=near):
            return sum(beat_value(model, tt - q, 1) for q in near)

        grid = np.linspace(lo, hi, 2001)
        f = d1(grid)
        idx = np.flatnonzero((f[:-1] < 0) & (f[1:] >= 0))
        if idx.size == 0:
            # no local minimum (e.g. first beat after a pause): lowest point of the window
            v = sum(beat_value(model, grid - q) for q in near)
            out.append(grid[np.argmin(v)] * fs)
            continue
        i = idx[-1]
        root = brentq(d1, grid[i], grid[i + 1], xtol=1e-12) if f[i + 1] != 0 else grid[i + 1]
        out.append(root * fs)
    return np.array(out)


# -- cohorts ----------------------------------------------------------------


@dataclass
class CohortSpec:
    n_subjects: int = 179
    age_range: tuple[float, float] = (3.0, 65.0)
    duration_s: float = 120.0
    fs: float = 400.0
    seed: int = 7
    law: dict = field(default_factory=dict)

    @classmethod
    def default(cls, **overrides):
        law = load_default_law()
        spec = cls(law=law)
        top = law.get("cohort", {})
        spec = replace(
            spec,
            n_subjects=int(top.get("n_subjects", spec.n_subjects)),
            age_range=tuple(top.get("age_range", spec.age_range)),
            duration_s=float(top.get("duration_s", spec.duration_s)),
            fs=float(top.get("fs", spec.fs)),
            seed=int(top.get("seed", spec.seed)),
        )
        return replace(spec, **overrides)

    def validate(self):
        if self.n_subjects < 1:
            raise ArgumentError("n_subjects must be >= 1")
        lo, hi = self.age_range
        if not 0 < lo < hi:
            raise ArgumentError(f"bad age range {self.age_range}")


def load_default_law():
    text = resources.files("ppgmorph.data").joinpath("cohort_default.toml").read_text()
    return tomllib.loads(text)


def with_zero_age_slope(spec: CohortSpec) -> CohortSpec:
    """Copy of ``spec`` whose beat no longer depends on age.

    Clears the morphology slopes and the childhood heart-rate excess, since
    the beat period shapes every time-normalised feature.
    """
    law = copy.deepcopy(spec.law)
    law.setdefault("demographics", {})["hr_child_excess"] = 0.0
    for key, entry in law.get("morphology", {}).items():
        if isinstance(entry, dict):
            for key in ("slope", "slope_after"):
                if key in entry:
                    entry[key] = 0.0
    return replace(spec, law=law)


def _linear(entry, age, rng):
    """Piecewise-linear age law: ``slope`` everywhere, plus ``slope_after`` past ``knee``."""
    v = entry["base"] + entry.get("slope", 0.0) * (age - entry.get("ref_age", 0.0))
    if "knee" in entry:
        v += entry.get("slope_after", 0.0) * max(age - entry["knee"], 0.0)
    if entry.get("scatter", 0.0) > 0:
        v += rng.normal(0.0, entry["scatter"])
    lo, hi = entry.get("clip", (-np.inf, np.inf))
    return float(np.clip(v, lo, hi))


def sample_subject(spec: CohortSpec, index: int):
    """Draw one subject's metadata, beat model and nuisance parameters."""
    law = spec.law
    rng = np.random.default_rng([spec.seed, index])
    lo, hi = spec.age_range
    age = float(rng.uniform(lo, hi))

    demo = law["demographics"]
    male = bool(rng.random() < demo["p_male"])
    adult_h = demo["adult_height_male"] if male else demo["adult_height_female"]
    h0 = demo["height_at_3"]
    height = adult_h - (adult_h - h0) * np.exp(-(age - 3.0) / demo["growth_tau_years"])
    height = float(height + rng.normal(0, demo["height_scatter"]))
    bmi_child, bmi_adult = demo["bmi_child"], demo["bmi_adult"]
    bmi = bmi_adult - (bmi_adult - bmi_child) * np.exp(-(age - 3.0) / demo["bmi_tau_years"])
    bmi = float(bmi + rng.normal(0, demo["bmi_scatter"]) + demo["bmi_slope_adult"] * max(age - 20, 0))
    weight = bmi * (height / 100.0) ** 2
    hr = demo["hr_adult"] + demo["hr_child_excess"] * np.exp(-(age - 3.0) / demo["hr_tau_years"])
    hr = float(np.clip(hr + rng.normal(0, demo["hr_scatter"]), 45, 180))
    smoker = bool(age >= 16 and rng.random() < demo["p_smoker_adult"])
    fam = bool(rng.random() < demo["p_family_history"])
    spo2 = float(np.clip(round(rng.normal(demo["spo2_mean"], demo["spo2_scatter"])), 90, 100))

    morph = law["morphology"]
    T = 60.0 / hr
    sys_c = _linear(morph["systolic_center_frac"], age, rng) * T
    sys_w = _linear(morph["systolic_width_s"], age, rng)
    refl_amp = _linear(morph["reflected_amp"], age, rng)
    delay = _linear(morph["reflection_delay_s"], age, rng)
    refl_w = _linear(morph["reflected_width_s"], age, rng)
    tidal_amp = _linear(morph["tidal_amp"], age, rng)
    tidal_off = _linear(morph["tidal_offset_widths"], age, rng)
    notch = _linear(morph["notch_depth"], age, rng)
    notch_w = _linear(morph["notch_width_s"], age, rng)

    model = BeatModel(
        systolic=Wave(1.0, sys_c, sys_w),
        tidal=Wave(tidal_amp, sys_c + tidal_off * sys_w, sys_w) if tidal_amp > 0 else None,
        reflected=Wave(refl_amp, min(sys_c + delay, 0.9 * T), refl_w),
        notch_depth=notch,
        notch_width_s=notch_w,
        beat_period_s=T,
        jitter_s=law["nuisance"]["jitter_frac"] * T,
    )

    nz = law["nuisance"]
    resp = Respiration(
        rate_hz=float(rng.uniform(*nz["resp_rate_hz"])),
        depth=float(rng.uniform(*nz["resp_depth"])),
        phase=float(rng.uniform(0, 2 * np.pi)),
    )
    drift = Drift(
        rate_hz=float(rng.uniform(*nz["drift_rate_hz"])),
        amp=float(rng.uniform(*nz["drift_amp"])),
        phase=float(rng.uniform(0, 2 * np.pi)),
    )
    gain = float(rng.uniform(*nz["gain"]))
    meta = SubjectMeta(
        subject_id=f"S{index:04d}",
        age=age,
        gender="male" if male else "female",
        height=height,
        weight=weight,
        family_history_cvd=fam,
        smoker=smoker,
        heart_rate=round(hr, 1),
        spo2=spo2,
    )
    return meta, model, resp, drift, gain, float(nz["noise_sigma"])


@dataclass
class Subject:
    recording: RawRecording
    meta: SubjectMeta
    age: float
    model: BeatModel


def gen_subject(spec: CohortSpec, index: int) -> Subject:
    meta, model, resp, drift, gain, noise = sample_subject(spec, index)
    rec, _ = gen_recording(
        model,
        duration_s=spec.duration_s,
        fs=spec.fs,
        respiration=resp,
        drift=drift,
        noise_sigma=noise,
        seed=spec.seed * 100_003 + index,
        meta=meta,
    )
    rec.samples = rec.samples * gain
    return Subject(recording=rec, meta=meta, age=meta.age, model=model)


def gen_cohort(spec: CohortSpec | None = None):
    """Generate every subject of ``spec``; subject ``i`` depends only on (seed, i)."""
    spec = spec or CohortSpec.default()
    spec.validate()
    return [gen_subject(spec, i) for i in range(spec.n_subjects)]

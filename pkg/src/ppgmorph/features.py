"""Per-subject feature vectors, Pearson ranking and Gaussian augmentation.

The column layout is fixed by ``data/features.toml``: 53 morphology and
beat-statistics features followed by 7 demographic ones. Age is the
label and never a feature.

When a fiducial point is missing, features that depend on it fall back
to a fixed value instead of NaN: time features take the beat duration,
everything else takes 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import ArgumentError, FeatureError, RankError
from .fiducials import DerivativeStack, FiducialSet
from .io import Dataset, SubjectMeta

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

MANDATORY_POINTS = ("O", "S", "u", "v", "a", "b")
WIDTH_LEVELS = (25, 50, 75)


@dataclass(frozen=True)
class CatalogEntry:
    index: int
    name: str
    kind: str
    categorical: bool
    doc: str


@lru_cache(maxsize=1)
def load_catalog() -> tuple[CatalogEntry, ...]:
    text = resources.files("ppgmorph.data").joinpath("features.toml").read_text()
    rows = tomllib.loads(text)["feature"]
    out = tuple(
        CatalogEntry(int(r["index"]), r["name"], r["kind"], bool(r.get("categorical", False)), r["doc"])
        for r in rows
    )
    if [e.index for e in out] != list(range(len(out))):
        raise RuntimeError("feature catalog indices are not 0..n-1 in order")
    return out


CATALOG = load_catalog()
FEATURE_NAMES = tuple(e.name for e in CATALOG)
SIGNAL_NAMES = tuple(e.name for e in CATALOG if e.kind != "demographic")
DEMOGRAPHIC_NAMES = tuple(e.name for e in CATALOG if e.kind == "demographic")
CATEGORICAL_NAMES = tuple(e.name for e in CATALOG if e.categorical)
_KIND = {e.name: e.kind for e in CATALOG}


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...] = FEATURE_NAMES
    subject_id: str | None = None

    def as_dict(self):
        return dict(zip(self.names, self.values.tolist()))

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])


def demographic_vector(meta: SubjectMeta):
    return [
        1.0 if meta.gender == "male" else 0.0,
        float(meta.height),
        float(meta.weight),
        float(bool(meta.family_history_cvd)),
        float(bool(meta.smoker)),
        float(meta.heart_rate),
        float(meta.spo2),
    ]


def _crossing_before(x, peak, lo, level):
    """Fractional index where ``x`` last rises through ``level`` in ``[lo, peak]``."""
    below = np.flatnonzero(x[lo : peak + 1] < level)
    if below.size == 0:
        return None
    i = lo + below[-1]
    return i + (level - x[i]) / (x[i + 1] - x[i])


def _crossing_after(x, peak, level):
    below = np.flatnonzero(x[peak:] < level)
    if below.size == 0:
        return None
    j = peak + below[0]
    return j - 1 + (x[j - 1] - level) / (x[j - 1] - x[j])


def _area(y, lo, hi, dt):
    if hi <= lo:
        return 0.0
    seg = y[lo : hi + 1]
    return float(np.sum((seg[1:] + seg[:-1]) * 0.5) * dt)


def _safe_ratio(num, den):
    return float(num / den) if den != 0 and num is not None else 0.0


def extract_features(template, stack: DerivativeStack, fid: FiducialSet,
                     segment_stats=None, meta: SubjectMeta | None = None) -> FeatureVector:
    """Fill the 60-entry catalog for one subject.

    ``template`` may be a :class:`~ppgmorph.beats.BeatTemplate` or the
    template samples. Without ``segment_stats`` the two beat-statistics
    features are 0; without ``meta`` the demographic tail is 0.

    Raises
    ------
    FeatureError
        If any of O, S, u, v, a, b is missing.
    """
    missing = [p for p in MANDATORY_POINTS if getattr(fid, p) is None]
    if missing:
        raise FeatureError(f"required fiducial points missing: {', '.join(missing)}")
    x = np.asarray(getattr(template, "samples", template), dtype=float)
    fs = stack.fs
    L = x.size
    dur = L / fs
    iO = fid.idx("O")
    xO = x[iO]

    f = {}

    def t(name):
        i = fid.idx(name)
        return None if i is None else (i - iO) / fs

    def val(name):
        p = getattr(fid, name)
        return None if p is None else p.val

    f["beat_duration_s"] = dur
    hS = val("S") - xO
    hN = None if fid.N is None else val("N") - xO
    hD = None if fid.D is None else val("D") - xO
    f["amp_S_O"], f["amp_N_O"], f["amp_D_O"] = hS, hN, hD
    f["ratio_N_S"] = _safe_ratio(hN, hS)
    f["ratio_D_S"] = _safe_ratio(hD, hS)
    f["t_S"], f["t_N"], f["t_D"] = t("S"), t("N"), t("D")
    f["t_N_minus_t_S"] = None if fid.N is None else t("N") - t("S")
    f["t_D_minus_t_N"] = None if fid.D is None or fid.N is None else t("D") - t("N")
    f["crest_time_ratio"] = t("S") / dur

    iS = fid.idx("S")
    for h in WIDTH_LEVELS:
        level = xO + h / 100.0 * hS
        left = _crossing_before(x, iS, iO, level)
        right = _crossing_after(x, iS, level)
        sw = None if left is None else (iS - left) / fs
        dw = None if right is None else (right - iS) / fs
        f[f"sys_width_{h}"] = sw
        f[f"dia_width_{h}"] = dw
        f[f"width_ratio_{h}"] = _safe_ratio(dw, sw) if sw and dw is not None else 0.0

    y = x - xO
    f["pulse_area"] = _area(y, iO, L - 1, 1 / fs)
    if fid.N is not None:
        iN = fid.idx("N")
        f["sys_area"] = _area(y, iO, iN, 1 / fs)
        f["dia_area"] = _area(y, iN, L - 1, 1 / fs)
        f["ipa_ratio"] = _safe_ratio(f["dia_area"], f["sys_area"])
    else:
        f["sys_area"] = f["dia_area"] = f["ipa_ratio"] = None

    for p in ("u", "v", "w"):
        f[f"{p}_value"] = val(p)
        f[f"{p}_time"] = t(p)
    f["u_over_abs_v"] = _safe_ratio(val("u"), abs(val("v")))

    a = val("a")
    for p in "abcde":
        f[f"{p}_value"] = val(p)
        f[f"t_{p}"] = t(p)
    for p in "bcde":
        f[f"{p}_over_a"] = _safe_ratio(val(p), a)
    if all(getattr(fid, p) is not None for p in "bcde"):
        f["aging_index"] = _safe_ratio(val("b") - val("c") - val("d") - val("e"), a)
    else:
        f["aging_index"] = 0.0

    for name in ("jpg", "spg"):
        w = stack.waveform(name)
        k = int(np.argmax(w))
        f[f"{name}_max_value"] = float(w[k])
        f[f"{name}_max_time"] = (k - iO) / fs

    f["ibi_std_s"] = 0.0 if segment_stats is None else segment_stats.ibi_std_s
    f["beat_amp_std"] = 0.0 if segment_stats is None else segment_stats.amp_std

    demo = demographic_vector(meta) if meta is not None else [0.0] * len(DEMOGRAPHIC_NAMES)
    f.update(zip(DEMOGRAPHIC_NAMES, demo))

    values = np.empty(len(FEATURE_NAMES))
    for i, name in enumerate(FEATURE_NAMES):
        v = f[name]
        if v is None:
            v = dur if _KIND[name] == "time" else 0.0
        values[i] = v
    if not np.all(np.isfinite(values)):
        bad = [n for n, v in zip(FEATURE_NAMES, values) if not np.isfinite(v)]
        raise FeatureError(f"non-finite features: {bad}")
    return FeatureVector(values, FEATURE_NAMES, None if meta is None else meta.subject_id)


def features_from_template(template, meta=None):
    """Derivatives, fiducials and features of one beat template."""
    from .fiducials import derivatives, detect_fiducials

    stack = derivatives(template)
    fid = detect_fiducials(stack)
    fv = extract_features(template, stack, fid, getattr(template, "stats", None), meta)
    return fv, stack, fid


# -- ranking ------------------------------------------------------------------


@dataclass(frozen=True)
class RankedFeatureSet:
    kept_names: list[str]
    kept_scores: np.ndarray
    names: list[str]
    scores: np.ndarray  # |r| for every input feature, input order

    def as_dict(self):
        return {
            "kept": [{"name": n, "abs_r": float(s)} for n, s in zip(self.kept_names, self.kept_scores)],
            "all": {n: float(s) for n, s in zip(self.names, self.scores)},
        }


def abs_pearson(X, y):
    """|r| between every column of ``X`` and ``y``; constant columns give 0."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    sxx = np.einsum("ij,ij->j", Xc, Xc)
    syy = yc @ yc
    num = Xc.T @ yc
    const = np.ptp(X, axis=0) == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.abs(num) / np.sqrt(sxx * syy)
    r[const | ~np.isfinite(r)] = 0.0
    return np.minimum(r, 1.0)


def pearson_rank(ds: Dataset, k=26) -> RankedFeatureSet:
    """Keep the ``k`` features with the largest |Pearson r| against the label.

    Ties are broken by column order.
    """
    if ds.n < 3:
        raise RankError(f"need at least 3 rows to rank, got {ds.n}")
    if np.ptp(ds.labels) == 0:
        raise RankError("labels are constant; correlation undefined")
    p = len(ds.feature_names)
    if not 1 <= k <= p:
        raise ArgumentError(f"k must lie in [1, {p}], got {k}")
    scores = abs_pearson(ds.X, ds.labels)
    order = np.lexsort((np.arange(p), -scores))[:k]
    return RankedFeatureSet(
        kept_names=[ds.feature_names[i] for i in order],
        kept_scores=scores[order],
        names=list(ds.feature_names),
        scores=scores,
    )


# -- augmentation ---------------------------------------------------------------


def augment_gaussian(ds: Dataset, factor=15, sigma_frac=0.05, seed=0, categorical=None) -> Dataset:
    """Originals followed by ``factor - 1`` jittered copies of every row.

    Noise on column j is Normal(0, (sigma_frac * std_j)^2), with std_j the
    population std of that column in ``ds``. Columns named in
    ``categorical`` (default: the catalog's categorical features) and the
    labels are copied unchanged. Copies keep their source's subject id so
    splits can keep them together.
    """
    if int(factor) != factor or factor < 1:
        raise ArgumentError(f"augmentation factor must be an integer >= 1, got {factor}")
    if sigma_frac < 0:
        raise ArgumentError("sigma_frac must be non-negative")
    if ds.n < 1:
        raise ArgumentError("cannot augment an empty dataset")
    factor = int(factor)
    cats = CATEGORICAL_NAMES if categorical is None else tuple(categorical)
    ids = ds.subject_ids if ds.subject_ids is not None else [f"row{i}" for i in range(ds.n)]
    meta = dict(ds.meta, augment={"factor": factor, "sigma_frac": sigma_frac, "seed": seed})
    if factor == 1:
        return Dataset(ds.X.copy(), ds.labels.copy(), ds.feature_names, list(ids), meta)

    rng = np.random.default_rng(seed)
    sd = sigma_frac * ds.X.std(axis=0)
    mask = np.array([n not in cats for n in ds.feature_names], dtype=float)
    noise = rng.standard_normal((factor - 1, ds.n, ds.X.shape[1])) * (sd * mask)
    copies = (ds.X[None, :, :] + noise).reshape(-1, ds.X.shape[1])
    X = np.vstack([ds.X, copies])
    labels = np.tile(ds.labels, factor)
    return Dataset(X, labels, ds.feature_names, list(ids) * factor, meta)

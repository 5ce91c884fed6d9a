import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import mann_whitney_auc

from ppgmorph import learn
from ppgmorph.errors import (ArgumentError, GradCheckError, LabelError, SchemaError, SplitError,
                             TrainingDivergedError)
from ppgmorph.io import Dataset
from ppgmorph.learn import nn
from ppgmorph.learn.models import cross_entropy, loss_fn, softmax
from ppgmorph.learn.train import targets


def _ds(X, ages, ids=None):
    X = np.asarray(X, float)
    return Dataset(X, np.asarray(ages, float), [f"f{j}" for j in range(X.shape[1])], ids)


def _age_data(n=120, d=6, seed=0, ids=None):
    """Features that carry age linearly plus noise."""
    rng = np.random.default_rng(seed)
    ages = rng.uniform(3, 65, n)
    X = rng.normal(size=(n, d)) + np.outer((ages - 30) / 15, rng.normal(size=d))
    return _ds(X, ages, ids)


# -- labels ----------------------------------------------------------------------


@pytest.mark.parametrize("age,binary,three", [(3, 0, 0), (10, 0, 0), (12, 0, 0), (12.5, 0, 1),
                                              (15.0, 0, 1), (15.01, 1, 1), (30, 1, 1), (31, 1, 2),
                                              (65, 1, 2)])
def test_age_bins(age, binary, three):
    assert learn.make_labels([age], "binary")[0] == binary
    assert learn.make_labels([age], "three-class")[0] == three


def test_regression_labels_are_ages():
    a = [3.0, 40.5]
    assert learn.make_labels(a, "regression").tolist() == a


def test_under_three_rejected():
    with pytest.raises(LabelError, match="row 1"):
        learn.make_labels([10, 2.5], "binary")


def test_unknown_task():
    with pytest.raises(ArgumentError):
        learn.make_labels([10], "quaternary")


# -- split -----------------------------------------------------------------------


def test_row_split_sizes():
    ds = _age_data(2685, 3)
    tr, va, te = learn.split(ds, seed=1, classes=learn.make_labels(ds.labels, "three_class"), groups=None)
    assert tr.n + va.n + te.n == 2685
    assert abs(te.n - 403) <= 1 and abs(va.n - 403) <= 1


def test_split_is_deterministic():
    ds = _age_data(200, 3)
    c = learn.make_labels(ds.labels, "binary")
    a = learn.split(ds, seed=4, classes=c)
    b = learn.split(ds, seed=4, classes=c)
    assert all(x == y for x, y in zip(a, b))


def test_stratification_keeps_class_shares():
    ds = _age_data(600, 2, seed=3)
    c = learn.make_labels(ds.labels, "three_class")
    full = np.bincount(c, minlength=3) / c.size
    for fold in learn.split(ds, seed=0, classes=c):
        share = np.bincount(learn.make_labels(fold.labels, "three_class"), minlength=3) / fold.n
        assert np.all(np.abs(share - full) < 0.02)


def test_subject_groups_never_straddle_folds():
    base = _age_data(60, 2, ids=[f"S{i:03d}" for i in range(60)])
    X = np.vstack([base.X] * 5)
    ds = Dataset(X, np.tile(base.labels, 5), base.feature_names, base.subject_ids * 5)
    folds = learn.split(ds, seed=2, classes=learn.make_labels(ds.labels, "binary"))
    seen = [set(f.subject_ids) for f in folds]
    assert not (seen[0] & seen[1]) and not (seen[0] & seen[2]) and not (seen[1] & seen[2])
    assert sum(len(s) for s in seen) == 60
    assert all(f.n % 5 == 0 for f in folds)


def test_split_errors():
    with pytest.raises(SplitError):
        learn.split(_age_data(10), seed=0)
    with pytest.raises(SplitError):
        learn.split(_age_data(40), ratios=(0.5, 0.4, 0.2))
    ds = _age_data(40)
    c = np.zeros(40, int)
    c[0] = 1
    with pytest.raises(SplitError, match="class"):
        learn.split(ds, classes=c)


# -- metrics ---------------------------------------------------------------------


def test_perfect_and_constant_predictors():
    y = np.array([0, 1, 1, 0, 1])
    m = learn.metrics.classification_metrics(y, np.eye(2)[y], "binary")
    assert m.accuracy == 1.0 and m.auc == 1.0
    assert m.confusion == [[100.0, 0.0], [0.0, 100.0]]
    assert learn.roc_auc(y == 1, np.full(5, 0.3)) == 0.5


@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=40))
def test_auc_matches_pair_counting(rows):
    scores = [s for s, _ in rows]
    labels = [int(b) for _, b in rows]
    if len(set(labels)) < 2:
        return
    assert learn.roc_auc(np.array(labels) == 1, scores) == pytest.approx(mann_whitney_auc(scores, labels))


@given(st.lists(st.integers(0, 2), min_size=1, max_size=60), st.integers(0, 10_000))
def test_confusion_rows(y_true, seed):
    y_pred = np.random.default_rng(seed).integers(0, 3, len(y_true))
    P = learn.confusion_percent(y_true, y_pred, 3)
    for c in range(3):
        assert P[c].sum() == pytest.approx(100.0 if c in y_true else 0.0)


def test_evaluate_rejects_empty_test():
    m = learn.train(learn.ModelConfig("logistic", "binary", input_dim=6, epochs=1), _age_data())
    with pytest.raises(ArgumentError):
        learn.evaluate(m, _age_data().subset([]))


# -- architectures -----------------------------------------------------------------


def _n_params(cfg):
    net = learn.build_network(cfg, np.random.default_rng(0))
    return sum(p.size for p in net.param_dict().values())


def test_parameter_counts():
    assert _n_params(learn.ModelConfig("logistic", "binary", input_dim=26)) == 27 * 2
    assert _n_params(learn.ModelConfig("linear", "regression", input_dim=26)) == 27
    # 26*40+40 + 2*40 + 40*10+10 + 2*10 + 10*3+3
    assert _n_params(learn.ModelConfig("ffnn", "three_class", input_dim=26)) == 1623
    # conv1 4*1*2+2, conv2..4 3*(4*2*2+2), dense 52*2+2
    assert _n_params(learn.ModelConfig("cnn", "binary", input_dim=26)) == 10 + 54 + 106


@pytest.mark.parametrize("kind,task", [("linear", "binary"), ("logistic", "regression"), ("rnn", "binary")])
def test_bad_model_combinations(kind, task):
    with pytest.raises(ArgumentError):
        learn.ModelConfig(kind, task)


def test_softmax_rows_sum_to_one():
    z = np.random.default_rng(0).normal(scale=50, size=(20, 3))
    assert np.allclose(softmax(z).sum(axis=1), 1.0)
    loss, g = cross_entropy(z, np.zeros(20, int))
    assert np.isfinite(loss) and np.allclose(g.sum(axis=1), 0.0)


def test_batchnorm_eval_ignores_batch_composition():
    bn = nn.BatchNorm(4)
    rng = np.random.default_rng(0)
    for _ in range(50):
        bn.forward(rng.normal(2.0, 3.0, size=(16, 4)), training=True)
    x = rng.normal(size=(10, 4))
    assert np.array_equal(bn.forward(x, training=False)[:3], bn.forward(x[:3], training=False))


def test_dropout_eval_is_identity():
    d = nn.Dropout(0.5, np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=(8, 5))
    assert np.array_equal(d.forward(x, training=False), x)
    y = d.forward(x, training=True)
    assert set(np.unique(y / np.where(x == 0, 1, x)).round(9)) <= {0.0, 2.0}


# -- training ----------------------------------------------------------------------


def test_logistic_separates_separable_data():
    ds = _age_data(200, 4, seed=5)
    y = targets(ds, "binary")
    X = ds.X.copy()
    X[:, 0] = np.where(y == 1, 1.0, -1.0) + 0.1 * X[:, 0]
    ds = _ds(X, ds.labels)
    m = learn.train(learn.ModelConfig("logistic", "binary", input_dim=4, epochs=60, l1=0, l2=0), ds)
    assert learn.evaluate(m, ds).accuracy == 1.0


def test_ffnn_learns_xor():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(400, 2))
    ages = np.where((X[:, 0] > 0) ^ (X[:, 1] > 0), 40.0, 8.0)
    ds = _ds(X, ages)
    m = learn.train(learn.ModelConfig("ffnn", "binary", input_dim=2, epochs=150, seed=1), ds)
    assert learn.evaluate(m, ds).accuracy >= 0.95


@pytest.mark.parametrize("kind,task", [("ffnn", "three_class"), ("cnn", "regression")])
def test_training_is_bit_identical(kind, task):
    ds = _age_data(80, 6)
    cfg = learn.ModelConfig(kind, task, input_dim=6, epochs=3, seed=3)
    a, b = learn.train(cfg, ds, ds), learn.train(cfg, ds, ds)
    assert a.history == b.history
    for k, v in a.net.state_dict().items():
        assert np.array_equal(v, b.net.state_dict()[k])


def test_history_columns():
    ds = _age_data(60, 6)
    h = learn.train(learn.ModelConfig("ffnn", "binary", input_dim=6, epochs=4), ds, ds).history
    assert set(h) == {"epoch", "train_loss", "val_loss", "train_accuracy", "val_accuracy", "train_auc", "val_auc"}
    assert all(len(v) == 4 for v in h.values())
    h = learn.train(learn.ModelConfig("linear", "regression", input_dim=6, epochs=2), ds).history
    assert set(h) == {"epoch", "train_loss", "train_mae"}


def test_divergence_is_reported():
    cfg = learn.ModelConfig("linear", "regression", input_dim=6, epochs=5, learning_rate=1e308)
    with pytest.raises(TrainingDivergedError) as exc, np.errstate(all="ignore"):
        learn.train(cfg, _age_data())
    assert exc.value.epoch is not None


def test_feature_count_mismatch():
    m = learn.train(learn.ModelConfig("logistic", "binary", input_dim=6, epochs=1), _age_data())
    with pytest.raises(SchemaError):
        m.predict(np.zeros((2, 5)))


def test_regression_beats_mean_predictor():
    ds = _age_data(300, 6, seed=8)
    m = learn.train(learn.ModelConfig("ffnn", "regression", input_dim=6, epochs=60), ds)
    base = np.mean(np.abs(ds.labels - ds.labels.mean()))
    assert learn.evaluate(m, ds).mae < 0.6 * base


# -- gradients -----------------------------------------------------------------------


@pytest.mark.parametrize("kind,task", [("ffnn", "three_class"), ("cnn", "regression"),
                                       ("logistic", "binary"), ("linear", "regression")])
def test_grad_check(kind, task):
    batch = _age_data(4, 8, seed=2)
    res = learn.grad_check(learn.ModelConfig(kind, task, input_dim=8, seed=1), batch)
    assert res.max_rel_error <= 1e-4
    assert set(res.per_tensor) == set(res.analytic)


def test_zero_input_kills_first_layer_weight_grads():
    cfg = learn.ModelConfig("ffnn", "binary", input_dim=5)
    ds = _ds(np.zeros((4, 5)), [5, 20, 40, 33])
    model = learn.init_model(cfg, ds)
    out = model.net.forward(model._prep(ds.X), training=True)
    model.net.backward(loss_fn(cfg)(out, targets(ds, "binary"))[1])
    g = model.net.grad_dict()
    assert np.all(g["dense1.W"] == 0)
    # a per-unit constant is removed by the batch norm that follows, and so does bn1,
    # so only the second norm layer and the output see a gradient
    assert np.allclose(g["dense1.b"], 0, atol=1e-12)
    assert np.any(g["out.b"] != 0) and np.any(g["bn2.beta"] != 0)


def test_broken_backward_is_named(monkeypatch):
    original = nn.Dense.backward

    def skewed(self, dy):
        dx = original(self, dy)
        if self.name == "dense2":
            self.grads["W"] = self.grads["W"] * 1.5
        return dx

    monkeypatch.setattr(nn.Dense, "backward", skewed)
    with pytest.raises(GradCheckError) as exc:
        learn.grad_check(learn.ModelConfig("ffnn", "binary", input_dim=4), _age_data(4, 4))
    assert exc.value.tensor == "dense2.W"


def test_grad_check_batch_limit():
    with pytest.raises(ArgumentError):
        learn.grad_check(learn.ModelConfig("ffnn", "binary", input_dim=4), _age_data(9, 4))


# -- persistence and curves ------------------------------------------------------------


@pytest.mark.parametrize("kind,task", [("ffnn", "three_class"), ("cnn", "binary"), ("linear", "regression")])
def test_save_load_round_trip(tmp_path, kind, task):
    ds = _age_data(50, 6)
    m = learn.train(learn.ModelConfig(kind, task, input_dim=6, epochs=2), ds)
    path = learn.save_model(m, tmp_path / "m")
    back = learn.load_model(path)
    assert np.array_equal(back.output(ds.X), m.output(ds.X))
    assert back.cfg == m.cfg and back.feature_names == m.feature_names
    man = json.loads(path.read_text())
    assert man["dtype"] == "float64" and (tmp_path / man["blob"]).exists()


def test_tampered_blob(tmp_path):
    m = learn.train(learn.ModelConfig("logistic", "binary", input_dim=6, epochs=1), _age_data())
    path = learn.save_model(m, tmp_path / "m")
    blob = tmp_path / "m.bin"
    blob.write_bytes(b"\0" + blob.read_bytes()[1:])
    with pytest.raises(SchemaError):
        learn.load_model(path)


def test_smooth_is_trailing_mean():
    v = np.arange(1.0, 13.0)
    s = learn.smooth(v, 3)
    assert s[:3].tolist() == [1.0, 1.5, 2.0] and s[-1] == 11.0


def test_check_curve():
    e = np.arange(300)
    good = 1.0 / (1 + e / 10) + 0.002 * np.sin(e)
    assert learn.check_curve(good).ok
    bump = good.copy()
    bump[100:140] += 0.5
    assert not learn.check_curve(bump).non_increasing
    late = np.r_[np.ones(260), np.linspace(1, 0.1, 40)]
    assert not learn.check_curve(late).plateaued

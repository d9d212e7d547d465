"""Datasets, CSV round-trips, standardization, losses, and metrics."""

import numpy as np
import pytest

from trukan import data as D
from trukan import tensor as T
from trukan import train as TR
from trukan.gradcheck import check_gradients


def test_alignment_target_known_points():
    ds = D.gen_alignment_target(100, seed=0)
    # plant exact probes
    ds.features[0] = [0.0, 0.0]
    ds.features[1] = [0.5, 0.0]
    ds.features[2] = [0.5, 1.0]
    expect = np.exp(np.sin(np.pi * ds.features[:3, 0]) + ds.features[:3, 1] ** 2)
    np.testing.assert_allclose(expect, [1.0, np.e, np.exp(2.0)])
    regenerated = np.exp(np.sin(np.pi * ds.features[:, 0]) + ds.features[:, 1] ** 2)
    np.testing.assert_allclose(ds.targets[:, 0][3:], regenerated[3:])


def test_alignment_target_rejects_nonpositive_n():
    with pytest.raises(ValueError):
        D.gen_alignment_target(0)


def test_blobs_shapes_and_determinism():
    a = D.gen_blobs(200, d=8, classes=5, seed=3)
    b = D.gen_blobs(200, d=8, classes=5, seed=3)
    assert a.features.shape == (200, 8)
    assert a.is_classification and a.n_classes == 5
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.targets, b.targets)


def test_csv_round_trip_bit_identical(tmp_path):
    ds = D.Dataset(np.array([[0.1, -2.5], [3.25, 4.0], [1e-12, 7.125]]),
                   np.array([[1.5], [2.5], [-0.125]]))
    path = tmp_path / "toy.csv"
    D.save_csv(ds, path)
    back = D.load_csv(path)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.targets, ds.targets)


def test_csv_classification_round_trip(tmp_path):
    ds = D.gen_blobs(20, d=3, classes=4, seed=1)
    path = tmp_path / "cls.csv"
    D.save_csv(ds, path)
    back = D.load_csv(path, classification=True)
    np.testing.assert_array_equal(back.targets, ds.targets)
    assert back.n_classes == 4


def test_csv_non_numeric_cell_cites_row_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x0,x1,target\n1.0,2.0,3.0\n1.0,oops,4.0\n")
    with pytest.raises(D.CsvFormatError, match=r"row 3.*x1.*oops"):
        D.load_csv(path)


def test_csv_ragged_row_cites_row(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("x0,target\n1.0,2.0\n1.0\n")
    with pytest.raises(D.CsvFormatError, match="row 3"):
        D.load_csv(path)


def test_csv_missing_target_column(tmp_path):
    path = tmp_path / "nt.csv"
    path.write_text("x0,x1\n1.0,2.0\n")
    with pytest.raises(D.CsvFormatError, match="target"):
        D.load_csv(path)


def test_standardization_zero_mean_and_grid_range():
    rng = np.random.default_rng(4)
    ds = D.Dataset(rng.normal(5.0, 3.0, size=(500, 4)), np.zeros((500, 1)))
    std = ds.standardized(-1.0, 1.0)
    centered = (ds.features - std.normalizer.mean) / std.normalizer.std
    np.testing.assert_allclose(centered.mean(axis=0), 0.0, atol=1e-10)
    assert std.features.min() >= -1.0 and std.features.max() <= 1.0


def test_standardization_reuses_train_statistics():
    rng = np.random.default_rng(5)
    train = D.Dataset(rng.normal(2.0, 1.0, size=(100, 3)), np.zeros((100, 1)))
    val = D.Dataset(rng.normal(2.0, 1.0, size=(50, 3)), np.zeros((50, 1)), split="val")
    tstd = train.standardized()
    vstd = val.standardized(normalizer=tstd.normalizer)
    assert vstd.normalizer is tstd.normalizer


# ------------------------------------------------------------------ losses


def test_mse_zero_when_prediction_matches():
    pred = T.Tensor([[1.0, 2.0]])
    assert TR.mse_loss(pred, T.Tensor([[1.0, 2.0]])).item() == 0.0


def test_cross_entropy_uniform_logits_is_log_c():
    for c in (2, 5, 10):
        logits = T.Tensor(np.zeros((4, c)))
        np.testing.assert_allclose(TR.cross_entropy(logits, np.zeros(4, int)).item(),
                                   np.log(c), rtol=1e-12)


def test_loss_gradchecks():
    rng = np.random.default_rng(6)
    pred = T.Tensor(rng.normal(size=(5, 4)), requires_grad=True)
    target = rng.normal(size=(5, 4))
    assert check_gradients(lambda: TR.mse_loss(pred, T.Tensor(target)),
                           [pred], rng, n_probe=6) < 1e-4
    labels = rng.integers(0, 4, size=5)
    assert check_gradients(lambda: TR.cross_entropy(pred, labels),
                           [pred], rng, n_probe=6) < 1e-4


def test_loss_shape_mismatch():
    with pytest.raises(T.ShapeError):
        TR.mse_loss(T.Tensor(np.zeros((2, 2))), T.Tensor(np.zeros((2, 3))))
    with pytest.raises(T.ShapeError):
        TR.cross_entropy(T.Tensor(np.zeros((2, 2))), np.zeros(3, int))


# ----------------------------------------------------------------- metrics


def test_metrics_perfect_predictions():
    out = TR.metrics([0, 1, 2, 1], [0, 1, 2, 1])
    assert out == {"accuracy": 1.0, "macro_f1": 1.0}


def test_metrics_all_wrong_binary():
    out = TR.metrics([1, 0, 1, 0], [0, 1, 0, 1])
    assert out["accuracy"] == 0.0 and out["macro_f1"] == 0.0


def test_metrics_hand_confusion_example():
    out = TR.metrics([0, 1, 1, 1], [0, 0, 1, 1])
    # class 0: tp=1 fp=0 fn=1 -> f1=2/3; class 1: tp=2 fp=1 fn=0 -> f1=4/5
    assert out["accuracy"] == 0.75
    np.testing.assert_allclose(out["macro_f1"], (2 / 3 + 4 / 5) / 2)


def test_metrics_empty_input_errors():
    with pytest.raises(ValueError):
        TR.metrics([], [])


def test_metrics_match_bruteforce_confusion_matrix():
    rng = np.random.default_rng(7)
    for _ in range(25):
        n = rng.integers(1, 200)
        c = rng.integers(2, 10)
        true = rng.integers(0, c, size=n)
        pred = rng.integers(0, c, size=n)
        got = TR.metrics(pred, true, n_classes=c)
        conf = np.zeros((c, c), int)
        for p, t in zip(pred, true):
            conf[t, p] += 1
        acc = np.trace(conf) / n
        f1s = []
        for cls in range(c):
            tp = conf[cls, cls]
            fp = conf[:, cls].sum() - tp
            fn = conf[cls, :].sum() - tp
            f1s.append(2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0)
        np.testing.assert_allclose(got["accuracy"], acc)
        np.testing.assert_allclose(got["macro_f1"], np.mean(f1s))

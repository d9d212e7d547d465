"""B-spline -> truncated power + polynomial conversion."""

import numpy as np
import pytest

from trukan import convert as C
from trukan import kernels
from trukan import tensor as T
from trukan.basis import extend_knots
from trukan.layers import KANLayer, Network
from trukan.serialize import network_from_dict, network_to_dict


def test_zero_coefficients_convert_to_zero():
    t = extend_knots(np.linspace(-1, 1, 6), 3)
    res = C.bspline_to_truncated(np.zeros(len(t) - 4), t, 3)
    np.testing.assert_allclose(res.poly_coeffs, 0.0, atol=1e-12)
    np.testing.assert_allclose(res.trunc_coeffs, 0.0, atol=1e-12)


def test_degree_one_hat_has_known_truncated_form():
    # hat on {0,1,2} equals (x)_+ - 2(x-1)_+ + (x-2)_+ ; restricted to the
    # interior [0, 2] the (x)_+ piece folds into the polynomial block
    t = np.array([-1.0, 0.0, 1.0, 2.0, 3.0])  # hat is basis index 1
    coeffs = np.array([0.0, 1.0, 0.0])
    res = C.bspline_to_truncated(coeffs, t, 1)
    xs = np.linspace(0.0, 2.0, 1000)
    expect = (np.clip(xs, 0, None) - 2 * np.clip(xs - 1, 0, None)
              + np.clip(xs - 2, 0, None))
    np.testing.assert_allclose(res.evaluate(xs), expect, atol=1e-10)


def test_random_cubic_expansion_matches_at_1000_points():
    rng = np.random.default_rng(0)
    t = extend_knots(np.linspace(-1, 1, 8), 3)
    nb = len(t) - 4
    coeffs = rng.normal(size=nb)
    res = C.bspline_to_truncated(coeffs, t, 3)
    xs = np.linspace(-1 + 1e-9, 1 - 1e-9, 1000)
    basis, _ = kernels.bspline_basis(xs, t, 3)
    np.testing.assert_allclose(res.evaluate(xs), basis @ coeffs, atol=1e-8)


def test_round_trip_sweep_orders_and_grids():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(30):
        k = int(rng.integers(0, 4))
        G = int(rng.integers(4, 17))
        t = extend_knots(np.linspace(-1, 1, G), k)
        coeffs = rng.normal(size=len(t) - k - 1)
        res = C.bspline_to_truncated(coeffs, t, k)
        xs = np.linspace(-1 + 1e-9, 1 - 1e-9, 1000)
        basis, _ = kernels.bspline_basis(xs, t, k)
        worst = max(worst, np.abs(res.evaluate(xs) - basis @ coeffs).max())
    assert worst < 1e-8


def test_condition_number_is_reported():
    t = extend_knots(np.linspace(-1, 1, 8), 3)
    res = C.bspline_to_truncated(np.ones(len(t) - 4), t, 3)
    assert np.isfinite(res.condition) and res.condition >= 1.0


def test_stacked_edges_convert_together():
    rng = np.random.default_rng(2)
    t = extend_knots(np.linspace(-1, 1, 6), 3)
    nb = len(t) - 4
    coeffs = rng.normal(size=(5, nb))
    res = C.bspline_to_truncated(coeffs, t, 3)
    xs = np.linspace(-0.99, 0.99, 400)
    basis, _ = kernels.bspline_basis(xs, t, 3)
    np.testing.assert_allclose(res.evaluate(xs), basis @ coeffs.T, atol=1e-8)


# ----------------------------------------------------------- layer / network


@pytest.mark.parametrize("scales", [True, False])
def test_converted_kan_layer_matches_original(scales):
    rng = np.random.default_rng(3)
    lyr = KANLayer(3, 4, grid=8, order=3, scales_trainable=scales, rng=rng)
    lyr.spline_coeffs.data[...] = rng.normal(size=lyr.spline_coeffs.shape)
    conv, max_dev, cond = C.convert_kan_layer(lyr)
    assert max_dev < 1e-8
    xs = rng.uniform(-1, 1, size=(64, 3))
    a = lyr.forward(T.Tensor(xs)).data
    b = conv.forward(T.Tensor(xs)).data
    np.testing.assert_allclose(b, a, atol=1e-8)


def test_convert_network_replaces_kan_layers():
    rng = np.random.default_rng(4)
    net = Network([KANLayer(2, 3, grid=6, rng=rng), KANLayer(3, 2, grid=6, rng=rng)])
    for lyr in net.layers:
        lyr.spline_coeffs.data[...] = rng.normal(size=lyr.spline_coeffs.shape)
    # keep hidden activations inside the second layer's knot range; the
    # representations only coincide on the grid domain
    probe = rng.uniform(-1, 1, size=(256, 2))
    peak = np.abs(net.layers[0].forward(T.Tensor(probe)).data).max()
    for name in ("spline_coeffs", "base_weight"):
        getattr(net.layers[0], name).data[...] *= 0.9 / peak
    converted, report = C.convert_network(net)
    assert [l.kind for l in converted.layers] == ["kan_truncated", "kan_truncated"]
    assert report["max_deviation"] < 1e-8
    xs = rng.uniform(-1, 1, size=(32, 2))
    net.eval()
    converted.eval()
    a = net.forward(T.Tensor(xs)).data
    b = converted.forward(T.Tensor(xs)).data
    np.testing.assert_allclose(b, a, atol=1e-7)


def test_convert_network_requires_kan_layers():
    from trukan.layers import DenseLayer

    with pytest.raises(ValueError, match="no B-spline KAN layers"):
        C.convert_network(Network([DenseLayer(2, 2)]))


def test_converted_layer_serializes():
    rng = np.random.default_rng(5)
    lyr = KANLayer(2, 2, grid=6, rng=rng)
    lyr.spline_coeffs.data[...] = rng.normal(size=lyr.spline_coeffs.shape)
    converted, _ = C.convert_network(Network([lyr]))
    clone = network_from_dict(network_to_dict(converted))
    xs = rng.uniform(-1, 1, size=(16, 2))
    np.testing.assert_array_equal(clone.forward(T.Tensor(xs)).data,
                                  converted.forward(T.Tensor(xs)).data)


def test_deviation_report_monotone_in_density():
    rng = np.random.default_rng(6)
    net = Network([KANLayer(3, 2, grid=8, rng=rng)])
    net.layers[0].spline_coeffs.data[...] = rng.normal(
        size=net.layers[0].spline_coeffs.shape)
    converted, _ = C.convert_network(net)
    report = C.deviation_by_density(net, converted, densities=(250, 500, 1000))
    devs = [report[d] for d in sorted(report)]
    assert devs == sorted(devs)
    assert devs[-1] < 1e-8

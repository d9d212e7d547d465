"""Change of basis: B-spline expansions to truncated-power + polynomial form.

The two bases span the same piecewise-polynomial space, so a least-squares
collocation fit on a dense interior grid recovers the representation to
solver precision; the collocation system's conditioning is reported so
callers can reject degenerate conversions.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .basis import KnotSet, silu
from .layers import KANLayer, Layer, TruKANLayer, _add_row
from .tensor import Tensor, apply_op


class ConversionError(RuntimeError):
    def __init__(self, message, condition):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


MAX_CONDITION = 1e12


@dataclass
class ConversionResult:
    poly_coeffs: np.ndarray        # [k+1] or [edges, k+1]
    trunc_coeffs: np.ndarray       # [n_interior] or [edges, n_interior]
    interior_knots: np.ndarray
    domain: tuple
    order: int
    condition: float

    def evaluate(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        design = _design_matrix(xs, self.interior_knots, self.order)
        coeffs = np.concatenate(
            [np.atleast_2d(self.poly_coeffs), np.atleast_2d(self.trunc_coeffs)], axis=1)
        out = design @ coeffs.T
        return out[:, 0] if coeffs.shape[0] == 1 else out


def _design_matrix(xs, interior_knots, k):
    cols = [xs ** r for r in range(k + 1)]
    for t in interior_knots:
        if k == 0:
            cols.append((xs >= t).astype(np.float64))
        else:
            cols.append(np.where(xs > t, xs - t, 0.0) ** k)
    return np.stack(cols, axis=1)


def bspline_to_truncated(coeffs_b, ext_knots, k, domain=None, n_samples=2000):
    """Convert B-spline expansion(s) to truncated-power + polynomial form.

    `coeffs_b` is one coefficient vector [nb] or a stack [edges, nb] sharing
    `ext_knots`.  The fit runs on `domain` (default: the knot vector's
    interior span); knots at or left of the domain fold into the polynomial
    part, which is why the polynomial block exists at all.
    """
    t = np.asarray(ext_knots, dtype=np.float64)
    coeffs = np.atleast_2d(np.asarray(coeffs_b, dtype=np.float64))
    nb = len(t) - k - 1
    if coeffs.shape[1] != nb:
        raise ValueError(f"expected {nb} B-spline coefficients per row, "
                         f"got {coeffs.shape[1]}")
    if domain is None:
        domain = (t[k], t[len(t) - k - 1])
    lo, hi = domain
    interior = t[(t > lo + 1e-12 * (hi - lo)) & (t < hi - 1e-12 * (hi - lo))]
    # open-interval collocation: at exactly x = hi the half-open B-spline
    # convention zeroes a k=0 basis, which would poison the fit
    xs = np.linspace(lo, hi, n_samples + 2)[1:-1]
    basis, _ = kernels.bspline_basis(xs, t, k)
    targets = basis @ coeffs.T                     # [S, edges]
    design = _design_matrix(xs, interior, k)       # [S, k+1+len(interior)]
    sol, _, rank, sv = np.linalg.lstsq(design, targets, rcond=None)
    condition = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if rank < design.shape[1] or condition > MAX_CONDITION:
        raise ConversionError("ill-conditioned basis conversion", condition)
    single = np.asarray(coeffs_b).ndim == 1
    poly = sol[: k + 1].T
    trunc = sol[k + 1:].T
    return ConversionResult(
        poly_coeffs=poly[0] if single else poly,
        trunc_coeffs=trunc[0] if single else trunc,
        interior_knots=interior,
        domain=(float(lo), float(hi)),
        order=k,
        condition=condition,
    )


class ConvertedKANLayer(Layer):
    """A KAN layer after basis conversion: truncated-power + polynomial
    spline block plus the retained SiLU base term."""

    kind = "kan_truncated"

    def __init__(self, in_dim, out_dim, order, interior_lo, interior_hi,
                 interior_count, bias=True):
        super().__init__()
        self.in_dim, self.out_dim = int(in_dim), int(out_dim)
        self.order = int(order)
        knots = KnotSet(interior_count, lo=interior_lo, hi=interior_hi, mode="fixed")
        self.spline = TruKANLayer(in_dim, out_dim, knots=knots, order=order,
                                  bias=False)
        self.spline.trunc_coeffs.data[...] = 0.0
        self.spline.poly_coeffs.data[...] = 0.0
        self.base_weight = Tensor(np.zeros((out_dim, in_dim)), requires_grad=True,
                                  name="base_weight")
        self.bias = Tensor(np.zeros((1, out_dim)), requires_grad=True,
                           name="bias") if bias else None

    @property
    def edge_mask(self):
        return self.spline.edge_mask

    @edge_mask.setter
    def edge_mask(self, value):
        self.spline.edge_mask = value

    def forward(self, x):
        wb = apply_op("transpose", (self.base_weight,), self.base_weight.data.T.copy(),
                      lambda g: (g.T,))
        y = self.spline.forward(x) + (silu(x) @ wb)
        return _add_row(y, self.bias) if self.bias is not None else y

    def param_specs(self):
        specs = [(f"spline.{n}", t, r) for n, t, r in self.spline.param_specs()]
        specs.append(("base_weight", self.base_weight, "weight"))
        if self.bias is not None:
            specs.append(("bias", self.bias, "bias"))
        return specs

    def config(self):
        return {"in_dim": self.in_dim, "out_dim": self.out_dim, "order": self.order,
                "interior_lo": self.spline.knots.lo,
                "interior_hi": self.spline.knots.hi,
                "interior_count": self.spline.knots.count,
                "bias": self.bias is not None}

    def flop_shape(self):
        return self.in_dim, self.out_dim


def convert_kan_layer(layer, n_samples=2000):
    """Re-express a KANLayer's spline block in truncated-power form.

    Returns (converted_layer, max_abs_deviation, condition); the deviation
    is evaluated per edge on a dense interior grid.
    """
    if not isinstance(layer, KANLayer):
        raise TypeError(f"expected a KANLayer, got {type(layer).__name__}")
    k = layer.order
    nb = layer.n_basis
    out, n = layer.out_dim, layer.in_dim
    ssp, sb = layer._scales()
    S3 = layer.spline_coeffs.data.reshape(out, n, nb)
    if layer.scales_trainable:
        scaled = S3 * ssp[:, :, None]
        w_eff = layer.base_weight.data * sb
    else:
        scaled = S3 * ssp
        w_eff = layer.base_weight.data * sb
    flat = scaled.reshape(out * n, nb)
    result = bspline_to_truncated(flat, layer.ext_knots, k,
                                  domain=(layer.lo, layer.hi), n_samples=n_samples)
    g_int = len(result.interior_knots)
    conv = ConvertedKANLayer(n, out, k, float(result.interior_knots[0]),
                             float(result.interior_knots[-1]), g_int,
                             bias=layer.bias is not None)
    # KnotSet materializes linspace over the interior span; the KAN grid is
    # uniform, so the positions coincide; refit guards against drift anyway
    refit = np.abs(conv.spline.knots.knot_array()[0] - result.interior_knots).max()
    if refit > 1e-9:
        raise ConversionError("interior knots are not uniform", refit)
    conv.spline.trunc_coeffs.data[...] = result.trunc_coeffs.reshape(out, n * g_int)
    conv.spline.poly_coeffs.data[...] = result.poly_coeffs.reshape(out, n * (k + 1))
    conv.base_weight.data[...] = w_eff
    if layer.bias is not None:
        conv.bias.data[...] = layer.bias.data
    xs = np.linspace(layer.lo, layer.hi, 1000)
    basis, _ = kernels.bspline_basis(xs, layer.ext_knots, k)
    original = basis @ flat.T
    converted = result.evaluate(xs)
    max_dev = float(np.abs(original - converted).max())
    return conv, max_dev, result.condition


def convert_network(net, n_samples=2000):
    """Replace every KANLayer with its truncated-power equivalent.

    Returns (converted network, report dict).  Raises ValueError when the
    network has no B-spline KAN layers to convert.
    """
    kan_indices = [i for i, lyr in enumerate(net.layers) if isinstance(lyr, KANLayer)]
    if not kan_indices:
        raise ValueError("checkpoint contains no B-spline KAN layers to convert")
    from .serialize import network_from_dict, network_to_dict

    clone = network_from_dict(network_to_dict(net))
    layer_reports = []
    for idx in kan_indices:
        conv, dev, cond = convert_kan_layer(clone.layers[idx], n_samples=n_samples)
        clone.layers[idx] = conv
        layer_reports.append({"layer": idx, "max_deviation": dev, "condition": cond})
    return clone, {"layers": layer_reports,
                   "max_deviation": max(r["max_deviation"] for r in layer_reports)}


def deviation_by_density(net, converted, densities=(250, 500, 1000), seed=0,
                         lo=-1.0, hi=1.0):
    """Max forward deviation between original and converted networks on
    nested sample grids: coarser grids are exact subsets of the finest, so
    the reported deviation is monotone non-decreasing in density."""
    from .tensor import no_grad

    densities = sorted(densities)
    finest = densities[-1]
    if any(finest % d for d in densities):
        raise ValueError(f"densities must divide the finest ({finest}): {densities}")
    net.eval()
    converted.eval()
    in_dim = None
    for lyr in net.layers:
        shape = lyr.flop_shape()
        if shape:
            in_dim = shape[0]
            break
    rng = np.random.default_rng(seed)
    directions = np.abs(rng.uniform(0.2, 1.0, size=(in_dim,)))
    ts = np.linspace(0.0, 1.0, finest + 1)
    xs_fine = lo + (hi - lo) * ts[:, None] * directions[None, :]
    report = {}
    for density in densities:
        xs = xs_fine[:: finest // density]
        with no_grad():
            a = net.forward(Tensor(xs)).data
            b = converted.forward(Tensor(xs)).data
        report[density] = float(np.abs(a - b).max())
    return report

"""Network layers and classifier heads.

Spline-family layers (truncated-power, B-spline, sine) evaluate their
bases through `trukan.kernels` inside fused tape ops, so forward/backward
cost is dominated by a basis fill plus BLAS mixing.  Each spline layer
carries an edge mask used by pruning and the parameter-count report.
"""

import numpy as np

from . import kernels
from .basis import KnotSet, check_order, silu, _stable_sigmoid
from .tensor import Tensor, ShapeError, apply_op, clamp_min_zero

HEAD_KINDS = (
    "mlp", "mlp-n", "kan", "kan-n", "sinekan", "sinekan-n",
    "trukan-s", "trukan-sn", "trukan-i", "trukan-in",
)


def _add_row(x, row):
    """x [B, d] + row [1, d] broadcast over rows."""
    value = x.data + row.data
    return apply_op("add_row", (x, row), value,
                    lambda g: (g, g.sum(axis=0, keepdims=True)))


def _check_in_dim(x, in_dim, kind):
    if x.shape[1] != in_dim:
        raise ShapeError(f"{kind}: expected {in_dim} input columns, got {x.shape[1]}")


class Layer:
    kind = "layer"

    def __init__(self):
        self.training = True

    def forward(self, x):
        raise NotImplementedError

    def param_specs(self):
        """(name, tensor, role) triples; role picks the optimizer group."""
        return []

    def extra_state(self):
        return {}

    def load_extra_state(self, state):
        pass

    def config(self):
        return {}

    def flop_shape(self):
        """(in_dim, out_dim) when the layer mixes features, else None."""
        return None


class DenseLayer(Layer):
    kind = "dense"

    def __init__(self, in_dim, out_dim, bias=True, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.in_dim, self.out_dim = int(in_dim), int(out_dim)
        bound = 1.0 / np.sqrt(in_dim)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(out_dim, in_dim)),
                             requires_grad=True, name="dense_weight")
        self.bias = Tensor(np.zeros((1, out_dim)), requires_grad=True,
                           name="dense_bias") if bias else None
        self.edge_mask = np.ones((out_dim, in_dim), dtype=bool)

    def forward(self, x):
        _check_in_dim(x, self.in_dim, self.kind)
        y = x @ _transpose(self.weight)
        return _add_row(y, self.bias) if self.bias is not None else y

    def param_specs(self):
        specs = [("weight", self.weight, "weight")]
        if self.bias is not None:
            specs.append(("bias", self.bias, "bias"))
        return specs

    def edge_components(self, i, o, xs):
        return {"linear": self.weight.data[o, i] * xs}

    def edge_scores(self, x):
        return np.abs(self.weight.data) * np.mean(np.abs(x), axis=0)[None, :]

    def zero_edges(self, mask_off):
        self.weight.data[mask_off] = 0.0
        self.edge_mask &= ~mask_off

    def config(self):
        return {"in_dim": self.in_dim, "out_dim": self.out_dim,
                "bias": self.bias is not None}

    def flop_shape(self):
        return self.in_dim, self.out_dim


class ReLULayer(Layer):
    kind = "relu"

    def forward(self, x):
        return clamp_min_zero(x)


class DropoutLayer(Layer):
    kind = "dropout"

    def __init__(self, p):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = float(p)
        self.rng = np.random.default_rng(0)

    def forward(self, x):
        if not self.training or self.p == 0.0:
            return x
        keep = 1.0 - self.p
        mask = (self.rng.random(x.shape) < keep) / keep  # inverted scaling
        return apply_op("dropout", (x,), x.data * mask, lambda g: (g * mask,))

    def config(self):
        return {"p": self.p}


class LayerNormLayer(Layer):
    kind = "layer_norm"

    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.dim = int(dim)
        self.eps = float(eps)
        self.gamma = Tensor(np.ones((1, dim)), requires_grad=True, name="ln_gamma")
        self.beta = Tensor(np.zeros((1, dim)), requires_grad=True, name="ln_beta")

    def forward(self, x):
        _check_in_dim(x, self.dim, self.kind)
        mu = x.data.mean(axis=1, keepdims=True)
        var = x.data.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x.data - mu) * inv
        gamma, beta = self.gamma, self.beta
        value = xhat * gamma.data + beta.data
        d = self.dim

        def backward(g):
            gbeta = g.sum(axis=0, keepdims=True)
            ggamma = (g * xhat).sum(axis=0, keepdims=True)
            gh = g * gamma.data
            gx = inv * (gh - gh.mean(axis=1, keepdims=True)
                        - xhat * (gh * xhat).sum(axis=1, keepdims=True) / d)
            return (gx, ggamma, gbeta)

        return apply_op("layer_norm", (x, gamma, beta), value, backward)

    def param_specs(self):
        return [("gamma", self.gamma, "norm_affine"), ("beta", self.beta, "norm_affine")]

    def config(self):
        return {"dim": self.dim, "eps": self.eps}


class BatchNormLayer(Layer):
    kind = "batch_norm"

    def __init__(self, dim, eps=1e-5, momentum=0.1):
        super().__init__()
        self.dim = int(dim)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.gamma = Tensor(np.ones((1, dim)), requires_grad=True, name="bn_gamma")
        self.beta = Tensor(np.zeros((1, dim)), requires_grad=True, name="bn_beta")
        self.running_mean = np.zeros((1, dim))
        self.running_var = np.ones((1, dim))

    def forward(self, x):
        _check_in_dim(x, self.dim, self.kind)
        gamma, beta = self.gamma, self.beta
        if self.training:
            B = x.shape[0]
            if B < 2:
                raise ValueError("batch_norm needs batch size >= 2 in training mode")
            mu = x.data.mean(axis=0, keepdims=True)
            var = x.data.var(axis=0, keepdims=True)
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mu
            unbiased = var * B / (B - 1)
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * unbiased
        else:
            mu, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x.data - mu) * inv
        value = xhat * gamma.data + beta.data
        training = self.training
        B = x.shape[0]

        def backward(g):
            gbeta = g.sum(axis=0, keepdims=True)
            ggamma = (g * xhat).sum(axis=0, keepdims=True)
            gh = g * gamma.data
            if training:
                gx = inv * (gh - gh.mean(axis=0, keepdims=True)
                            - xhat * (gh * xhat).mean(axis=0, keepdims=True))
            else:
                gx = gh * inv
            return (gx, ggamma, gbeta)

        return apply_op("batch_norm", (x, gamma, beta), value, backward)

    def param_specs(self):
        return [("gamma", self.gamma, "norm_affine"), ("beta", self.beta, "norm_affine")]

    def extra_state(self):
        return {"running_mean": self.running_mean.ravel().tolist(),
                "running_var": self.running_var.ravel().tolist()}

    def load_extra_state(self, state):
        self.running_mean = np.asarray(state["running_mean"], float).reshape(1, -1)
        self.running_var = np.asarray(state["running_var"], float).reshape(1, -1)

    def config(self):
        return {"dim": self.dim, "eps": self.eps, "momentum": self.momentum}


def _transpose(t):
    td = t.data
    return apply_op("transpose", (t,), td.T.copy(), lambda g: (g.T,))


def _poly_dx(g_pow, powers, k):
    """Route a cotangent on monomial features back to x."""
    if k == 0:
        return np.zeros(powers.shape[:2])
    r = np.arange(1, k + 1)
    return (g_pow[..., 1:] * r * powers[..., :-1]).sum(axis=2)


class TruKANLayer(Layer):
    """Edge functions = truncated-power spline + polynomial trend.

    Knots may be shared across outputs or individual per output, fixed or
    learnable; coefficients live in [out, in*G] / [out, in*(k+1)] blocks.
    The individual-knot path materializes per-output basis blocks (size
    `individual_block` outputs at a time), which is what makes its memory
    footprint scale with out_dim.
    """

    kind = "trukan"

    def __init__(self, in_dim, out_dim, knots=None, order=3, bias=True,
                 pre_norm=False, rng=None, grid=8, lo=-1.0, hi=1.0,
                 knot_mode="fixed", shared_knots=True):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.in_dim, self.out_dim = int(in_dim), int(out_dim)
        self.order = check_order(order)
        if knots is None:
            knots = KnotSet(grid, lo=lo, hi=hi, mode=knot_mode,
                            out_dim=None if shared_knots else out_dim)
        if knots.out_dim is not None and knots.out_dim != self.out_dim:
            raise ValueError(
                f"individual KnotSet rows ({knots.out_dim}) != out_dim ({out_dim})")
        self.knots = knots
        G, k = knots.count, self.order
        std = 0.1 / np.sqrt(in_dim * G)
        self.trunc_coeffs = Tensor(rng.normal(0.0, std, size=(out_dim, in_dim * G)),
                                   requires_grad=True, name="trunc_coeffs")
        poly = np.zeros((out_dim, in_dim, k + 1))
        if k >= 1:
            poly[:, :, 1] = 1.0 / np.sqrt(in_dim)  # near-identity pass-through
        self.poly_coeffs = Tensor(poly.reshape(out_dim, in_dim * (k + 1)),
                                  requires_grad=True, name="poly_coeffs")
        self.bias = Tensor(np.zeros((1, out_dim)), requires_grad=True,
                           name="trukan_bias") if bias else None
        self.pre_norm = bool(pre_norm)
        self.edge_mask = np.ones((out_dim, in_dim), dtype=bool)
        self.individual_block = 16  # outputs per basis block on the individual path

    @property
    def shared(self):
        return self.knots.shared

    def forward(self, x):
        _check_in_dim(x, self.in_dim, self.kind)
        if self.pre_norm:
            x = _row_standardize(x)
        knots_t = self.knots.materialize()
        if self.shared:
            return self._forward_shared(x, knots_t)
        return self._forward_individual(x, knots_t)

    def _forward_shared(self, x, knots_t):
        G, k = self.knots.count, self.order
        n, out = self.in_dim, self.out_dim
        xd, kn = x.data, knots_t.data
        C, A = self.trunc_coeffs, self.poly_coeffs
        feats = kernels.trunc_features_multi(xd, kn, k)[0]  # [B, n, G]
        powers = kernels.power_features(xd, k)              # [B, n, k+1]
        B = xd.shape[0]
        f2 = feats.reshape(B, n * G)
        p2 = powers.reshape(B, n * (k + 1))
        value = f2 @ C.data.T + p2 @ A.data.T
        if self.bias is not None:
            value += self.bias.data
        inputs = [x, knots_t, C, A]
        if self.bias is not None:
            inputs.append(self.bias)
        need_knot_grad = knots_t.requires_grad

        def backward(g):
            gC = g.T @ f2
            gA = g.T @ p2
            gF = (g @ C.data).reshape(B, n, G)
            gP = (g @ A.data).reshape(B, n, k + 1)
            gx_tr, gkn = kernels.trunc_features_multi_backward(
                xd, kn, k, gF[None], need_knot_grad)
            gx = gx_tr + _poly_dx(gP, powers, k)
            grads = [gx, gkn, gC, gA]
            if self.bias is not None:
                grads.append(g.sum(axis=0, keepdims=True))
            return tuple(grads)

        return apply_op("trukan_forward", tuple(inputs), value, backward)

    def _forward_individual(self, x, knots_t):
        G, k = self.knots.count, self.order
        n, out = self.in_dim, self.out_dim
        xd, kn = x.data, knots_t.data
        C, A = self.trunc_coeffs, self.poly_coeffs
        B = xd.shape[0]
        powers = kernels.power_features(xd, k)
        p2 = powers.reshape(B, n * (k + 1))
        value = p2 @ A.data.T
        blk = max(1, self.individual_block)
        buf = np.empty((min(blk, out), B, n, G))  # per-output basis block
        for o0 in range(0, out, blk):
            o1 = min(out, o0 + blk)
            q = o1 - o0
            fb = kernels.trunc_features_multi(xd, kn[o0:o1], k, out=buf[:q])
            f2 = fb.reshape(q, B, n * G)
            mixed = f2 @ C.data[o0:o1, :, None]                  # [q, B, 1]
            value[:, o0:o1] += mixed[:, :, 0].T
        if self.bias is not None:
            value += self.bias.data
        inputs = [x, knots_t, C, A]
        if self.bias is not None:
            inputs.append(self.bias)
        need_knot_grad = knots_t.requires_grad

        def backward(g):
            gA = g.T @ p2
            gP = (g @ A.data).reshape(B, n, k + 1)
            gx_tr, gC3, gkn = kernels.trunc_mix_individual_backward(
                xd, kn, k, C.data.reshape(out, n, G), g, need_knot_grad, blk)
            gx = gx_tr + _poly_dx(gP, powers, k)
            grads = [gx, gkn, gC3.reshape(out, n * G), gA]
            if self.bias is not None:
                grads.append(g.sum(axis=0, keepdims=True))
            return tuple(grads)

        return apply_op("trukan_forward", tuple(inputs), value, backward)

    def param_specs(self):
        specs = [("trunc_coeffs", self.trunc_coeffs, "coeff"),
                 ("poly_coeffs", self.poly_coeffs, "coeff")]
        specs += [(n, t, r) for n, t, r in self.knots.param_specs()]
        if self.bias is not None:
            specs.append(("bias", self.bias, "bias"))
        return specs

    def edge_components(self, i, o, xs):
        """Component curves of edge (input i -> output o) at sample points."""
        G, k = self.knots.count, self.order
        kn = self.knots.knot_array()
        row = kn[0] if self.shared else kn[o]
        feats = kernels.trunc_features_multi(xs.reshape(1, -1), row[None, :], k)[0, 0]
        trunc = feats @ self.trunc_coeffs.data[o, i * G:(i + 1) * G]
        powers = kernels.power_features(xs.reshape(1, -1), k)[0]
        poly = powers @ self.poly_coeffs.data[o, i * (k + 1):(i + 1) * (k + 1)]
        return {"truncated": trunc, "polynomial": poly}

    def edge_scores(self, x):
        G, k = self.knots.count, self.order
        n, out = self.in_dim, self.out_dim
        kn = self.knots.knot_array()
        B = x.shape[0]
        powers = kernels.power_features(x, k)
        A3 = self.poly_coeffs.data.reshape(out, n, k + 1)
        C3 = self.trunc_coeffs.data.reshape(out, n, G)
        scores = np.empty((out, n))
        for o in range(out):
            row = kn[0] if self.shared else kn[o]
            feats = kernels.trunc_features_multi(x, row[None, :], k)[0]
            act = np.einsum("big,ig->bi", feats, C3[o]) + np.einsum(
                "bir,ir->bi", powers, A3[o])
            scores[o] = np.mean(np.abs(act), axis=0)
        return scores

    def zero_edges(self, mask_off):
        G, k = self.knots.count, self.order
        C3 = self.trunc_coeffs.data.reshape(self.out_dim, self.in_dim, G)
        A3 = self.poly_coeffs.data.reshape(self.out_dim, self.in_dim, k + 1)
        C3[mask_off] = 0.0
        A3[mask_off] = 0.0
        self.edge_mask &= ~mask_off

    def extra_state(self):
        if self.knots.mode == "fixed":
            return {}
        return {"knots_raw": self.knots.raw.data.tolist()}

    def load_extra_state(self, state):
        if "knots_raw" in state:
            self.knots.raw.data[...] = np.asarray(state["knots_raw"], float)

    def config(self):
        return {"in_dim": self.in_dim, "out_dim": self.out_dim, "order": self.order,
                "bias": self.bias is not None, "pre_norm": self.pre_norm,
                "knots": self.knots.config()}

    def flop_shape(self):
        return self.in_dim, self.out_dim


def _row_standardize(x):
    """(x - mean)/std per row, without affine parameters."""
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + 1e-8)
    xhat = (x.data - mu) * inv
    d = x.shape[1]

    def backward(g):
        gx = inv * (g - g.mean(axis=1, keepdims=True)
                    - xhat * (g * xhat).sum(axis=1, keepdims=True) / d)
        return (gx,)

    return apply_op("row_standardize", (x,), xhat, backward)


class KANLayer(Layer):
    """Reference B-spline KAN layer: SiLU base + spline correction per edge.

    The grid is fixed (non-trainable).  `scales_trainable=True` is the
    per-edge scale-factor variant; False pins both scale factors to
    1/sqrt(in_dim).
    """

    kind = "kan"

    def __init__(self, in_dim, out_dim, grid=8, order=3, lo=-1.0, hi=1.0,
                 scales_trainable=True, bias=True, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.in_dim, self.out_dim = int(in_dim), int(out_dim)
        self.order = check_order(order)
        self.grid = int(grid)
        if self.grid < 2:
            raise ValueError("KAN layer needs a grid of >= 2 knots")
        self.lo, self.hi = float(lo), float(hi)
        base_grid = np.linspace(lo, hi, self.grid)
        h = base_grid[1] - base_grid[0]
        k = self.order
        self.ext_knots = np.concatenate([
            base_grid[0] - h * np.arange(k, 0, -1), base_grid,
            base_grid[-1] + h * np.arange(1, k + 1)])
        self.n_basis = len(self.ext_knots) - k - 1  # grid + order - 1
        self.scales_trainable = bool(scales_trainable)
        nb = self.n_basis
        std = 0.1 / np.sqrt(in_dim * nb)
        self.spline_coeffs = Tensor(rng.normal(0.0, std, size=(out_dim, in_dim * nb)),
                                    requires_grad=True, name="spline_coeffs")
        self.base_weight = Tensor(rng.normal(0.0, 1.0 / np.sqrt(in_dim),
                                             size=(out_dim, in_dim)),
                                  requires_grad=True, name="base_weight")
        s0 = 1.0 / np.sqrt(in_dim)
        if self.scales_trainable:
            self.scale_sp = Tensor(np.full((out_dim, in_dim), s0),
                                   requires_grad=True, name="scale_sp")
            self.scale_base = Tensor(np.full((out_dim, in_dim), s0),
                                     requires_grad=True, name="scale_base")
        else:
            self.scale_sp = None
            self.scale_base = None
            self.fixed_scale = s0
        self.bias = Tensor(np.zeros((1, out_dim)), requires_grad=True,
                           name="kan_bias") if bias else None
        self.edge_mask = np.ones((out_dim, in_dim), dtype=bool)

    def _scales(self):
        if self.scales_trainable:
            return self.scale_sp.data, self.scale_base.data
        return self.fixed_scale, self.fixed_scale

    def forward(self, x):
        _check_in_dim(x, self.in_dim, self.kind)
        n, out, nb, k = self.in_dim, self.out_dim, self.n_basis, self.order
        xd = x.data
        B = xd.shape[0]
        want_deriv = x.requires_grad
        basis, dbasis = kernels.bspline_basis(xd.reshape(-1), self.ext_knots, k,
                                              want_deriv=want_deriv)
        basis = basis.reshape(B, n, nb)
        sig = _stable_sigmoid(xd)
        silu_x = xd * sig
        ssp, sb = self._scales()
        S3 = self.spline_coeffs.data.reshape(out, n, nb)
        if self.scales_trainable:
            w_sp = (S3 * ssp[:, :, None]).reshape(out, n * nb)
        else:
            w_sp = self.spline_coeffs.data * ssp
        w_base = self.base_weight.data * sb
        b2 = basis.reshape(B, n * nb)
        value = b2 @ w_sp.T + silu_x @ w_base.T
        if self.bias is not None:
            value += self.bias.data
        inputs = [x, self.spline_coeffs, self.base_weight]
        if self.scales_trainable:
            inputs += [self.scale_sp, self.scale_base]
        if self.bias is not None:
            inputs.append(self.bias)

        def backward(g):
            gw_sp = g.T @ b2                      # [out, n*nb]
            gw_base = g.T @ silu_x                # [out, n]
            if self.scales_trainable:
                gS = (gw_sp.reshape(out, n, nb) * ssp[:, :, None]).reshape(out, n * nb)
                gssp = (gw_sp.reshape(out, n, nb) * S3).sum(axis=2)
                gsb = gw_base * self.base_weight.data
                gwb = gw_base * sb
            else:
                gS = gw_sp * ssp
                gwb = gw_base * sb
            gB = (g @ w_sp).reshape(B, n, nb)
            dsilu = sig + xd * sig * (1.0 - sig)
            gx = (g @ w_base) * dsilu
            if dbasis is not None:
                gx += (gB * dbasis.reshape(B, n, nb)).sum(axis=2)
            grads = [gx, gS, gwb]
            if self.scales_trainable:
                grads += [gssp, gsb]
            if self.bias is not None:
                grads.append(g.sum(axis=0, keepdims=True))
            return tuple(grads)

        return apply_op("kan_forward", tuple(inputs), value, backward)

    def param_specs(self):
        specs = [("spline_coeffs", self.spline_coeffs, "coeff"),
                 ("base_weight", self.base_weight, "weight")]
        if self.scales_trainable:
            specs += [("scale_sp", self.scale_sp, "weight"),
                      ("scale_base", self.scale_base, "weight")]
        if self.bias is not None:
            specs.append(("bias", self.bias, "bias"))
        return specs

    def edge_components(self, i, o, xs):
        nb, k = self.n_basis, self.order
        basis, _ = kernels.bspline_basis(xs.reshape(-1), self.ext_knots, k)
        ssp, sb = self._scales()
        ssp_oi = ssp[o, i] if self.scales_trainable else ssp
        sb_oi = sb[o, i] if self.scales_trainable else sb
        spline = ssp_oi * (basis @ self.spline_coeffs.data[o, i * nb:(i + 1) * nb])
        base = sb_oi * self.base_weight.data[o, i] * (xs * _stable_sigmoid(xs))
        return {"base": base, "spline": spline}

    def edge_scores(self, x):
        n, out, nb, k = self.in_dim, self.out_dim, self.n_basis, self.order
        B = x.shape[0]
        basis, _ = kernels.bspline_basis(x.reshape(-1), self.ext_knots, k)
        basis = basis.reshape(B, n, nb)
        silu_x = x * _stable_sigmoid(x)
        ssp, sb = self._scales()
        S3 = self.spline_coeffs.data.reshape(out, n, nb)
        scores = np.empty((out, n))
        for o in range(out):
            spline = np.einsum("bin,in->bi", basis, S3[o])
            ssp_o = ssp[o] if self.scales_trainable else ssp
            sb_o = sb[o] if self.scales_trainable else sb
            act = ssp_o * spline + sb_o * self.base_weight.data[o] * silu_x
            scores[o] = np.mean(np.abs(act), axis=0)
        return scores

    def zero_edges(self, mask_off):
        nb = self.n_basis
        S3 = self.spline_coeffs.data.reshape(self.out_dim, self.in_dim, nb)
        S3[mask_off] = 0.0
        self.base_weight.data[mask_off] = 0.0
        if self.scales_trainable:
            self.scale_sp.data[mask_off] = 0.0
            self.scale_base.data[mask_off] = 0.0
        self.edge_mask &= ~mask_off

    def config(self):
        return {"in_dim": self.in_dim, "out_dim": self.out_dim, "grid": self.grid,
                "order": self.order, "lo": self.lo, "hi": self.hi,
                "scales_trainable": self.scales_trainable,
                "bias": self.bias is not None}

    def flop_shape(self):
        return self.in_dim, self.out_dim


class SineKANLayer(Layer):
    """Sine-feature KAN layer: learnable frequencies, phases, and amplitudes."""

    kind = "sinekan"

    def __init__(self, in_dim, out_dim, grid=8, bias=True, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.in_dim, self.out_dim = int(in_dim), int(out_dim)
        self.grid = int(grid)
        G = self.grid
        self.freqs = Tensor(np.arange(1.0, G + 1.0).reshape(1, G),
                            requires_grad=True, name="sine_freqs")
        self.phases = Tensor(rng.uniform(0.0, 2.0 * np.pi, size=(in_dim, G)),
                             requires_grad=True, name="sine_phases")
        amp_std = 1.0 / np.sqrt(in_dim * G)
        self.amplitudes = Tensor(rng.normal(0.0, amp_std, size=(out_dim, in_dim * G)),
                                 requires_grad=True, name="sine_amplitudes")
        self.bias = Tensor(np.zeros((1, out_dim)), requires_grad=True,
                           name="sine_bias") if bias else None
        self.edge_mask = np.ones((out_dim, in_dim), dtype=bool)

    def forward(self, x):
        _check_in_dim(x, self.in_dim, self.kind)
        from .basis import sine_basis

        feats = sine_basis(x, self.freqs, self.phases)
        y = feats @ _transpose(self.amplitudes)
        return _add_row(y, self.bias) if self.bias is not None else y

    def param_specs(self):
        specs = [("freqs", self.freqs, "weight"), ("phases", self.phases, "weight"),
                 ("amplitudes", self.amplitudes, "coeff")]
        if self.bias is not None:
            specs.append(("bias", self.bias, "bias"))
        return specs

    def edge_components(self, i, o, xs):
        G = self.grid
        arg = xs[:, None] * self.freqs.data[0][None, :] + self.phases.data[i][None, :]
        vals = np.sin(arg) @ self.amplitudes.data[o, i * G:(i + 1) * G]
        return {"sine": vals}

    def edge_scores(self, x):
        G = self.grid
        arg = (x[:, :, None] * self.freqs.data[0][None, None, :]
               + self.phases.data[None, :, :])
        feats = np.sin(arg)  # [B, n, G]
        A3 = self.amplitudes.data.reshape(self.out_dim, self.in_dim, G)
        act = np.einsum("big,oig->boi", feats, A3)
        return np.mean(np.abs(act), axis=0)

    def zero_edges(self, mask_off):
        A3 = self.amplitudes.data.reshape(self.out_dim, self.in_dim, self.grid)
        A3[mask_off] = 0.0
        self.edge_mask &= ~mask_off

    def config(self):
        return {"in_dim": self.in_dim, "out_dim": self.out_dim, "grid": self.grid,
                "bias": self.bias is not None}

    def flop_shape(self):
        return self.in_dim, self.out_dim


SPLINE_FAMILY = (TruKANLayer, KANLayer, SineKANLayer, DenseLayer)


class Network:
    """Sequential container over layers, with a spec label for the head kind."""

    def __init__(self, layers, head_kind=None):
        self.layers = list(layers)
        self.head_kind = head_kind
        self.training = True
        for lyr in self.layers:
            lyr.training = True

    def forward(self, x):
        if not isinstance(x, Tensor):
            x = Tensor(x)
        for lyr in self.layers:
            x = lyr.forward(x)
        return x

    __call__ = forward

    def train(self):
        self.training = True
        for lyr in self.layers:
            lyr.training = True
        return self

    def eval(self):
        self.training = False
        for lyr in self.layers:
            lyr.training = False
        return self

    def set_rng(self, rng):
        for lyr in self.layers:
            if isinstance(lyr, DropoutLayer):
                lyr.rng = rng

    def param_specs(self):
        specs = []
        for idx, lyr in enumerate(self.layers):
            for name, tensor, role in lyr.param_specs():
                specs.append((f"layers.{idx}.{name}", tensor, role))
        return specs

    def parameters(self):
        return [t for _, t, _ in self.param_specs()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


# ------------------------------------------------------------- counting


def _alive_outputs(layer):
    return layer.edge_mask.any(axis=1)


def param_count(net):
    """Exact trainable-scalar count, grouped by role per layer.

    Pruned (masked) edges are excluded: per-edge coefficient blocks count
    only alive edges, biases count only outputs with at least one alive
    incoming edge, and individual learnable knot rows count only alive
    outputs.  Returns {"total": int, "layers": [{...}]}.
    """
    report = []
    total = 0
    for idx, lyr in enumerate(net.layers):
        groups = {}
        if isinstance(lyr, TruKANLayer):
            G, k = lyr.knots.count, lyr.order
            alive_e = int(lyr.edge_mask.sum())
            alive_o = int(_alive_outputs(lyr).sum())
            groups["spline_coeffs"] = alive_e * G
            groups["poly_coeffs"] = alive_e * (k + 1)
            if lyr.bias is not None:
                groups["bias"] = alive_o
            if lyr.knots.mode == "learnable":
                groups["knots"] = G if lyr.shared else G * alive_o
        elif isinstance(lyr, KANLayer):
            nb = lyr.n_basis
            alive_e = int(lyr.edge_mask.sum())
            alive_o = int(_alive_outputs(lyr).sum())
            groups["spline_coeffs"] = alive_e * nb
            groups["base_weights"] = alive_e
            if lyr.scales_trainable:
                groups["scales"] = alive_e * 2
            if lyr.bias is not None:
                groups["bias"] = alive_o
        elif isinstance(lyr, SineKANLayer):
            G = lyr.grid
            alive_e = int(lyr.edge_mask.sum())
            alive_o = int(_alive_outputs(lyr).sum())
            alive_i = int(lyr.edge_mask.any(axis=0).sum())
            groups["amplitudes"] = alive_e * G
            groups["freqs"] = G
            groups["phases"] = alive_i * G
            if lyr.bias is not None:
                groups["bias"] = alive_o
        elif isinstance(lyr, DenseLayer):
            alive_e = int(lyr.edge_mask.sum())
            alive_o = int(_alive_outputs(lyr).sum())
            groups["weights"] = alive_e
            if lyr.bias is not None:
                groups["bias"] = alive_o
        else:
            for name, tensor, role in lyr.param_specs():
                groups[name] = tensor.data.size
        subtotal = int(sum(groups.values()))
        total += subtotal
        report.append({"index": idx, "kind": lyr.kind, "groups": groups,
                       "count": subtotal})
    return {"total": int(total), "layers": report}


# ------------------------------------------------------- classifier builder


def _norm_kind(kind):
    kind = kind.lower().replace("_", "-")
    if kind not in HEAD_KINDS:
        raise ValueError(f"unknown classifier kind {kind!r}; expected one of {HEAD_KINDS}")
    return kind


def _make_pair(kind, in_features, hidden, classes, hp, rng):
    """The two basic layers (plus MLP activation/dropout) for a head kind."""
    grid = hp.get("grid", 8)
    order = hp.get("order", 3)
    lo, hi = hp.get("range", (-1.0, 1.0))
    knot_mode = hp.get("knot_mode", "fixed")
    family = kind.split("-")[0]
    normalized = kind.endswith("-n") or kind in ("trukan-sn", "trukan-in")
    mid = [LayerNormLayer(hidden)] if normalized else []
    if family == "mlp":
        dropout = hp.get("dropout", 0.1)
        layers = [DenseLayer(in_features, hidden, rng=rng),
                  DropoutLayer(dropout), *mid, ReLULayer(),
                  DenseLayer(hidden, classes, rng=rng)]
    elif family == "kan":
        scales = hp.get("kan_scales_trainable", True)
        layers = [KANLayer(in_features, hidden, grid=grid, order=order, lo=lo, hi=hi,
                           scales_trainable=scales, rng=rng),
                  *mid,
                  KANLayer(hidden, classes, grid=grid, order=order, lo=lo, hi=hi,
                           scales_trainable=scales, rng=rng)]
    elif family == "sinekan":
        layers = [SineKANLayer(in_features, hidden, grid=grid, rng=rng),
                  *mid,
                  SineKANLayer(hidden, classes, grid=grid, rng=rng)]
    elif family == "trukan":
        shared = kind in ("trukan-s", "trukan-sn")
        layers = [TruKANLayer(in_features, hidden, grid=grid, order=order, lo=lo,
                              hi=hi, knot_mode=knot_mode, shared_knots=shared,
                              rng=rng),
                  *mid,
                  TruKANLayer(hidden, classes, grid=grid, order=order, lo=lo, hi=hi,
                              knot_mode=knot_mode, shared_knots=shared, rng=rng)]
    else:  # pragma: no cover - guarded by _norm_kind
        raise AssertionError(kind)
    return layers


def _head_count(kind, in_features, hidden, classes, hp):
    probe_rng = np.random.default_rng(0)
    net = Network([BatchNormLayer(in_features),
                   *_make_pair(kind, in_features, hidden, classes, hp, probe_rng)],
                  head_kind=kind)
    return param_count(net)["total"]


def solve_hidden_width(kind, in_features, classes, target, hp=None):
    """Hidden width giving a parameter total closest to `target`.

    Counts are affine in the hidden width, so two probe builds pin the
    line exactly.
    """
    hp = hp or {}
    c1 = _head_count(kind, in_features, 1, classes, hp)
    c2 = _head_count(kind, in_features, 2, classes, hp)
    slope = c2 - c1
    intercept = c1 - slope
    return max(1, round((target - intercept) / slope))


def build_classifier(kind, in_features, hidden, classes, hparams=None, seed=0):
    """Classifier head: BatchNorm front stage + two family layers.

    `hidden` is the reference MLP width; every other kind solves its own
    width so trainable totals match the MLP head (the -N kinds insert a
    LayerNorm between the two layers).
    """
    kind = _norm_kind(kind)
    hp = dict(hparams or {})
    rng = np.random.default_rng(seed)
    target = _head_count("mlp", in_features, hidden, classes, hp)
    width = hidden if kind.startswith("mlp") else solve_hidden_width(
        kind, in_features, classes, target, hp)
    layers = [BatchNormLayer(in_features),
              *_make_pair(kind, in_features, width, classes, hp, rng)]
    return Network(layers, head_kind=kind)

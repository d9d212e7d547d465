"""Magnitude pruning, activation-curve export, FLOP estimation, and the
efficiency benchmark harness.

FLOP counting sheet (forward pass, per batch element unless noted):
  * one float add/sub/mul/div/compare = 1; transcendental (exp, sin) = 4
  * dense mixing: 2*in*out (multiply-add pairs; bias adds excluded)
  * truncated-power basis: G*(k+2) per input [sub, clamp, k multiplies],
    repeated per output when knots are individual; monomials: (k-1) per input
  * truncated+polynomial mixing: 2*(G + k + 1)*in*out
  * dense Cox-de Boor recursion over m = G+2k extended knots: 2*(m-1)
    level-0 compares plus 6 ops per produced entry on levels 1..k,
    i.e. 2(m-1) + 6*sum_{r=1..k}(m-1-r) per input
  * SiLU: 7 per input; KAN mixing: 2*(n_basis + 1)*in*out; the trainable
    scale fold costs 2*in*out*n_basis once per step (amortized over batch)
  * sine features: (2 + 4)*in*grid per element; mixing 2*grid*in*out
  * normalization layers: 8 per element; ReLU: 1; dropout masking excluded
Counts are deterministic and monotone in batch size.
"""

from dataclasses import dataclass, field
import csv
import json
import time
import tracemalloc

import numpy as np

from . import kernels
from .layers import (BatchNormLayer, DenseLayer, DropoutLayer, KANLayer,
                     LayerNormLayer, Network, ReLULayer, SineKANLayer,
                     TruKANLayer, param_count)
from .optim import AdamW, build_param_groups
from .serialize import network_from_dict, network_to_dict
from .tensor import Tensor, backward, no_grad
from .train import mse_loss

TRANSCENDENTAL_FLOPS = 4


# ------------------------------------------------------------------ pruning


@dataclass
class PruneReport:
    threshold: float
    removed: list                  # (layer_index, out, in, score) per edge
    kept_scores: dict              # layer_index -> scores of surviving edges
    params_before: int
    params_after: int
    passes: int

    def to_dict(self):
        return {"threshold": self.threshold,
                "removed": [list(r) for r in self.removed],
                "params_before": self.params_before,
                "params_after": self.params_after,
                "passes": self.passes}


def _prunable_indices(net):
    return [i for i, lyr in enumerate(net.layers)
            if isinstance(lyr, (TruKANLayer, KANLayer, SineKANLayer, DenseLayer))]


def _layer_inputs(net, features):
    """Input arrays seen by each layer during one eval forward."""
    xs = {}
    x = Tensor(features)
    with no_grad():
        for i, lyr in enumerate(net.layers):
            xs[i] = x.data
            x = lyr.forward(x)
    return xs


def prune(net, threshold, inputs):
    """Magnitude pruning at `threshold` on a copy of the network.

    An edge's score is the mean absolute value of its edge function over
    `inputs` (rows of training data).  Pruning iterates to a fixpoint:
    removing edges silences neurons, whose dangling edges are removed in
    turn and scores recomputed, so pruning the result again is a no-op.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    pruned = network_from_dict(network_to_dict(net))
    pruned.eval()
    before = param_count(pruned)["total"]
    removed = []
    passes = 0
    idxs = _prunable_indices(pruned)
    while True:
        passes += 1
        changed = False
        layer_in = _layer_inputs(pruned, inputs)
        scores = {}
        for i in idxs:
            lyr = pruned.layers[i]
            s = lyr.edge_scores(layer_in[i])
            scores[i] = s
            off = (s < threshold) & lyr.edge_mask
            if off.any():
                for o, j in zip(*np.nonzero(off)):
                    removed.append((i, int(o), int(j), float(s[o, j])))
                lyr.zero_edges(off)
                changed = True
        # dead-neuron cascade between consecutive prunable layers
        for a, b in zip(idxs, idxs[1:]):
            la, lb = pruned.layers[a], pruned.layers[b]
            dead_out = ~la.edge_mask.any(axis=1)          # no alive inputs
            unused_out = ~lb.edge_mask.any(axis=0)        # nothing consumes it
            kill = dead_out | unused_out
            if kill.any():
                off_a = la.edge_mask & kill[:, None]
                off_b = lb.edge_mask & kill[None, :]
                if off_a.any():
                    for o, j in zip(*np.nonzero(off_a)):
                        removed.append((a, int(o), int(j), float(scores[a][o, j])))
                    la.zero_edges(off_a)
                    changed = True
                if off_b.any():
                    for o, j in zip(*np.nonzero(off_b)):
                        removed.append((b, int(o), int(j), float(scores[b][o, j])))
                    lb.zero_edges(off_b)
                    changed = True
        if not changed:
            break
    kept = {i: scores[i][pruned.layers[i].edge_mask].tolist() for i in idxs}
    report = PruneReport(threshold=float(threshold), removed=removed,
                         kept_scores=kept, params_before=before,
                         params_after=param_count(pruned)["total"], passes=passes)
    return pruned, report


# ------------------------------------------------------------------- curves


@dataclass
class ActivationCurve:
    layer_index: int
    in_index: int
    out_index: int
    xs: np.ndarray
    components: dict               # name -> ys
    composite: np.ndarray = field(init=False)

    def __post_init__(self):
        self.composite = np.sum(list(self.components.values()), axis=0)


def export_curves(net, edge_filter=None, n_samples=200, lo=-1.0, hi=1.0,
                  out_dir=None):
    """Sample every matching edge function, decomposed into components.

    `edge_filter` is a dict with optional keys layer/in/out.  With
    `out_dir`, each curve is written as CSV plus an SVG plot.
    """
    flt = edge_filter or {}
    xs = np.linspace(lo, hi, n_samples)
    curves = []
    for idx, lyr in enumerate(net.layers):
        if not hasattr(lyr, "edge_components"):
            continue
        if flt.get("layer") is not None and idx != flt["layer"]:
            continue
        for o in range(lyr.out_dim):
            if flt.get("out") is not None and o != flt["out"]:
                continue
            for i in range(lyr.in_dim):
                if flt.get("in") is not None and i != flt["in"]:
                    continue
                comp = lyr.edge_components(i, o, xs)
                curves.append(ActivationCurve(idx, i, o, xs, comp))
    if not curves:
        raise ValueError(f"edge filter matched nothing: {flt}")
    if out_dir is not None:
        _write_curve_files(curves, out_dir)
    return curves


def _write_curve_files(curves, out_dir):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for curve in curves:
        stem = f"curve_l{curve.layer_index}_i{curve.in_index}_o{curve.out_index}"
        names = sorted(curve.components)
        with open(out / f"{stem}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "composite", *names])
            for row in zip(curve.xs, curve.composite,
                           *[curve.components[n] for n in names]):
                writer.writerow([repr(float(v)) for v in row])
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.plot(curve.xs, curve.composite, "k-", label="composite")
        for name in names:
            ax.plot(curve.xs, curve.components[name], "--", label=name)
        ax.legend(fontsize=7)
        ax.set_title(stem)
        fig.tight_layout()
        fig.savefig(out / f"{stem}.svg")
        plt.close(fig)


# -------------------------------------------------------------------- FLOPs


def _layer_flops(lyr, batch):
    if isinstance(lyr, DenseLayer):
        return 2 * lyr.in_dim * lyr.out_dim * batch
    if isinstance(lyr, TruKANLayer):
        G, k = lyr.knots.count, lyr.order
        n, out = lyr.in_dim, lyr.out_dim
        basis_rows = 1 if lyr.shared else out
        flops = G * (k + 2) * n * basis_rows * batch
        flops += max(k - 1, 0) * n * batch
        flops += 2 * (G + k + 1) * n * out * batch
        if lyr.knots.mode == "learnable":
            flops += 10 * G * basis_rows  # reparameterized materialization
        return flops
    if isinstance(lyr, KANLayer):
        k, nb = lyr.order, lyr.n_basis
        n, out = lyr.in_dim, lyr.out_dim
        m = len(lyr.ext_knots)
        deboor = 2 * (m - 1) + 6 * sum(m - 1 - r for r in range(1, k + 1))
        flops = deboor * n * batch                         # dense recursion
        flops += 7 * n * batch                             # SiLU base
        flops += 2 * (nb + 1) * n * out * batch            # spline + base mix
        if lyr.scales_trainable:
            flops += 2 * n * out * nb                      # scale fold, per step
        return flops
    if isinstance(lyr, SineKANLayer):
        G = lyr.grid
        n, out = lyr.in_dim, lyr.out_dim
        flops = (2 + TRANSCENDENTAL_FLOPS) * n * G * batch
        flops += 2 * G * n * out * batch
        return flops
    if isinstance(lyr, (LayerNormLayer, BatchNormLayer)):
        return 8 * lyr.dim * batch
    if isinstance(lyr, ReLULayer):
        return 0  # width unknown here; counted as free like dropout
    if isinstance(lyr, DropoutLayer):
        return 0
    if hasattr(lyr, "spline"):  # converted KAN: truncated spline + SiLU base
        inner = _layer_flops(lyr.spline, batch)
        return inner + 7 * lyr.in_dim * batch + 2 * lyr.in_dim * lyr.out_dim * batch
    return 0


def estimate_flops(net, batch):
    """Deterministic forward-pass FLOP estimate per the module counting sheet."""
    per_layer = [{"index": i, "kind": lyr.kind, "flops": int(_layer_flops(lyr, batch))}
                 for i, lyr in enumerate(net.layers)]
    return {"total": int(sum(p["flops"] for p in per_layer)), "layers": per_layer}


# -------------------------------------------------------------------- bench


BENCH_KINDS = ("kan-pbt", "kan-pbf", "sinekan", "trukan-fs", "trukan-fi",
               "trukan-ls", "trukan-li", "dense")


def _bench_layer(kind, in_dim, out_dim, grid, order, seed=0):
    rng = np.random.default_rng(seed)
    if kind == "dense":
        return DenseLayer(in_dim, out_dim, rng=rng)
    if kind == "kan-pbt":
        return KANLayer(in_dim, out_dim, grid=grid, order=order,
                        scales_trainable=True, rng=rng)
    if kind == "kan-pbf":
        return KANLayer(in_dim, out_dim, grid=grid, order=order,
                        scales_trainable=False, rng=rng)
    if kind == "sinekan":
        return SineKANLayer(in_dim, out_dim, grid=grid, rng=rng)
    if kind.startswith("trukan-"):
        flavor = kind.split("-")[1]
        mode = "learnable" if flavor[0] == "l" else "fixed"
        shared = flavor[1] == "s"
        return TruKANLayer(in_dim, out_dim, grid=grid, order=order,
                           knot_mode=mode, shared_knots=shared, rng=rng)
    raise ValueError(f"unknown bench model kind {kind!r}; expected one of {BENCH_KINDS}")


def _parity_width(kind, in_dim, target, grid, order):
    """Output width whose parameter count comes closest to `target`
    (counts are affine in out_dim; round toward not exceeding it)."""
    c1 = param_count(Network([_bench_layer(kind, in_dim, 1, grid, order)]))["total"]
    c2 = param_count(Network([_bench_layer(kind, in_dim, 2, grid, order)]))["total"]
    slope = c2 - c1
    intercept = c1 - slope
    return max(1, int((target - intercept) // slope))


@dataclass
class BenchReport:
    model: str
    params: int
    out_dim: int
    step_time_mean: float
    step_time_median: float
    flops: int
    peak_bytes: int
    trials: int
    measured_steps: int
    warmup_steps: int
    threads: int
    backend: str

    def to_dict(self):
        return self.__dict__.copy()


def _train_step_closure(layer, batch, seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.uniform(-1.0, 1.0, size=(batch, layer.in_dim)))
    y = Tensor(rng.normal(size=(batch, layer.out_dim)))
    net = Network([layer])
    groups = build_param_groups(net, lr=1e-3)
    opt = AdamW(groups)

    def step():
        opt.zero_grad()
        loss = mse_loss(net.forward(x), y)
        backward(loss)
        opt.step()
        return loss

    return step


def bench(models, in_dim=512, out_dim=256, batch=512, grid=8, order=3,
          trials=5, warmup_steps=20, measured_steps=100, match_params=True,
          seed=0, backend=None):
    """Time one-layer train steps per model kind at matched parameter budgets.

    The first model anchors the budget at `out_dim`; other kinds adjust
    their width to match (within the +-10% the harness asserts).  Timing
    runs under a single BLAS thread; peak transient allocation is measured
    on separate instrumented steps so tracemalloc overhead never lands in
    the timings.

    `backend` pins the kernel backend for the whole run.  Cross-model
    comparisons reproducing published orderings should use "python": its
    full-width array passes have the execution profile of the production
    array-programming implementations those orderings were measured on,
    whereas the compiled kernels collapse the basis stage for every model.
    """
    if trials < 5:
        raise ValueError("bench protocol requires trials >= 5")
    if warmup_steps < 1:
        raise ValueError("insufficient warmup: need at least 1 warmup step")
    models = list(models)
    anchor = Network([_bench_layer(models[0], in_dim, out_dim, grid, order)])
    target = param_count(anchor)["total"]
    reports = []
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        import contextlib

        threadpool_limits = lambda limits: contextlib.nullcontext()  # noqa: E731
    with kernels.use_backend(backend or kernels.backend_name()):
        with threadpool_limits(limits=1):
            for kind in models:
                width = out_dim
                if match_params and kind != models[0]:
                    width = _parity_width(kind, in_dim, target, grid, order)
                layer = _bench_layer(kind, in_dim, width, grid, order, seed=seed)
                params = param_count(Network([layer]))["total"]
                if match_params and abs(params - target) / target > 0.10:
                    raise ValueError(
                        f"{kind}: parameter budget {params} not within 10% of {target}")
                times = []
                peaks = []
                for trial in range(trials):
                    step = _train_step_closure(layer, batch, seed + trial)
                    for _ in range(warmup_steps):
                        step()
                    for _ in range(measured_steps):
                        t0 = time.monotonic()
                        step()
                        times.append(time.monotonic() - t0)
                    tracemalloc.start()
                    tracemalloc.reset_peak()
                    step()
                    peaks.append(tracemalloc.get_traced_memory()[1])
                    tracemalloc.stop()
                flops = estimate_flops(Network([layer]), batch)["total"]
                reports.append(BenchReport(
                    model=kind, params=params, out_dim=width,
                    step_time_mean=float(np.mean(times)),
                    step_time_median=float(np.median(times)),
                    flops=flops, peak_bytes=int(np.mean(peaks)), trials=trials,
                    measured_steps=measured_steps, warmup_steps=warmup_steps,
                    threads=1, backend=kernels.backend_name()))
    return reports


def write_bench_reports(reports, csv_path=None, json_path=None):
    rows = [r.to_dict() for r in reports]
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    if json_path:
        with open(json_path, "w") as fh:
            json.dump({"format_version": 1, "kind": "bench", "reports": rows}, fh,
                      indent=2)
    return rows


# ----------------------------------------------------- backend comparison


def compare_backends(in_dim=512, out_dim=256, batch=512, grid=8, order=3,
                     repeats=3, seed=0):
    """Time the hot kernels and a full train step under each kernel backend."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(batch, in_dim))
    knots = np.linspace(-1, 1, grid)[None, :]
    from .basis import extend_knots

    ext = extend_knots(knots[0], order)
    results = {}
    for backend in kernels.available_backends():
        with kernels.use_backend(backend):
            timings = {}
            t0 = time.monotonic()
            for _ in range(repeats):
                kernels.trunc_features_multi(x, knots, order)
            timings["trunc_features"] = (time.monotonic() - t0) / repeats
            t0 = time.monotonic()
            for _ in range(repeats):
                kernels.bspline_basis(x.reshape(-1), ext, order, want_deriv=True)
            timings["bspline_basis"] = (time.monotonic() - t0) / repeats
            for kind in ("trukan-fs", "kan-pbf"):
                layer = _bench_layer(kind, in_dim, out_dim, grid, order, seed=seed)
                step = _train_step_closure(layer, batch, seed)
                step()  # warmup
                t0 = time.monotonic()
                for _ in range(repeats):
                    step()
                timings[f"{kind}_step"] = (time.monotonic() - t0) / repeats
            results[backend] = timings
    return results

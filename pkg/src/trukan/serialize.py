"""Versioned JSON serialization for networks and optimizer state.

Parameter arrays are stored as decimal lists (shortest round-trip repr), so
checkpoints reload bit-identically and hash deterministically.
"""

import hashlib
import json

import numpy as np

from .basis import KnotSet
from .layers import (BatchNormLayer, DenseLayer, DropoutLayer, KANLayer,
                     LayerNormLayer, Network, ReLULayer, SineKANLayer,
                     TruKANLayer)

FORMAT_VERSION = 1


def _build_layer(kind, cfg):
    if kind == "dense":
        return DenseLayer(cfg["in_dim"], cfg["out_dim"], bias=cfg["bias"])
    if kind == "relu":
        return ReLULayer()
    if kind == "dropout":
        return DropoutLayer(cfg["p"])
    if kind == "layer_norm":
        return LayerNormLayer(cfg["dim"], eps=cfg["eps"])
    if kind == "batch_norm":
        return BatchNormLayer(cfg["dim"], eps=cfg["eps"], momentum=cfg["momentum"])
    if kind == "trukan":
        kc = cfg["knots"]
        knots = KnotSet(kc["count"], lo=kc["lo"], hi=kc["hi"], mode=kc["mode"],
                        out_dim=kc["out_dim"])
        return TruKANLayer(cfg["in_dim"], cfg["out_dim"], knots=knots,
                           order=cfg["order"], bias=cfg["bias"],
                           pre_norm=cfg["pre_norm"])
    if kind == "kan":
        return KANLayer(cfg["in_dim"], cfg["out_dim"], grid=cfg["grid"],
                        order=cfg["order"], lo=cfg["lo"], hi=cfg["hi"],
                        scales_trainable=cfg["scales_trainable"], bias=cfg["bias"])
    if kind == "sinekan":
        return SineKANLayer(cfg["in_dim"], cfg["out_dim"], grid=cfg["grid"],
                            bias=cfg["bias"])
    if kind == "kan_truncated":
        from .convert import ConvertedKANLayer

        return ConvertedKANLayer(cfg["in_dim"], cfg["out_dim"], cfg["order"],
                                 cfg["interior_lo"], cfg["interior_hi"],
                                 cfg["interior_count"], bias=cfg["bias"])
    raise ValueError(f"unknown layer kind {kind!r} in checkpoint")


def network_to_dict(net):
    layers = []
    for lyr in net.layers:
        entry = {
            "kind": lyr.kind,
            "config": lyr.config(),
            "params": {name: {"shape": list(t.shape), "data": t.data.ravel().tolist()}
                       for name, t, _ in lyr.param_specs()},
            "state": lyr.extra_state(),
        }
        if hasattr(lyr, "edge_mask"):
            entry["edge_mask"] = lyr.edge_mask.astype(int).tolist()
        layers.append(entry)
    return {"format_version": FORMAT_VERSION, "kind": "network",
            "head_kind": net.head_kind, "layers": layers}


def network_from_dict(payload):
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint format_version {payload.get('format_version')!r}")
    if payload.get("kind") != "network":
        raise ValueError(f"not a network checkpoint: kind={payload.get('kind')!r}")
    layers = []
    for entry in payload["layers"]:
        lyr = _build_layer(entry["kind"], entry["config"])
        have = {name: t for name, t, _ in lyr.param_specs()}
        for name, blob in entry["params"].items():
            if name not in have:
                raise ValueError(f"checkpoint parameter {name!r} unknown for {entry['kind']}")
            arr = np.asarray(blob["data"], dtype=np.float64).reshape(blob["shape"])
            if arr.shape != have[name].shape:
                raise ValueError(
                    f"shape mismatch for {name}: {arr.shape} vs {have[name].shape}")
            have[name].data[...] = arr
        lyr.load_extra_state(entry.get("state", {}))
        if "edge_mask" in entry and hasattr(lyr, "edge_mask"):
            lyr.edge_mask = np.asarray(entry["edge_mask"], dtype=bool)
        layers.append(lyr)
    return Network(layers, head_kind=payload.get("head_kind"))


def save_network(net, path):
    with open(path, "w") as fh:
        json.dump(network_to_dict(net), fh)


def load_network(path):
    with open(path) as fh:
        return network_from_dict(json.load(fh))


def optimizer_to_dict(opt):
    return {"format_version": FORMAT_VERSION, "kind": "optimizer",
            "state": opt.state_dict()}


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_json(payload):
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()).hexdigest()

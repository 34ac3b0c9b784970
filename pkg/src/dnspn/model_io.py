"""Model persistence: one JSON document per model.

The document holds the architecture, every layer's shadow weights and bias,
all forest-head parameters, the current pruning masks (so effective weights
reconstruct exactly), the task description, and the feature scaler fitted
at training time. Floats are serialized through repr, so a save/load round
trip is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import Scaler, Task
from .errors import DataError
from .forest import ForestHead
from .network import DenseLayer
from .pruning import PrunedLayer, layer_stats
from .training import Model

FORMAT = "dnspn-model-v1"


def _arr(a: np.ndarray) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def save_model(model: Model, path) -> None:
    doc = {
        "format": FORMAT,
        "kind": model.kind,
        "input_dim": model.input_dim,
        "task": {
            "kind": model.task.kind,
            "n_classes": model.task.n_classes,
            "labels": model.task.labels,
        },
        "layers": [
            {
                "weights": _arr(layer.weights),
                "bias": _arr(layer.bias),
                "activation": layer.activation,
                "mask": _arr(pl.mask),
            }
            for layer, pl in zip(model.layers, model.layer_prunes)
        ],
        "heads": [
            {
                "trees": head.trees,
                "depth": head.depth,
                "embed_dim": head.embed_dim,
                "kind": head.kind,
                "proj_w": _arr(head.proj_w),
                "proj_b": _arr(head.proj_b),
                "routing_w": _arr(head.routing_w),
                "routing_b": _arr(head.routing_b),
                "leaf": _arr(head.leaf),
                "mask": _arr(pp.mask),
            }
            for head, pp in zip(model.heads, model.proj_prunes)
        ],
        "head_layers": model.head_layers,
        "scaler": (
            {"mean": _arr(model.scaler.mean), "std": _arr(model.scaler.std)}
            if model.scaler is not None else None
        ),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path) -> Model:
    path = Path(path)
    if not path.exists():
        raise DataError(f"model file not found: {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"model file is not valid JSON: {path}") from exc
    try:
        if doc["format"] != FORMAT:
            raise DataError(f"unsupported model format {doc['format']!r}")
        task = Task(kind=doc["task"]["kind"],
                    n_classes=doc["task"]["n_classes"],
                    labels=doc["task"]["labels"])
        layers, layer_prunes = [], []
        for rec in doc["layers"]:
            w = np.asarray(rec["weights"], dtype=np.float64)
            layers.append(DenseLayer(w, np.asarray(rec["bias"]),
                                     rec["activation"]))
            layer_prunes.append(PrunedLayer(
                shadow=w, mask=np.asarray(rec["mask"], dtype=np.float64),
                stats=layer_stats(w)))
        heads, proj_prunes = [], []
        for rec in doc["heads"]:
            proj_w = np.asarray(rec["proj_w"], dtype=np.float64)
            routing_w = np.asarray(rec["routing_w"], dtype=np.float64)
            head = ForestHead(
                trees=rec["trees"], depth=rec["depth"],
                embed_dim=rec["embed_dim"], kind=rec["kind"],
                proj_w=proj_w,
                proj_b=np.asarray(rec["proj_b"], dtype=np.float64),
                routing_w=routing_w.reshape(-1, rec["embed_dim"]),
                routing_b=np.asarray(rec["routing_b"], dtype=np.float64),
                leaf=np.asarray(rec["leaf"], dtype=np.float64))
            heads.append(head)
            proj_prunes.append(PrunedLayer(
                shadow=proj_w, mask=np.asarray(rec["mask"], dtype=np.float64),
                stats=layer_stats(proj_w)))
        scaler = None
        if doc.get("scaler") is not None:
            scaler = Scaler(mean=np.asarray(doc["scaler"]["mean"]),
                            std=np.asarray(doc["scaler"]["std"]))
        return Model(layers=layers, layer_prunes=layer_prunes, heads=heads,
                     head_layers=list(doc["head_layers"]),
                     proj_prunes=proj_prunes, task=task, kind=doc["kind"],
                     input_dim=doc["input_dim"], scaler=scaler)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"model file is corrupt or incomplete: {path}") from exc

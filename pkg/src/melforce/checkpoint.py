"""JSON checkpoints for trained models.

A checkpoint stores the model/feature kinds, layer shapes, flattened
row-major float64 parameter arrays, normalization statistics, the training
seed and epoch count.  Floats are serialized with full repr precision, so a
save/load round trip is bit exact.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .training import TrainedModel, build_model

FORMAT_NAME = "melforce-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _norm_to_json(norm: dict) -> dict:
    out = {"mode": norm["mode"]}
    if norm["mode"] == "scale":
        out["scale"] = norm["scale"]
    else:
        out["mean"] = np.asarray(norm["mean"]).tolist()
        out["std"] = np.asarray(norm["std"]).tolist()
    return out


def _norm_from_json(obj: dict) -> dict:
    if obj["mode"] == "scale":
        return {"mode": "scale", "scale": float(obj["scale"])}
    return {
        "mode": "per_channel",
        "mean": np.asarray(obj["mean"], dtype=float),
        "std": np.asarray(obj["std"], dtype=float),
    }


def save(trained: TrainedModel, path: str):
    params = [
        {"name": f"{i}.{p.name}", "shape": list(p.value.shape), "data": p.value.reshape(-1).tolist()}
        for i, layer in enumerate(trained.model.layers)
        for p in layer.params()
    ]
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "model_kind": trained.model_kind,
        "feature": trained.feature,
        "input_shape": list(trained.input_shape),
        "norm": _norm_to_json(trained.norm),
        "seed": trained.seed,
        "epochs": trained.epochs,
        "final_train_mse": (
            float(trained.loss_history[-1]) if trained.loss_history is not None else None
        ),
        "params": params,
    }
    tmp_fd, tmp_path = tempfile.mkstemp(
        dir=os.path.dirname(os.path.abspath(path)) or ".", suffix=".tmp"
    )
    try:
        with os.fdopen(tmp_fd, "w") as fh:
            json.dump(doc, fh)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def load(path: str) -> TrainedModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path} is not a {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")

    input_shape = tuple(doc["input_shape"])
    model = build_model(doc["model_kind"], input_shape)
    stored = {p["name"]: p for p in doc["params"]}
    for i, layer in enumerate(model.layers):
        for p in layer.params():
            key = f"{i}.{p.name}"
            if key not in stored:
                raise CheckpointError(f"checkpoint missing parameter {key}")
            entry = stored[key]
            value = np.asarray(entry["data"], dtype=float)
            shape = tuple(entry["shape"])
            if shape != p.value.shape:
                raise CheckpointError(
                    f"parameter {key} has shape {shape}, model expects {p.value.shape}"
                )
            p.value = value.reshape(shape)
    return TrainedModel(
        model_kind=doc["model_kind"],
        feature=doc["feature"],
        input_shape=input_shape,
        model=model,
        norm=_norm_from_json(doc["norm"]),
        seed=int(doc["seed"]),
        epochs=int(doc["epochs"]),
        loss_history=None,
    )

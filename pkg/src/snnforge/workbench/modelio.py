"""JSON model files (format_version 1) for ANN and SNN models.

Floats are written with Python's shortest round-trip repr, so a load after
a save reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json
from math import prod
from pathlib import Path

import numpy as np

from ..ann import AnnModel
from ..errors import FormatError, SnnforgeError
from ..layers import AvgPool, Conv2d, Dense, Dropout
from ..snn import SnnModel

FORMAT_VERSION = 1


def _activation_record(layer) -> dict:
    rec = {"kind": layer.activation}
    if layer.y_th is not None:
        rec["y_th"] = float(layer.y_th)
    return rec


def _layer_record(layer, kind: str) -> dict:
    if isinstance(layer, (Dense, Conv2d)):
        rec = {
            "type": layer.kind,
            "shape": list(layer.weight.shape),
            "weight": layer.weight.ravel().tolist(),
            "bias": layer.bias.tolist(),
            "activation": _activation_record(layer),
        }
        if isinstance(layer, Conv2d):
            rec["stride"] = layer.stride
            rec["padding"] = layer.padding
        if kind == "snn":
            rec["v_th"] = float(layer.v_th)
        return rec
    if isinstance(layer, AvgPool):
        return {"type": "avgpool", "k": layer.k, "stride": layer.stride}
    return {"type": "dropout", "p": float(layer.p)}


def model_to_dict(model, meta: dict | None = None) -> dict:
    kind = "snn" if isinstance(model, SnnModel) else "ann"
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "input_shape": list(model.input_shape),
        "layers": [_layer_record(layer, kind) for layer in model.layers],
        "meta": dict(meta or {}),
    }
    if kind == "snn":
        doc["readout"] = model.readout
    return doc


def _array(rec: dict, key: str, shape, where: str) -> np.ndarray:
    values = rec.get(key)
    if not isinstance(values, list):
        raise FormatError(f"{where}: missing array {key!r}")
    if len(values) != prod(shape):
        raise FormatError(f"{where}: {key} has {len(values)} values, shape {list(shape)} needs {prod(shape)}")
    return np.asarray(values, dtype=np.float64).reshape(shape)


def _layer_from_record(rec: dict, kind: str, idx: int):
    where = f"layer {idx}"
    if not isinstance(rec, dict):
        raise FormatError(f"{where}: expected an object")
    tag = rec.get("type")
    if tag in ("dense", "conv2d"):
        shape = rec.get("shape")
        want = 2 if tag == "dense" else 4
        if not isinstance(shape, list) or len(shape) != want or any(
                not isinstance(s, int) or s < 1 for s in shape):
            raise FormatError(f"{where}: {tag} shape must be {want} positive ints, got {shape}")
        weight = _array(rec, "weight", shape, where)
        bias = _array(rec, "bias", (shape[0],), where)
        act = rec.get("activation", {"kind": "none"})
        if not isinstance(act, dict) or "kind" not in act:
            raise FormatError(f"{where}: malformed activation record {act!r}")
        v_th = None
        if kind == "snn":
            if "v_th" not in rec:
                raise FormatError(f"{where}: snn weighted layer is missing v_th")
            v_th = float(rec["v_th"])
        common = dict(activation=act["kind"], y_th=act.get("y_th"), v_th=v_th)
        if tag == "dense":
            return Dense(weight, bias, **common)
        return Conv2d(weight, bias, stride=int(rec.get("stride", 1)), padding=int(rec.get("padding", 0)),
                      **common)
    if tag == "avgpool":
        return AvgPool(int(rec["k"]), int(rec["stride"]))
    if tag == "dropout":
        return Dropout(float(rec["p"]))
    raise FormatError(f"{where}: unknown layer type {tag!r}")


def model_from_dict(doc: dict):
    if not isinstance(doc, dict):
        raise FormatError("model file must hold a JSON object")
    version = doc.get("format_version")
    if type(version) is not int or version != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {version!r}, expected {FORMAT_VERSION}")
    kind = doc.get("kind")
    if kind not in ("ann", "snn"):
        raise FormatError(f"kind must be 'ann' or 'snn', got {kind!r}")
    layers_doc = doc.get("layers")
    if not isinstance(layers_doc, list):
        raise FormatError("missing layer list")
    try:
        layers = [_layer_from_record(rec, kind, i) for i, rec in enumerate(layers_doc)]
        if kind == "snn":
            return SnnModel(layers, doc["input_shape"], doc.get("readout", "accumulate_potential"))
        return AnnModel(layers, doc["input_shape"])
    except FormatError:
        raise
    except (SnnforgeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid {kind} model: {exc}") from exc


def dumps_model(model, meta: dict | None = None) -> str:
    return json.dumps(model_to_dict(model, meta), sort_keys=True) + "\n"


def loads_model(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(doc)


def save_model(model, path, meta: dict | None = None) -> None:
    Path(path).write_text(dumps_model(model, meta))


def load_model(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc})") from exc
    return loads_model(text)


def load_meta(path) -> dict:
    return json.loads(Path(path).read_text()).get("meta", {})

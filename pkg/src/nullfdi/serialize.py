"""JSON file formats for models, plants and reports."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .lti import StateSpaceModel
from .plant import GROUPS, PartitionedPlant


def model_to_dict(model: StateSpaceModel, partitions: dict | None = None) -> dict:
    out = {"a": model.a.tolist(), "b": model.b.tolist(), "c": model.c.tolist(),
           "d": model.d.tolist(), "ts": model.ts}
    if partitions is not None:
        out["partitions"] = dict(partitions)
    return out


def _matrix(doc: dict, key: str, rows: int | None, cols: int | None) -> np.ndarray:
    if key not in doc:
        raise ValueError(f"state-space document lacks {key!r}")
    arr = np.asarray(doc[key], dtype=float)
    if arr.size == 0:
        return np.zeros((rows or 0, cols or 0))
    return np.atleast_2d(arr)


def model_from_dict(doc: dict) -> StateSpaceModel:
    a = _matrix(doc, "a", 0, 0)
    n = a.shape[0]
    d = np.atleast_2d(np.asarray(doc.get("d", []), dtype=float))
    b = _matrix(doc, "b", n, d.shape[1] if d.size else 0)
    c = _matrix(doc, "c", d.shape[0] if d.size else 0, n)
    if not d.size:
        d = np.zeros((c.shape[0], b.shape[1]))
    if n == 0:
        b = np.zeros((0, d.shape[1]))
        c = np.zeros((d.shape[0], 0))
    ts = doc.get("ts")
    return StateSpaceModel(a, b, c, d, None if ts is None else float(ts))


def plant_from_dict(doc: dict) -> PartitionedPlant:
    model = model_from_dict(doc)
    parts = doc.get("partitions")
    if parts is None:
        parts = {"u": model.n_inputs}
    unknown = set(parts) - set(GROUPS)
    if unknown:
        raise ValueError(f"unknown partition groups {sorted(unknown)}")
    return PartitionedPlant(model, *(int(parts.get(g, 0)) for g in GROUPS))


def plant_to_dict(plant: PartitionedPlant) -> dict:
    return model_to_dict(plant.model, plant.partitions())


def _round(obj):
    # Fixed 17-significant-digit formatting makes reports byte-reproducible.
    if isinstance(obj, float):
        if not np.isfinite(obj):
            return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
        return float(f"{obj:.17g}")
    if isinstance(obj, (np.floating,)):
        return _round(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_round(obj), indent=2, sort_keys=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def load_model(path) -> StateSpaceModel:
    return model_from_dict(read_json(path))


def load_plant(path) -> PartitionedPlant:
    return plant_from_dict(read_json(path))

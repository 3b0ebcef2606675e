"""JSON model files.

Schema::

    {"M": 2,
     "pools": [{"alpha": [...], "T": [[...]], "t": [...]}, ...],   # shared pool
     # or [[{...}, ...], [{...}, ...]]                               # one pool per coordinate
     "weights": [{"index": [1, 2], "p": 0.5}, ...],                 # 1-based indices
     "labels": ["a", "b"]}                                          # optional

Floats are written with ``repr`` (shortest round-tripping form), so
``read(write(m))`` reproduces every double exactly.
"""
from __future__ import annotations

import json
import os
from typing import Any

import numpy as np

from . import mmeam as mm
from .errors import MemixError, ModelFileError
from .medist import MEAffineMixture, METriple
from .mmeam import MMEamModel

__all__ = [
    "model_to_dict",
    "model_from_dict",
    "triple_to_dict",
    "triple_from_dict",
    "read_model",
    "write_model",
    "read_marginal",
    "dumps",
]

_MODEL_KEYS = {"M", "pools", "weights", "labels"}
_TRIPLE_KEYS = {"alpha", "T", "t"}
_WEIGHT_KEYS = {"index", "p"}


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def triple_to_dict(f: METriple) -> dict:
    return {"alpha": _floats(f.alpha), "T": [_floats(row) for row in f.T], "t": _floats(f.t)}


def _check_keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        raise ModelFileError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise ModelFileError(f"{where}: unknown key(s) {sorted(extra)}")
    missing = required - set(obj)
    if missing:
        raise ModelFileError(f"{where}: missing key(s) {sorted(missing)}")


def triple_from_dict(obj: Any, where="triple", check="full") -> METriple:
    _check_keys(obj, _TRIPLE_KEYS, _TRIPLE_KEYS, where)
    try:
        return METriple(obj["alpha"], obj["T"], obj["t"], check=check)
    except MemixError as exc:
        raise ModelFileError(f"{where}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"{where}: malformed arrays ({exc})") from exc


def model_to_dict(m: MMEamModel) -> dict:
    if m.shared:
        pools = [triple_to_dict(f) for f in m.pools[0]]
    else:
        pools = [[triple_to_dict(f) for f in pl] for pl in m.pools]
    weights = [{"index": [int(i) + 1 for i in row], "p": float(p)} for row, p in zip(m.index, m.p)]
    out = {"M": m.M, "pools": pools, "weights": weights}
    if m.labels != tuple(range(m.M)):
        out["labels"] = list(m.labels)
    return out


def model_from_dict(obj: Any, check="full") -> MMEamModel:
    _check_keys(obj, _MODEL_KEYS, {"M", "pools", "weights"}, "model")
    M = obj["M"]
    if not isinstance(M, int) or isinstance(M, bool) or M < 1:
        raise ModelFileError("model.M: expected a positive integer")
    pools = obj["pools"]
    if not isinstance(pools, list) or not pools:
        raise ModelFileError("model.pools: expected a non-empty list")
    if all(isinstance(p, dict) for p in pools):
        shared = [triple_from_dict(f, f"pools[{i}]") for i, f in enumerate(pools)]
        built = shared
    elif all(isinstance(p, list) for p in pools):
        if len(pools) != M:
            raise ModelFileError(f"model.pools: {len(pools)} pools for M={M}")
        built = [[triple_from_dict(f, f"pools[{j}][{i}]") for i, f in enumerate(pl)] for j, pl in enumerate(pools)]
    else:
        raise ModelFileError("model.pools: mix of triples and lists")
    ws = obj["weights"]
    if not isinstance(ws, list) or not ws:
        raise ModelFileError("model.weights: expected a non-empty list")
    index, p = [], []
    for n, w in enumerate(ws):
        _check_keys(w, _WEIGHT_KEYS, _WEIGHT_KEYS, f"weights[{n}]")
        idx = w["index"]
        if not isinstance(idx, list) or len(idx) != M or not all(isinstance(i, int) and not isinstance(i, bool) for i in idx):
            raise ModelFileError(f"weights[{n}].index: expected {M} integers")
        if min(idx) < 1:
            raise ModelFileError(f"weights[{n}].index: indices are 1-based")
        if not isinstance(w["p"], (int, float)) or isinstance(w["p"], bool):
            raise ModelFileError(f"weights[{n}].p: expected a number")
        index.append([i - 1 for i in idx])
        p.append(float(w["p"]))
    labels = obj.get("labels")
    if labels is not None and (not isinstance(labels, list) or len(labels) != M):
        raise ModelFileError(f"model.labels: expected a list of {M} names")
    try:
        return MMEamModel(built, np.array(index, dtype=np.int64).reshape(len(index), M), p, labels=labels, check=check)
    except MemixError as exc:
        raise ModelFileError(f"model: {exc}") from exc


def _load_json(source):
    try:
        if isinstance(source, (str, os.PathLike)):
            with open(source) as fh:
                return json.load(fh)
        return json.load(source)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ModelFileError(f"cannot read model file: {exc}") from exc


def read_model(source, check="full") -> MMEamModel:
    return model_from_dict(_load_json(source), check=check)


def dumps(obj) -> str:
    # json writes floats with repr, i.e. the shortest string that round-trips
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_model(m: MMEamModel, dest) -> None:
    text = dumps(model_to_dict(m)) + "\n"
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w") as fh:
            fh.write(text)
    else:
        dest.write(text)


def read_marginal(source) -> METriple | MEAffineMixture:
    """A univariate law: either a bare triple object or a model file with ``M = 1``."""
    obj = _load_json(source)
    if isinstance(obj, dict) and set(obj) <= _TRIPLE_KEYS and obj:
        return triple_from_dict(obj)
    m = model_from_dict(obj)
    if m.M != 1:
        raise ModelFileError(f"marginal file describes M={m.M} coordinates, expected 1")
    return mm.marginal(m, 0)

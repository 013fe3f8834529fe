"""JSON serialization of energy coefficients and models.

Numeric arrays are stored as base64 strings of little-endian float64 (or
int64 for sparse indices).  Coefficient payloads larger than
``SIDECAR_BYTES`` go to a raw binary file next to the JSON document, which
references it by name, offset and length.
"""
from __future__ import annotations

import base64
import json
import os
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import __version__
from .energy import EnergyPoly, PolyDynamics
from .models import AssembledModel, MassScaledTensor

__all__ = ["ORDERING", "SIDECAR_BYTES", "save_coeffs", "load_coeffs", "save_model", "load_model"]

ORDERING = "kron-first-factor-slowest"
SIDECAR_BYTES = 1 << 28
COEFF_FORMAT = "kronenergy-coeffs"
MODEL_FORMAT = "kronenergy-model"


def _enc(a, dtype="<f8"):
    return base64.b64encode(np.ascontiguousarray(a, dtype=dtype).tobytes()).decode("ascii")


def _dec(s, dtype="<f8"):
    return np.frombuffer(base64.b64decode(s), dtype=dtype).astype(dtype[1:] if dtype[0] == "<" else dtype)


def _array(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": _enc(a)}


def _unarray(d):
    return _dec(d["data"]).reshape(d["shape"])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def save_coeffs(path, E, sidecar_bytes=None):
    """Write an :class:`EnergyPoly` to ``path``; returns the paths written."""
    path = Path(path)
    limit = SIDECAR_BYTES if sidecar_bytes is None else sidecar_bytes
    total = sum(v.size * 8 for v in E.coeffs.values())
    side = path.with_name(path.name + ".bin") if total > limit else None
    doc = {
        "format": COEFF_FORMAT,
        "version": __version__,
        "kind": E.kind,
        "n": E.n,
        "d": E.degree,
        "eta": E.eta,
        "ordering": ORDERING,
        "info": _jsonable(E.info),
        "coeffs": {},
    }
    written = [path]
    if side is not None:
        doc["sidecar"] = side.name
        offset = 0
        with open(side, "wb") as fh:
            for k, v in E.coeffs.items():
                np.ascontiguousarray(v, dtype="<f8").tofile(fh)
                doc["coeffs"][str(k)] = {"offset": offset, "length": v.size}
                offset += v.size * 8
        written.append(side)
    else:
        for k, v in E.coeffs.items():
            doc["coeffs"][str(k)] = {"length": v.size, "data": _enc(v)}
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return written


def load_coeffs(path):
    """Read a coefficient file written by :func:`save_coeffs`."""
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != COEFF_FORMAT:
        raise ValueError(f"{path} is not a coefficient file")
    if doc.get("ordering") != ORDERING:
        raise ValueError(f"unsupported coefficient ordering {doc.get('ordering')!r}")
    n = int(doc["n"])
    coeffs = {}
    for key, entry in doc["coeffs"].items():
        k = int(key)
        if "data" in entry:
            v = _dec(entry["data"])
        else:
            v = np.fromfile(path.with_name(doc["sidecar"]), dtype="<f8",
                            count=entry["length"], offset=entry["offset"]).astype(float)
        if v.size != entry["length"] or v.size != n**k:
            raise ValueError(f"degree-{k} payload has length {v.size}, expected {n**k}")
        coeffs[k] = v
    return EnergyPoly(doc["kind"], float(doc["eta"]), n, coeffs, info=doc.get("info", {}))


def _coo(M):
    M = sp.coo_array(M)
    return {"shape": list(M.shape), "row": _enc(M.row, "<i8"), "col": _enc(M.col, "<i8"), "val": _enc(M.data)}


def _uncoo(d):
    return sp.coo_array((_dec(d["val"]), (_dec(d["row"], "<i8"), _dec(d["col"], "<i8"))),
                        shape=tuple(d["shape"])).tocsr()


def _drift_entry(F):
    if isinstance(F, MassScaledTensor):
        return {"type": "mass_scaled", "diag": _array(F.diag), "offdiag": _array(F.offdiag),
                "lumped": F.lumped, "G": _coo(F.G)}
    if sp.issparse(F):
        return {"type": "sparse_coo", **_coo(F)}
    return {"type": "dense", **_array(F)}


def _undrift(d):
    kind = d["type"]
    if kind == "mass_scaled":
        return MassScaledTensor(_unarray(d["diag"]), _unarray(d["offdiag"]), _uncoo(d["G"]), lumped=d["lumped"])
    if kind == "sparse_coo":
        return _uncoo(d)
    if kind == "dense":
        return _unarray(d)
    raise ValueError(f"unknown drift storage {kind!r}")


def save_model(path, model, x0=None, meta=None):
    """Write an :class:`AssembledModel` or a :class:`PolyDynamics` (plus optional ``x0``)."""
    if isinstance(model, AssembledModel):
        sys, x0 = model.sys, model.x0 if x0 is None else x0
        meta = {"model": "heat_fem", "h": model.h, **vars(model.config), **(meta or {})}
    else:
        sys = model
    doc = {
        "format": MODEL_FORMAT,
        "version": __version__,
        "n": sys.n,
        "meta": _jsonable(meta or {}),
        "A": _array(sys.A),
        "B": _array(sys.B),
        "C": _array(sys.C),
        "drift": {str(p): _drift_entry(F) for p, F in sys.drift.items()},
        "x0": None if x0 is None else _array(np.ravel(x0)),
    }
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_model(path):
    """Returns ``(sys, x0, meta)``; ``x0`` is None when the file has none."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path} is not a model file")
    drift = {int(p): _undrift(d) for p, d in doc["drift"].items()}
    sys = PolyDynamics(A=_unarray(doc["A"]), B=_unarray(doc["B"]), C=_unarray(doc["C"]), drift=drift)
    x0 = None if doc["x0"] is None else _unarray(doc["x0"])
    return sys, x0, doc.get("meta", {})

"""Volume file I/O: multi-page 16-bit TIFF with a JSON sidecar, raw fallback.

Scalar volumes are stored as 16-bit fixed point over their nominal value
range; label volumes as plain uint16. The sidecar (``<file>.json``) carries
dims, spacing, the value range used for scaling, the volume kind, and any
JSON-safe metadata, so a load reconstructs the container without guessing.
Writes avoid timestamps, making repeated runs byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import tifffile

from .volume import LabelVolume, VoxelVolume, dims_from_shape, shape_from_dims

__all__ = ["save_volume", "load_volume", "sidecar_path"]

_QMAX = 65535


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def _json_safe(meta: dict) -> dict:
    out = {}
    for k, v in meta.items():
        try:
            json.dumps(v)
        except (TypeError, ValueError):
            continue
        out[str(k)] = v
    return out


def _infer_kind(vol) -> str:
    if isinstance(vol, LabelVolume):
        return "labels"
    if vol.intensity_range == (0.0, 1.0) and vol.is_binary():
        return "mask"
    if vol.intensity_range[0] < 0.0:
        return "map"
    return "image"


def _encode(vol: VoxelVolume) -> np.ndarray:
    lo, hi = vol.intensity_range
    q = np.rint((np.asarray(vol.data, dtype=np.float64) - lo) / (hi - lo) * _QMAX)
    return np.clip(q, 0, _QMAX).astype(np.uint16)


def _decode(q: np.ndarray, value_range, kind: str) -> np.ndarray:
    lo, hi = value_range
    if kind == "mask":
        return (q >= (_QMAX + 1) // 2).astype(np.uint8)
    return lo + q.astype(np.float64) / _QMAX * (hi - lo)


def save_volume(path, vol, fmt: str = None, kind: str = None) -> Path:
    """Write a volume plus its sidecar; returns the data file path.

    ``fmt`` is "tiff" or "raw" (default from the file extension, TIFF when
    ambiguous). Label values must fit in 16 bits.
    """
    path = Path(path)
    if fmt is None:
        fmt = "raw" if path.suffix.lower() == ".raw" else "tiff"
    if fmt not in ("tiff", "raw"):
        raise ValueError(f"unknown format {fmt!r}")
    kind = kind or _infer_kind(vol)

    if isinstance(vol, LabelVolume):
        if vol.data.size and vol.data.max() > _QMAX:
            raise ValueError(f"labels exceed 16-bit range (max {vol.data.max()})")
        arr = vol.data.astype(np.uint16)
        value_range = (0, _QMAX)
        meta = _json_safe(vol.metadata)
    else:
        arr = _encode(vol)
        value_range = vol.intensity_range
        meta = _json_safe(vol.metadata)

    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "tiff":
        tifffile.imwrite(path, arr, photometric="minisblack")
    else:
        path.write_bytes(arr.astype("<u2").tobytes())

    sidecar = {
        "format": fmt,
        "kind": kind,
        "dims": list(dims_from_shape(arr.shape)),
        "spacing": list(vol.spacing),
        "value_range": list(value_range),
        "dtype": "<u2",
        "metadata": meta,
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def load_volume(path):
    """Read a volume written by :func:`save_volume`.

    Returns a :class:`LabelVolume` for kind "labels", otherwise a
    :class:`VoxelVolume` with values mapped back to the stored range.
    """
    path = Path(path)
    sc_path = sidecar_path(path)
    if not sc_path.exists():
        raise FileNotFoundError(f"missing sidecar {sc_path}")
    sc = json.loads(sc_path.read_text())
    dims = tuple(int(d) for d in sc["dims"])
    spacing = tuple(float(s) for s in sc["spacing"])
    kind = sc["kind"]

    if sc["format"] == "tiff":
        arr = tifffile.imread(path)
        if arr.ndim == 2:
            arr = arr[None]
    else:
        arr = np.frombuffer(path.read_bytes(), dtype=sc.get("dtype", "<u2")).reshape(
            shape_from_dims(dims)
        )
    if arr.shape != shape_from_dims(dims):
        raise ValueError(
            f"data shape {arr.shape} does not match sidecar dims {dims} in {path}"
        )

    meta = dict(sc.get("metadata", {}))
    if kind == "labels":
        return LabelVolume(arr.astype(np.uint16), spacing=spacing, metadata=meta)
    value_range = tuple(float(v) for v in sc["value_range"])
    data = _decode(arr, value_range, kind)
    if kind == "mask":
        value_range = (0.0, 1.0)
    return VoxelVolume(data, spacing=spacing, intensity_range=value_range, metadata=meta)

"""File formats: raw little-endian arrays with JSON sidecars, 16-bit PGM images, manifests."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import CacheFormatError

_DTYPES = {"float64": "<f8", "complex128": "<c16"}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_array(path, arr, **meta) -> Path:
    """Write ``arr`` to ``path`` (raw LE f64 or c128) plus ``path + '.json'``."""
    path = Path(path)
    arr = np.asarray(arr)
    kind = "complex128" if np.iscomplexobj(arr) else "float64"
    raw = np.ascontiguousarray(arr, dtype=_DTYPES[kind])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(raw.tobytes())
    side = {"shape": list(arr.shape), "dtype": kind, "byte_order": "little",
            "sha256": sha256_file(path), **meta}
    Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True))
    return path


def read_array(path, verify=True):
    path = Path(path)
    side = json.loads(Path(str(path) + ".json").read_text())
    if side.get("dtype") not in _DTYPES:
        raise CacheFormatError(f"{path}: unsupported dtype {side.get('dtype')!r}")
    if verify and sha256_file(path) != side["sha256"]:
        raise CacheFormatError(f"{path}: checksum mismatch")
    arr = np.frombuffer(path.read_bytes(), dtype=_DTYPES[side["dtype"]])
    return arr.reshape(side["shape"]).astype(side["dtype"]), side


def write_pgm(path, arr, vmin=None, vmax=None) -> dict:
    """16-bit binary PGM; NaNs map to 0.  Returns the display window used."""
    a = np.asarray(arr, float)
    finite = np.isfinite(a)
    lo = float(np.min(a[finite])) if vmin is None and finite.any() else float(vmin or 0.0)
    hi = float(np.max(a[finite])) if vmax is None and finite.any() else float(vmax or 1.0)
    scale = 65535.0 / (hi - lo) if hi > lo else 0.0
    img = np.where(finite, np.clip((a - lo) * scale, 0, 65535), 0).round().astype(">u2")
    # rows of the image are y (top = +1), columns are x
    img = img.T[::-1] if img.shape[0] == img.shape[1] else img
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode())
        fh.write(img.tobytes())
    return {"min": lo, "max": hi}


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise CacheFormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    dtype = ">u2" if maxval > 255 else "u1"
    body = raw[len(raw) - w * h * np.dtype(dtype).itemsize:]
    return np.frombuffer(body, dtype=dtype).reshape(h, w)


class Manifest:
    """JSON index of run outputs: file name -> sha256 and free-form metadata."""

    def __init__(self, root, name="manifest.json"):
        self.root = Path(root)
        self.path = self.root / name
        self.data = {"files": {}, "meta": {}}
        if self.path.exists():
            self.data = json.loads(self.path.read_text())

    def add(self, path, **meta):
        rel = str(Path(path).relative_to(self.root))
        self.data["files"][rel] = {"sha256": sha256_file(path), **meta}

    def add_array(self, path, **meta):
        self.add(path, **meta)
        self.add(str(path) + ".json")

    def set_meta(self, **meta):
        self.data["meta"].update(meta)

    def save(self):
        self.root.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True))

    def verify(self) -> list:
        """Names of files that are missing or whose hash changed."""
        bad = []
        for rel, info in self.data["files"].items():
            p = self.root / rel
            if not p.exists() or sha256_file(p) != info["sha256"]:
                bad.append(rel)
        return bad

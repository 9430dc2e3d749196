"""Activation archives: one directory per tap, one ``.fmap`` file per image.

File layout (little-endian)::

    b"FMAP" | u16 version=1 | u32 C | u32 H | u32 W | C*H*W float32 (c, y, x order)
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .spectra import CovarianceAccumulator, SpectraError, accumulate, merge

MAGIC = b"FMAP"
VERSION = 1
HEADER = struct.Struct("<4sHIII")
MANIFEST = "manifest.json"


class FmapError(SpectraError):
    pass


def encode_fmap(feature_map: np.ndarray) -> bytes:
    c, h, w = feature_map.shape
    body = np.ascontiguousarray(feature_map, dtype="<f4").tobytes()
    return HEADER.pack(MAGIC, VERSION, c, h, w) + body


def decode_fmap(data: bytes, name: str = "<bytes>") -> np.ndarray:
    if len(data) < HEADER.size:
        raise FmapError(f"{name}: truncated header")
    magic, version, c, h, w = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FmapError(f"{name}: bad magic {magic!r}")
    if version != VERSION:
        raise FmapError(f"{name}: unsupported version {version}")
    expected = HEADER.size + 4 * c * h * w
    if len(data) != expected:
        raise FmapError(f"{name}: expected {expected} bytes, found {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=HEADER.size).reshape(c, h, w)


def write_fmap(path: Path, feature_map: np.ndarray) -> None:
    Path(path).write_bytes(encode_fmap(feature_map))


def read_fmap(path: Path) -> np.ndarray:
    path = Path(path)
    return decode_fmap(path.read_bytes(), str(path))


def write_manifest(root: Path, taps: Sequence[dict[str, Any]]) -> None:
    doc = {"taps": [{"id": t["id"], "channels": t["channels"], "images": t["images"]} for t in taps]}
    (Path(root) / MANIFEST).write_text(json.dumps(doc, indent=2) + "\n")


def read_manifest(root: Path) -> list[dict[str, Any]]:
    path = Path(root) / MANIFEST
    try:
        doc = json.loads(path.read_text())
        taps = doc["taps"]
        return [{"id": str(t["id"]), "channels": int(t["channels"]), "images": int(t["images"])} for t in taps]
    except FileNotFoundError:
        raise FmapError(f"{path}: manifest not found") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FmapError(f"{path}: malformed manifest ({exc!r})") from None


def tap_files(root: Path, tap_id: str) -> list[Path]:
    files = list((Path(root) / tap_id).glob("*.fmap"))
    try:
        return sorted(files, key=lambda p: int(p.stem))
    except ValueError:
        bad = next(p for p in files if not p.stem.isdigit())
        raise FmapError(f"{bad}: file name is not an image index") from None


def _accumulate_files(tap_id: str, channels: int, files: Sequence[Path]) -> CovarianceAccumulator:
    acc = CovarianceAccumulator(tap_id, channels)
    for path in files:
        fmap = read_fmap(path)
        if fmap.shape[0] != channels:
            raise FmapError(f"{path}: {fmap.shape[0]} channels, manifest says {channels}")
        accumulate(acc, fmap)
    return acc


def accumulate_tap(root: Path, tap_id: str, channels: int, threads: int = 1) -> CovarianceAccumulator:
    """Accumulate all images of one tap, sharding contiguous file ranges over ``threads``.

    Shards are merged in index order, so the result depends on the thread
    count only through floating-point summation order.
    """
    files = tap_files(root, tap_id)
    threads = max(1, min(threads, len(files)))
    if threads == 1:
        return _accumulate_files(tap_id, channels, files)
    bounds = np.linspace(0, len(files), threads + 1).astype(int)
    shards = [files[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda s: _accumulate_files(tap_id, channels, s), shards))
    acc = parts[0]
    for part in parts[1:]:
        acc = merge(acc, part)
    return acc

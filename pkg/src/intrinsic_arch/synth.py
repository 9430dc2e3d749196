"""Synthetic activation archives with a known covariance.

Feature vectors are i.i.d. zero-mean Gaussians with covariance
``Q diag(eigenvalues) Q^T + noise * I``. Each image is drawn from its own
generator seeded by ``(seed, tap index, image index)`` so archives are
byte-identical for a given spec and seed however generation is split up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .fmap import write_fmap, write_manifest

ORACLE = "oracle.json"


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    tap_id: str
    eigenvalues: tuple[float, ...]
    n_images: int
    resolutions: tuple[tuple[int, int], ...] = ((4, 4),)  # (H, W) pairs, cycled per image
    noise: float = 0.0

    def __post_init__(self) -> None:
        if not self.eigenvalues:
            raise SynthError(f"tap {self.tap_id!r}: eigenvalues must be nonempty")
        if any(not np.isfinite(v) or v < 0 for v in self.eigenvalues):
            raise SynthError(f"tap {self.tap_id!r}: eigenvalues must be finite and nonnegative")
        if self.n_images < 1:
            raise SynthError(f"tap {self.tap_id!r}: n_images must be positive")
        if not self.resolutions:
            raise SynthError(f"tap {self.tap_id!r}: resolution list is empty")
        for h, w in self.resolutions:
            if h < 1 or w < 1:
                raise SynthError(f"tap {self.tap_id!r}: invalid resolution {(h, w)}")
        if not (np.isfinite(self.noise) and self.noise >= 0):
            raise SynthError(f"tap {self.tap_id!r}: noise must be nonnegative")

    @property
    def channels(self) -> int:
        return len(self.eigenvalues)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> SynthSpec:
        try:
            if "resolutions" in doc:
                res = tuple((int(h), int(w)) for h, w in doc["resolutions"])
            else:
                res = ((int(doc.get("height", 4)), int(doc.get("width", 4))),)
            eig = tuple(float(v) for v in doc["eigenvalues"])
            if "channels" in doc and int(doc["channels"]) != len(eig):
                raise SynthError(f"tap {doc.get('id')!r}: {len(eig)} eigenvalues for {doc['channels']} channels")
            return cls(
                tap_id=str(doc["id"]),
                eigenvalues=eig,
                n_images=int(doc["n_images"]),
                resolutions=res,
                noise=float(doc.get("noise", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SynthError):
                raise
            raise SynthError(f"malformed synth spec entry: {exc!r}") from None


def rotation(channels: int, seed: int, tap_index: int = 0) -> np.ndarray:
    """Seeded Haar-random orthogonal matrix."""
    rng = np.random.default_rng([seed, tap_index, 0xA5])
    q, r = np.linalg.qr(rng.standard_normal((channels, channels)))
    return q * np.sign(np.diag(r))


def mixing_matrix(spec: SynthSpec, seed: int, tap_index: int = 0) -> np.ndarray:
    """Matrix M with M M^T equal to the target signal covariance."""
    q = rotation(spec.channels, seed, tap_index)
    return q * np.sqrt(np.asarray(spec.eigenvalues))


def target_covariance(spec: SynthSpec, seed: int, tap_index: int = 0) -> np.ndarray:
    q = rotation(spec.channels, seed, tap_index)
    return (q * np.asarray(spec.eigenvalues)) @ q.T + spec.noise * np.eye(spec.channels)


def sample_image(spec: SynthSpec, seed: int, tap_index: int, index: int, mix: np.ndarray | None = None) -> np.ndarray:
    """One C x H x W float32 feature map."""
    if mix is None:
        mix = mixing_matrix(spec, seed, tap_index)
    h, w = spec.resolutions[index % len(spec.resolutions)]
    rng = np.random.default_rng([seed, tap_index, index])
    c = spec.channels
    z = rng.standard_normal((c, h * w))
    x = mix @ z
    if spec.noise > 0:
        x += np.sqrt(spec.noise) * rng.standard_normal((c, h * w))
    return x.reshape(c, h, w).astype(np.float32)


def generate(specs: SynthSpec | Sequence[SynthSpec], out: Path, seed: int = 0) -> Path:
    """Write an activation archive plus ``oracle.json`` into ``out``."""
    if isinstance(specs, SynthSpec):
        specs = [specs]
    ids = [s.tap_id for s in specs]
    if len(set(ids)) != len(ids):
        raise SynthError("duplicate tap ids in synth spec")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for t, spec in enumerate(specs):
        tap_dir = out / spec.tap_id
        tap_dir.mkdir(parents=True, exist_ok=True)
        mix = mixing_matrix(spec, seed, t)
        for i in range(spec.n_images):
            write_fmap(tap_dir / f"{i}.fmap", sample_image(spec, seed, t, i, mix))
    write_manifest(out, [{"id": s.tap_id, "channels": s.channels, "images": s.n_images} for s in specs])
    oracle = {
        "seed": seed,
        "taps": [
            {
                "id": s.tap_id,
                "eigenvalues": list(s.eigenvalues),
                "noise": s.noise,
                "n_images": s.n_images,
                "resolutions": [list(r) for r in s.resolutions],
            }
            for s in specs
        ],
    }
    (out / ORACLE).write_text(json.dumps(oracle, indent=2) + "\n")
    return out


def variable_resolution(spec: SynthSpec, resolutions: Sequence[tuple[int, int]], out: Path, seed: int = 0) -> Path:
    """Like :func:`generate`, with per-image (H, W) cycling through ``resolutions``."""
    if not resolutions:
        raise SynthError("resolution list is empty")
    spec = SynthSpec(spec.tap_id, spec.eigenvalues, spec.n_images, tuple(tuple(r) for r in resolutions), spec.noise)
    return generate(spec, out, seed)


def load_specs(doc: Mapping[str, Any]) -> list[SynthSpec]:
    if not isinstance(doc, Mapping):
        raise SynthError("synth spec must be a JSON object")
    entries = doc["taps"] if "taps" in doc else [doc]
    if not isinstance(entries, list) or not entries:
        raise SynthError("synth spec lists no taps")
    return [SynthSpec.from_dict(e) for e in entries]

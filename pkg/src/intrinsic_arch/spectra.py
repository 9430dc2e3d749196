"""Feature-map covariance estimation and eigenspectra.

The covariance is non-centered and normalized per image by its spatial size,
so images of different resolutions carry equal weight::

    cov = 1/n * sum_i 1/(W_i H_i) * sum_{x,y} F[i,:,y,x] F[i,:,y,x]^T
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

DEFAULT_THRESHOLD = 1e-3


class SpectraError(ValueError):
    pass


@dataclass
class CovarianceAccumulator:
    """Mergeable sufficient statistics for one tap's covariance.

    ``sum_matrix`` holds the sum of per-image spatially averaged outer
    products, always in float64.
    """

    tap_id: str
    channels: int
    sum_matrix: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    n_images: int = 0

    def __post_init__(self) -> None:
        if self.channels < 1:
            raise SpectraError(f"tap {self.tap_id!r}: channels must be positive")
        if self.sum_matrix is None:
            self.sum_matrix = np.zeros((self.channels, self.channels), dtype=np.float64)
        elif self.sum_matrix.shape != (self.channels, self.channels):
            raise SpectraError(f"tap {self.tap_id!r}: sum_matrix has shape {self.sum_matrix.shape}")

    def accumulate(self, feature_map: np.ndarray) -> CovarianceAccumulator:
        return accumulate(self, feature_map)


def accumulate(acc: CovarianceAccumulator, feature_map: np.ndarray) -> CovarianceAccumulator:
    """Add one image's C x H x W feature map. Mutates and returns ``acc``."""
    fmap = np.asarray(feature_map)
    if fmap.ndim == 1:
        fmap = fmap[:, None, None]
    if fmap.ndim != 3:
        raise SpectraError(f"tap {acc.tap_id!r}: expected a C x H x W map, got shape {fmap.shape}")
    c, h, w = fmap.shape
    if c != acc.channels:
        raise SpectraError(f"tap {acc.tap_id!r}: expected {acc.channels} channels, got {c}")
    if h < 1 or w < 1:
        raise SpectraError(f"tap {acc.tap_id!r}: empty spatial extent {h}x{w}")
    flat = fmap.reshape(c, h * w).astype(np.float64, copy=False)
    if not np.isfinite(flat).all():
        raise SpectraError(f"tap {acc.tap_id!r}: feature map contains non-finite values")
    acc.sum_matrix += (flat @ flat.T) / (h * w)
    acc.n_images += 1
    return acc


def merge(a: CovarianceAccumulator, b: CovarianceAccumulator) -> CovarianceAccumulator:
    if a.tap_id != b.tap_id:
        raise SpectraError(f"cannot merge accumulators for taps {a.tap_id!r} and {b.tap_id!r}")
    if a.channels != b.channels:
        raise SpectraError(f"tap {a.tap_id!r}: cannot merge {a.channels} and {b.channels} channels")
    return CovarianceAccumulator(a.tap_id, a.channels, a.sum_matrix + b.sum_matrix, a.n_images + b.n_images)


def finalize(acc: CovarianceAccumulator) -> np.ndarray:
    if acc.n_images == 0:
        raise SpectraError(f"tap {acc.tap_id!r}: no images accumulated")
    s = acc.sum_matrix
    return (s + s.T) / (2.0 * acc.n_images)


@dataclass(frozen=True)
class Eigenspectrum:
    tap_id: str
    values: tuple[float, ...]
    raw_max: float

    @property
    def channels(self) -> int:
        return len(self.values)

    def to_dict(self) -> dict[str, Any]:
        return {"tap_id": self.tap_id, "raw_max": self.raw_max, "values": list(self.values)}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> Eigenspectrum:
        try:
            values = tuple(float(v) for v in doc["values"])
            return cls(tap_id=str(doc["tap_id"]), values=values, raw_max=float(doc["raw_max"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SpectraError(f"malformed spectrum record: {exc!r}") from None


def eigenspectrum(cov: np.ndarray, tap_id: str = "") -> Eigenspectrum:
    """Descending eigenvalues of a symmetric matrix, normalized by the largest."""
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise SpectraError(f"tap {tap_id!r}: covariance must be square, got shape {cov.shape}")
    if not np.isfinite(cov).all():
        raise SpectraError(f"tap {tap_id!r}: covariance contains non-finite entries")
    sym = (cov + cov.T) / 2.0
    eig = np.linalg.eigvalsh(sym)[::-1]
    eig = np.clip(eig, 0.0, None)
    raw_max = float(eig[0]) if eig.size else 0.0
    if raw_max == 0.0:
        values = np.zeros_like(eig)
    else:
        values = eig / raw_max
        values[0] = 1.0
    return Eigenspectrum(tap_id=tap_id, values=tuple(values.tolist()), raw_max=raw_max)


def intrinsic_dim(spec: Eigenspectrum, threshold: float = DEFAULT_THRESHOLD) -> int:
    """Number of normalized eigenvalues strictly greater than ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise SpectraError(f"threshold must lie in (0, 1), got {threshold}")
    return int(sum(v > threshold for v in spec.values))

"""Eigenspectrum-driven channel-width search for CNN architectures."""

__version__ = "0.1.0"

from .archgraph import (  # noqa: E402
    ArchError,
    ArchitectureGraph,
    LayerSpec,
    Tap,
    TieGroup,
    apply_widths,
    compute_cost,
    parse_arch,
    serialize,
    spatial_dims,
)
from .search import SearchConfig, SearchReport, run_pipeline  # noqa: E402
from .spectra import CovarianceAccumulator, Eigenspectrum, eigenspectrum, intrinsic_dim  # noqa: E402

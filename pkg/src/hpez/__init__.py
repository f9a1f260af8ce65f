"""Error-bounded lossy compression for structured scientific grids.

The compressor predicts each value from already-reconstructed
neighbors (auto-tuned spline interpolation, with a Lorenzo fallback),
quantizes prediction errors against a point-wise bound, and entropy
codes the result into a self-describing archive.
"""

from .errors import HpezError
from .grid import (BoundMode, ElementKind, ErrorBoundSpec, ScalarGrid,
                   load_raw, value_range)
from .metrics import (QualityReport, SweepRow, TransferEstimate,
                      estimate_transfer, evaluate, psnr, ssim, sweep,
                      sweep_csv)
from .pipeline import CompressResult, compress, decompress
from .plan import CompressionConfig
from .tuner import QualityTarget, TunerOptions, tune

__version__ = "0.1.0"

__all__ = [
    "BoundMode",
    "CompressResult",
    "CompressionConfig",
    "ElementKind",
    "ErrorBoundSpec",
    "HpezError",
    "QualityReport",
    "QualityTarget",
    "ScalarGrid",
    "SweepRow",
    "TransferEstimate",
    "TunerOptions",
    "__version__",
    "compress",
    "decompress",
    "estimate_transfer",
    "evaluate",
    "load_raw",
    "psnr",
    "ssim",
    "sweep",
    "sweep_csv",
    "tune",
    "value_range",
]

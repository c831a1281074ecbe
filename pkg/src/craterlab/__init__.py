"""craterlab: desk-scale sim-to-real lunar crater segmentation pipeline.

Two stages: translate procedurally rendered lunar tiles toward a real image
distribution with an unpaired translator, then train a crater segmenter on
the translated tiles and their simulator-perfect masks.
"""

__version__ = "0.1.0"

from craterlab.kernels import BACKEND as kernel_backend  # noqa: F401

"""Hot-kernel dispatch: compiled Cython core with a numpy fallback.

The backend is chosen once at import time. Set CRATERLAB_KERNELS=python to
force the fallback or CRATERLAB_KERNELS=compiled to require the extension
(raising if it is missing); the default "auto" prefers the extension.
``benchmarks/bench_kernels.py`` times the two backends side by side.
"""

import importlib
import os

_KERNEL_NAMES = (
    "value_noise",
    "crater_stamp",
    "hillshade",
    "fill_disks",
    "confusion_counts",
)


def load_backend(name):
    """Return the kernel module for an explicit backend name."""
    if name == "compiled":
        return importlib.import_module("craterlab.kernels._core")
    if name == "python":
        return importlib.import_module("craterlab.kernels._reference")
    raise ValueError(f"unknown kernel backend {name!r}")


_requested = os.environ.get("CRATERLAB_KERNELS", "auto")
if _requested == "auto":
    try:
        _impl = load_backend("compiled")
        BACKEND = "compiled"
    except ImportError:
        _impl = load_backend("python")
        BACKEND = "python"
else:
    _impl = load_backend(_requested)
    BACKEND = _requested

value_noise = _impl.value_noise
crater_stamp = _impl.crater_stamp
hillshade = _impl.hillshade
fill_disks = _impl.fill_disks
confusion_counts = _impl.confusion_counts

__all__ = list(_KERNEL_NAMES) + ["BACKEND", "load_backend"]

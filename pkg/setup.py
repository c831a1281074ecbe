"""Build script for the compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), but the compiled kernels are substantially faster for scene
synthesis and mask rasterization. Build in place with:

> python setup.py build_ext --inplace
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "craterlab.kernels._core",
        ["src/craterlab/kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        # -ffp-contract=off keeps double arithmetic bit-compatible with the
        # numpy fallback (no fused multiply-add reassociation).
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)

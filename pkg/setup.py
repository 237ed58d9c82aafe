"""Build script for the compiled kernel extension.

The extension is optional: when Cython or a C++ toolchain is unavailable
(or MOSVOX_SKIP_NATIVE is set) the package installs pure-Python only and
selects the numpy fallback backend at import time.
"""

import os

from setuptools import Extension, setup


def native_extensions():
    if os.environ.get("MOSVOX_SKIP_NATIVE"):
        return []
    try:
        from Cython.Build import cythonize
        import numpy as np
    except ImportError:
        return []
    ext = Extension(
        "mosvox._kernels._native",
        ["src/mosvox/_kernels/_native.pyx"],
        language="c++",
        include_dirs=[np.get_include()],
        # -ffp-contract=off keeps float results bit-identical to the numpy
        # fallback (no fused multiply-add in the HMM update).
        extra_compile_args=["-O3", "-std=c++17", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=native_extensions())

"""Build the optional compiled kernels.

If Cython or a C compiler is unavailable the package still installs and
falls back to the NumPy implementation at import time.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("SLIPGAIT_NO_EXT", "").strip() in ("", "0"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("slipgait._kernels", ["src/slipgait/_kernels.pyx"],
                       include_dirs=[np.get_include()],
                       extra_compile_args=["-O3"],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            compiler_directives={"language_level": 3, "boundscheck": False,
                                 "wraparound": False, "cdivision": True},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)

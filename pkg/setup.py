"""Builds the optional compiled raster kernels.

The package is fully functional without the extension: a pure-Python twin
of the kernels is selected at import time when the compiled module is
missing. Building the extension makes rasterization roughly two orders of
magnitude faster (see benchmarks/bench_raster.py).

Set SKETCHVEC_SKIP_EXT=1 to force a pure-Python install.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("SKETCHVEC_SKIP_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/sketchvec/render/_kernels.pyx"],
            language_level=3,
        )
    except ImportError:
        # No Cython at build time: install with pure-Python kernels.
        ext_modules = []

setup(ext_modules=ext_modules)

"""Build script. The compiled kernel is optional: without Cython or a C
compiler the package installs pure-Python and selects the numpy fallback at
import time."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("CPFORCE_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "cpforce._kernels._stack",
                    sources=["src/cpforce/_kernels/_stack.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level="3",
        )
    except Exception:
        ext_modules = []

setup(ext_modules=ext_modules)

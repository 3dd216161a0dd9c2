import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    USE_CYTHON = True
except ImportError:
    USE_CYTHON = False

# IEEGPAIN_NO_EXT=1 installs the pure-Python package only.
SKIP_EXT = os.environ.get("IEEGPAIN_NO_EXT", "") not in ("", "0")


def _extensions():
    if SKIP_EXT or not USE_CYTHON:
        return []
    ext = Extension(
        "ieegpain._kernels._core",
        ["src/ieegpain/_kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )


setup(ext_modules=_extensions())

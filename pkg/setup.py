"""Build script for the optional compiled conv kernels.

The package works without the extension (a pure-numpy fallback is selected
at import time), so extension build failures are non-fatal.
"""
import numpy
from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/svla/kernels/_convops.pyx",
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    )
except ImportError:
    ext_modules = []

setup(
    ext_modules=ext_modules,
    include_dirs=[numpy.get_include()],
)

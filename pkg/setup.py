"""Build script: compiles the optional native core.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile downgrades to a warning instead of
aborting the install.
"""

import warnings

from setuptools import setup
from setuptools.errors import CompileError


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        warnings.warn("cython/numpy unavailable at build time; "
                      "installing without the native core")
        return []
    ext = Extension(
        "vdwalk._native",
        ["src/vdwalk/_native.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


try:
    setup(ext_modules=_extensions())
except (CompileError, SystemExit):
    warnings.warn("native core failed to build; falling back to pure python")
    setup(ext_modules=[])

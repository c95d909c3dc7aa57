"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (pure-NumPy fallback is selected at
import time), so a missing compiler or Cython must not fail the install.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "iotduel.nn._kernels",
                ["src/iotduel/nn/_kernels.pyx"],
                extra_compile_args=["-O3", "-fno-strict-aliasing"],
            )
        ],
        language_level=3,
    )
except ImportError:
    print("Cython not available; installing with the pure-NumPy backend only.")

setup(ext_modules=ext_modules)

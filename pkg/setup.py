"""Build script: compiles the event-kernel extension when Cython and a C
compiler are available. The package falls back to the pure-Python kernel at
import time, so a failed extension build is not fatal; set
FQLSCALE_PURE_PYTHON=1 to skip the extension entirely.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("FQLSCALE_PURE_PYTHON") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "fqlscale._core",
                    ["src/fqlscale/_core.pyx"],
                    # -ffp-contract=off keeps float arithmetic bit-identical
                    # to the pure-Python kernel (no fused multiply-add).
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)

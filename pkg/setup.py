"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure numpy fallback is selected
at import time), so any failure to cythonize or compile is downgraded to a
warning instead of aborting the install.
"""

import os
import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            warnings.warn(f"compiled kernels skipped: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"compiled kernels skipped ({ext.name}): {exc}")


ext_modules = []
if os.environ.get("KINFUSE_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "kinfuse.tensor.kernels._ckernels",
                    ["src/kinfuse/tensor/kernels/_ckernels.pyx"],
                    extra_compile_args=["-O3"],  # gcc/clang; needed for SIMD
                )
            ],
            language_level="3",
        )
    except ImportError:
        warnings.warn("Cython not available; installing with pure-python kernels")

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})

"""Build script: compiles the Cython marching kernel when a toolchain is present.

The compiled extension is optional; the package falls back to the pure-Python
kernel at import time if the build is skipped or fails.
"""

import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build extensions, degrading to the pure-Python kernel on failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain-dependent
            sys.stderr.write(f"voxlens: extension build skipped ({exc}); "
                             "using pure-Python kernel\n")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain-dependent
            sys.stderr.write(f"voxlens: building {ext.name} failed ({exc}); "
                             "using pure-Python kernel\n")


def make_extensions():
    if os.environ.get("VOXLENS_SKIP_EXT"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:  # pragma: no cover
        return []
    ext = Extension(
        "voxlens.kernels._march",
        ["src/voxlens/kernels/_march.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-fopenmp"],
        extra_link_args=["-fopenmp"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=make_extensions(), cmdclass={"build_ext": OptionalBuildExt})

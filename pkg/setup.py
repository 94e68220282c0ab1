"""Build script: compiles the optional native kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile downgrades to a warning instead of
aborting the install.
"""

import sys

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Try OpenMP first, then plain C, then give up gracefully."""

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # compiler missing or OpenMP unsupported
            if "-fopenmp" in ext.extra_compile_args:
                print(f"warning: OpenMP build failed ({exc}); retrying serial",
                      file=sys.stderr)
                ext.extra_compile_args = [a for a in ext.extra_compile_args
                                          if a != "-fopenmp"]
                ext.extra_link_args = [a for a in ext.extra_link_args
                                       if a != "-fopenmp"]
                try:
                    super().build_extension(ext)
                    return
                except Exception as exc2:
                    exc = exc2
            print(f"warning: native kernels not built ({exc}); "
                  "the pure-Python backend will be used", file=sys.stderr)


def make_extensions():
    from Cython.Build import cythonize

    ext = Extension(
        "avatarkit._kernels",
        sources=["src/avatarkit/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-fopenmp"],
        extra_link_args=["-fopenmp"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
            "language_level": 3,
        },
    )


setup(ext_modules=make_extensions(), cmdclass={"build_ext": OptionalBuildExt})

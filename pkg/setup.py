"""Builds the optional compiled kernels; the package works without them.

Set ``FDSDF_NO_EXTENSIONS=1`` to skip them and ``FDSDF_NATIVE=1`` to compile
for the host CPU (wider SIMD for the trig kernel).
"""

import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # no compiler, no Cython, ...
            sys.stderr.write(f"warning: compiled kernels not built ({exc}); using numpy fallback\n")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            sys.stderr.write(f"warning: failed to build {ext.name} ({exc}); using numpy fallback\n")


def extensions():
    if os.environ.get("FDSDF_NO_EXTENSIONS"):
        return []
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    native = ["-march=native"] if os.environ.get("FDSDF_NATIVE") else []
    exts = [
        # fast-math is what lets gcc vectorize sin/cos through libmvec
        Extension("fdsdf._trig", ["src/fdsdf/_trig.pyx"],
                  extra_compile_args=["-O3", "-ffast-math"] + native,
                  extra_link_args=["-lmvec"]),
        # strict IEEE arithmetic, no FMA contraction: results must match numpy bitwise
        Extension("fdsdf._kernels", ["src/fdsdf/_kernels.pyx"],
                  extra_compile_args=["-O3", "-ffp-contract=off"]),
    ]
    return cythonize(exts, language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})

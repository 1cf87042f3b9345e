"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a pure NumPy backend is selected at
import time), so any failure to cythonize or compile downgrades the install
to pure Python instead of aborting it.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """build_ext that tolerates a missing or broken C toolchain."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: building ptplaq._cykern failed ({exc}); "
                  "falling back to the pure Python kernels", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: {ext.name} failed to compile ({exc}); "
                  "falling back to the pure Python kernels", file=sys.stderr)


def _extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("warning: Cython not available; installing pure Python kernels only",
              file=sys.stderr)
        return []
    ext = Extension(
        "ptplaq._cykern",
        sources=["src/ptplaq/_cykern.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})

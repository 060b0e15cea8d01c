"""Build script: compiles the optional Cython kernel extension.

The extension is best-effort.  If the compiler or Cython is unavailable the
package still installs and falls back to the numpy kernel implementations at
import time (see volstream.kernels).
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: kernel extension build skipped: {exc}", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed: {exc}", file=sys.stderr)


def make_extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        print(f"warning: no Cython/numpy at build time ({exc})", file=sys.stderr)
        return []
    ext = Extension(
        "volstream.kernels._compiled",
        ["src/volstream/kernels/_compiled.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3, quiet=True)


setup(
    ext_modules=make_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)

"""Build script for the optional compiled geometry kernel.

The package is fully functional without the extension: groundbox.geometry
falls back to a pure-Python kernel with identical semantics when the
compiled module is missing. Any build failure therefore degrades to a
warning instead of aborting the install.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext
from setuptools.errors import CCompilerError, ExecError, PlatformError


class optional_build_ext(build_ext):
    """build_ext that tolerates a missing or broken C toolchain."""

    def run(self):
        try:
            super().run()
        except (PlatformError, FileNotFoundError) as exc:
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except (CCompilerError, ExecError, PlatformError, ValueError) as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"WARNING: compiled geometry kernel not built ({exc}); "
            "falling back to the pure-Python kernel",
            file=sys.stderr,
        )


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print(
            "WARNING: Cython not available; skipping compiled geometry kernel",
            file=sys.stderr,
        )
        return []
    return cythonize(
        [
            Extension(
                "groundbox.geometry._fast",
                ["src/groundbox/geometry/_fast.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": optional_build_ext},
)

"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (pure-Python kernels are selected
at import time), so a failed compile downgrades to a warning instead of
aborting the install.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Let the install proceed if the extension cannot be compiled."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any compile failure is non-fatal
            sys.stderr.write(
                f"warning: building morphal._ckernels failed ({exc}); "
                "falling back to the pure-Python kernels\n"
            )

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            sys.stderr.write(
                f"warning: building {ext.name} failed ({exc}); "
                "falling back to the pure-Python kernels\n"
            )


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "morphal._ckernels",
        sources=["src/morphal/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        # -ffp-contract=off keeps results bit-identical with the pure-Python
        # kernels (no FMA contraction; both paths do the same IEEE-754 ops).
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})

"""Build script: compiles the optional Cython kernel core.

The package works without the extension (a pure numpy fallback is selected at
import time); any build failure here downgrades to a warning so that
installation never blocks on a missing compiler.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, broken toolchain, ...
            warnings.warn(f"compiled kernels not built ({exc}); "
                          "falling back to the pure-Python backend")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"compiled kernels not built ({exc}); "
                          "falling back to the pure-Python backend")


def extensions():
    import os
    if not os.path.exists("src/memfem/kernels/_fastcore.pyx"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "memfem.kernels._fastcore",
        ["src/memfem/kernels/_fastcore.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": 3,
                                                 "boundscheck": False,
                                                 "wraparound": False,
                                                 "cdivision": True})


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})

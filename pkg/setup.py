"""Build script: compiles the optional escape-iteration extension.

The package works without the extension (a pure-Python kernel is selected
at import time), so a failed Cython build must not break installation.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "henonlab._core.escape_kernel",
                ["src/henonlab/_core/escape_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O2"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    sys.stderr.write(f"henonlab: skipping compiled kernel ({exc})\n")

setup(ext_modules=ext_modules)

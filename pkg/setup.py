"""Build script: compiles the optional fast-path extension.

The package is fully functional without the extension (a NumPy reference
implementation of every kernel is selected at import time), so any build
failure here downgrades to a warning instead of aborting the install.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "mixrl.kernels._fastpath",
                ["src/mixrl/kernels/_fastpath.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    sys.stderr.write(
        f"warning: skipping compiled kernels ({exc}); "
        "falling back to the pure NumPy implementation\n"
    )

setup(ext_modules=ext_modules)

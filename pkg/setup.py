"""Build hook for the optional compiled kernels.

If Cython or a C compiler is missing the package still installs and the
numpy fallback is used at import time.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("ANOSOV_LAB_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "anosov_lab._kernels._ckernels",
                    ["src/anosov_lab/_kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except Exception as exc:  # pragma: no cover - build environment dependent
        print(f"warning: compiled kernels disabled ({exc})")
        ext_modules = []

setup(ext_modules=ext_modules)

import os
import sys

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # no Cython: install the pure-Python fallback only
    cythonize = None

if sys.platform == "win32":
    openmp_flags = ["/openmp"]
    link_flags = []
else:
    openmp_flags = ["-fopenmp"]
    link_flags = ["-fopenmp"]

if os.environ.get("RELPERF_NO_OPENMP"):
    openmp_flags, link_flags = [], []

ext_modules = []
if cythonize is not None and not os.environ.get("RELPERF_PURE_PYTHON"):
    ext_modules = cythonize(
        [
            Extension(
                "relperf._kernels",
                ["src/relperf/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"] + openmp_flags,
                extra_link_args=link_flags,
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

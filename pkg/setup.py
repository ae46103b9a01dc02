"""Build script for the optional compiled kernels.

The package works without the extension; ``fpcap._backend`` falls back to
the NumPy implementations when ``fpcap._ckernels`` cannot be imported.
"""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("FPCAP_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext = Extension(
            "fpcap._ckernels",
            ["src/fpcap/_ckernels.pyx"],
            include_dirs=[np.get_include()],
            language="c++",
            extra_compile_args=["-O3"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], compiler_directives={"language_level": 3})

setup(ext_modules=ext_modules)

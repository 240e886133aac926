import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-python install; the numpy fallback is used at import
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("HARDYPOT_NO_EXT"):
    ext = Extension(
        "hardypot._core",
        ["src/hardypot/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffast-math", "-fopenmp"],
        extra_link_args=["-fopenmp"],
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)

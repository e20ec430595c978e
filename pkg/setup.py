import os
import sys

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("CRASHBENCH_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
        import numpy as np
    except ImportError:
        print("Cython/numpy unavailable; installing pure-Python kernels only", file=sys.stderr)
        return []
    ext = Extension(
        "crashbench._ckernels",
        sources=["src/crashbench/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=_extensions())

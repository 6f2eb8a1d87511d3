"""Build script: compiles the simulation kernels as a C extension.

If Cython or a C compiler is unavailable the package still installs and
falls back to the pure-Python kernels at import time.
"""
import os

from setuptools import Extension, setup


def extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    randlib = os.path.join(os.path.dirname(np.random.__file__), "lib")
    ext = Extension(
        "lodsim._kernels",
        ["src/lodsim/_kernels.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[randlib],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions())

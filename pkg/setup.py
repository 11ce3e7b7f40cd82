"""Build script for the optional compiled convolution kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed extension build should not block installation.
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "qent.kernels._convkern",
                ["src/qent/kernels/_convkern.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ]
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "chargan.kernels._native",
                ["src/chargan/kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython available: install without the compiled kernels; the
    # package falls back to the numpy backend at import time.
    ext_modules = []

setup(ext_modules=ext_modules)

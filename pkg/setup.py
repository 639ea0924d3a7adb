import numpy as np
from setuptools import Extension, setup

# The compiled kernels are optional: if Cython or a C compiler is missing the
# install still succeeds and the package falls back to the numpy backend.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "melforce.kernels._native",
                ["src/melforce/kernels/_native.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)

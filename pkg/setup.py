"""Build shim for the compiled kernel extension.

The extension is optional at runtime (stabilsim._kernels falls back to the
pure-Python reference kernels), but this build always attempts it.
-ffp-contract=off keeps the compiled results bit-comparable with the
Python path instead of fusing multiply-adds.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "stabilsim._kernels._core",
        ["src/stabilsim/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O2", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
)

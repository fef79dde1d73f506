"""Builds the optional Cython MaxSim kernel; the package falls back to the
numpy implementation when the extension is unavailable."""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "fewfit.kernels._maxsim",
                ["src/fewfit/kernels/_maxsim.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # -ffast-math is safe here: the kernel only sums and
                # maxes finite dot products, no NaN/inf sentinels
                extra_compile_args=[
                    "-O3", "-march=native", "-funroll-loops", "-ffast-math",
                ],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)

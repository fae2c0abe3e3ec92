import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# MINK3D_NO_EXT=1 skips the compiled core; the numpy fallback is used instead.
ext_modules = []
if not os.environ.get("MINK3D_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "mink3d._core",
                ["src/mink3d/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-fopenmp"],
                extra_link_args=["-fopenmp"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

import os

import numpy
from setuptools import Extension, setup

PYX = "src/wganpinn/_kernels/_fast.pyx"

ext_modules = []
if os.path.exists(PYX):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "wganpinn._kernels._fast",
                    [PYX],
                    extra_compile_args=["-O3"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # Pure-python backend still works without the extension.
        ext_modules = []

setup(ext_modules=ext_modules)

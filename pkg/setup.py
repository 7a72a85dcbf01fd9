import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

setup(
    ext_modules=cythonize(
        Extension("artifact._kernels", ["src/artifact/_kernels.pyx"],
                  include_dirs=[np.get_include()]),
        language_level=3,
    ),
)

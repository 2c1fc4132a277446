import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
    ext_modules = cythonize(
        [Extension("hdivbiot._kernels", ["src/hdivbiot/_kernels.pyx"], include_dirs=[np.get_include()])],
        compiler_directives={"language_level": 3},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "herdnet.autodiff._speedups",
                ["src/herdnet/autodiff/_speedups.pyx"],
            )
        ],
        compiler_directives={"language_level": 3, "embedsignature": True},
    )
except ImportError:
    # No Cython available: install pure-python; the numpy kernels take over.
    ext_modules = []

setup(ext_modules=ext_modules, include_dirs=[np.get_include()])

import os

import numpy as np
from setuptools import Extension, setup

extra = ["/O2"] if os.name == "nt" else ["-O3"]

try:
    from Cython.Build import cythonize
except ImportError:  # fallback kernels are used at runtime
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "moegan._ckernels",
                ["src/moegan/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=extra,
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)

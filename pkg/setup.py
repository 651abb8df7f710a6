import os

import numpy as np
from setuptools import Extension, setup

# The compiled kernels are optional; a failed build leaves the numpy fallback.
ext_modules = []
if os.environ.get("DEFECTSPEC_NO_EXT", "") in ("", "0"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "defectspec._ckernels",
                    ["src/defectspec/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)

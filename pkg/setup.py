import os

import numpy as np
from setuptools import Extension, setup

# TCFA_NO_EXT=1 skips the compiled core; the package then runs on its fallback.
ext_modules = []
if not os.environ.get("TCFA_NO_EXT"):
    from Cython.Build import cythonize

    extensions = [
        Extension(
            "tcfa._kernels",
            ["src/tcfa/_kernels.pyx"],
            include_dirs=[np.get_include()],
            # no fp contraction: split scores must match the fallback bit for bit
            extra_compile_args=["-O3", "-ffp-contract=off"],
        )
    ]
    ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)

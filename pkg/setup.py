import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("WICKOPT_NO_EXT"):
    from Cython.Build import cythonize

    # reassociation lets the simd loop vectorize its reductions; the step stays
    # deterministic for a given build
    flags = ["-O3", "-fno-math-errno", "-fopenmp-simd", "-fassociative-math", "-fno-signed-zeros",
             "-fno-trapping-math"]
    if not os.environ.get("WICKOPT_PORTABLE"):
        flags += ["-march=native", "-mprefer-vector-width=512"]
    ext_modules = cythonize(
        [
            Extension(
                "wickopt.lbm._kernel",
                ["src/wickopt/lbm/_kernel.pyx"],
                include_dirs=[np.get_include(), "src/wickopt/lbm"],
                depends=["src/wickopt/lbm/d3q19_core.h"],
                extra_compile_args=flags,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

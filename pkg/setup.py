import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SHIELDSYNTH_NO_EXT", "") in ("", "0"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension(
                "shieldsynth._kernels",
                ["src/shieldsynth/_kernels.pyx"],
                include_dirs=[np.get_include()],
                # no fused multiply-add so results match the Python mirror bit for bit
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)

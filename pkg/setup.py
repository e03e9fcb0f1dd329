"""Build script: compiles the optional Cython entropy kernel.

The package works without the extension (a numpy fallback is selected at
import time), so any failure here degrades gracefully to a pure-Python
install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "latticefs.kernels._entropy_cy",
                ["src/latticefs/kernels/_entropy_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)

"""Build the optional compiled DP kernels.

The package works without the extension (a pure-Python fallback is selected
at import time); the compiled kernels make the exact enumeration oracles
usable at larger relation counts.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "joinopt._kernels_cy",
                ["src/joinopt/_kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython available: ship pure-Python only.
    ext_modules = []

setup(ext_modules=ext_modules)

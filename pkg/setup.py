"""Build script for the optional compiled UKF kernel.

The extension is a pure speed-up; beamobs falls back to the NumPy
implementation when the module is absent, so a failed compile is not fatal
to using the package from a source tree.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "beamobs._ukf_cy",
                ["src/beamobs/_ukf_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)

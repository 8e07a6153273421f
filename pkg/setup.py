"""Build script: compiles the optional forward-backward extension.

The package works without the extension (a numpy implementation is used as
fallback), so any Cython/compiler failure downgrades to a pure-Python install
instead of aborting.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/ssm_sgmcmc/_fb.pyx"],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": 3,
        },
    )
    include_dirs = [numpy.get_include()]
    for ext in ext_modules:
        ext.include_dirs = include_dirs
        ext.define_macros = [("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")]
except Exception as exc:  # pragma: no cover - exercised only on broken toolchains
    import sys

    print(f"ssm-sgmcmc: skipping compiled extension ({exc!r}); "
          "falling back to pure numpy kernels", file=sys.stderr)
    ext_modules = []

setup(ext_modules=ext_modules)

from setuptools import setup
from setuptools.extension import Extension

# The compiled core is optional: without Cython (or a C compiler) the
# package falls back to the pure-Python interpreter selected at import.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("sphx._speedups", ["src/sphx/_speedups.pyx"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled core is optional: subscan.kernels falls back to the NumPy
# implementations when subscan._core is missing.
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "subscan._core",
                ["src/subscan/_core.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)

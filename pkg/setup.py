import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "kinseg.backend._ckernels",
                ["src/kinseg/backend/_ckernels.pyx"],
                extra_compile_args=["-O3"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Without Cython the package still installs; the numpy backend is used.
    extensions = []

setup(ext_modules=extensions)

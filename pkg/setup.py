"""Build the optional compiled kernel extension.

The package works without it (pure-Python kernels are selected at import
time), but the compiled core is what makes the campaign and benchmark
runtimes comfortable.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "dataseal._kernels._core",
                sources=["src/dataseal/_kernels/_core.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    )

setup(ext_modules=extensions)

"""Builds the optional Cython flow kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile is downgraded to a warning.
"""
import warnings

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "srvqa.flow._ckernels",
                ["src/srvqa/flow/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover
    warnings.warn(f"building without compiled flow kernels: {exc}")
    ext_modules = []

setup(ext_modules=ext_modules)

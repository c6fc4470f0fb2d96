"""Build script for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile downgrades to a warning instead of
aborting the install.
"""
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/polyshare/kernels/_ringcore.pyx"],
        compiler_directives={"language_level": "3"},
    )
    for ext in ext_modules:
        ext.include_dirs.append(np.get_include())
except Exception as exc:  # pragma: no cover - build environment dependent
    sys.stderr.write(f"warning: skipping compiled kernels ({exc}); "
                     "numpy fallback will be used\n")
    ext_modules = []

setup(ext_modules=ext_modules)

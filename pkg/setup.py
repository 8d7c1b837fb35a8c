import sys

import numpy as np
from setuptools import Extension, setup

# Vectorised log comes from glibc's libmvec. The fast-math flags go to the
# compiler only: linking with -ffast-math would pull in the startup object
# that flushes denormals for the whole process.
BASE = ["-O3", "-ffast-math"]
LIBS = ["mvec", "m"] if sys.platform.startswith("linux") else []


def ext(name, flags):
    return Extension(
        f"tpsh.{name}",
        [f"src/tpsh/{name}.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=flags,
        libraries=LIBS,
        optional=True,
    )


try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; tpsh.core falls back to numpy
    ext_modules = []
else:
    exts = [ext("_kernels", BASE)]
    if sys.platform.startswith("linux"):
        exts.append(ext("_kernels_avx2", BASE + ["-mavx2", "-mfma"]))
    ext_modules = cythonize(exts, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)

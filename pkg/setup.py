"""Build the optional Cython kernels; the package falls back to pure Python without them."""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                f"circuitrec._kernels.{name}",
                [f"src/circuitrec/_kernels/{name}.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
            for name in ("_cfh", "_cpool")
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

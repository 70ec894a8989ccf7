"""Build script for the optional compiled NB-GLM kernel.

The extension is optional: if Cython or a C compiler is unavailable the
package installs anyway and `vctrace.delabel.kernels` falls back to the
pure-numpy implementation at import time.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext = Extension(
        "vctrace.delabel._nbglm",
        ["src/vctrace/delabel/_nbglm.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext.optional = True
    ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})
except ImportError:
    pass

setup(ext_modules=ext_modules)

"""Build script for the optional compiled LSTM-cell kernels.

The package is fully functional without the extension (a numpy fallback is
selected at import time); the extension just makes the per-frame cell loops
fast. If Cython or a C compiler is unavailable the build degrades to
pure-Python mode instead of failing.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "trajlstm.kernels._lstm_ext",
                ["src/trajlstm/kernels/_lstm_ext.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled kernels are an optional speedup; srtc falls back to the
# numpy implementations in srtc._kernels._numpy when the extension is
# missing (see srtc/_kernels/__init__.py).
extensions = [
    Extension(
        "srtc._kernels._speed",
        ["src/srtc/_kernels/_speed.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)

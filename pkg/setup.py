import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# -ffp-contract=off keeps a*b+c as separate IEEE mul and add, so the compiled
# kernels are bit-identical to the numpy fallback. No -ffast-math for the
# same reason.
extensions = [
    Extension(
        "convlower._kernels",
        ["src/convlower/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
    if cythonize
    else [],
)

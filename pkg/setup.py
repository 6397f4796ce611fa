from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "trimbrw._kernels",
        ["src/trimbrw/_kernels.pyx"],
        language="c++",
        # keep IEEE semantics so the compiled and pure-Python engines agree bit for bit
        extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-numpy fallback only
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "platesim._kernels",
                ["src/platesim/_kernels.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "cavityobs._ckernel",
        ["src/cavityobs/_ckernel.pyx"],
        extra_compile_args=["-O2", "-ffp-contract=off"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)

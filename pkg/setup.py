from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension("cfpersuade._grasp_core", ["src/cfpersuade/_grasp_core.pyx"]),
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    ),
)

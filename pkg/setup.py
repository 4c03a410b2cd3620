from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "relscore._kernels._boxops_cy",
                ["src/relscore/_kernels/_boxops_cy.pyx"],
                optional=True,
            )
        ],
        language_level="3",
    )
except ImportError:
    # No Cython at build time: the package falls back to the pure-Python
    # kernels selected at import in relscore.geometry.
    ext_modules = []

setup(ext_modules=ext_modules)

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; scsim.kernels falls back
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("scsim._ckernels", ["src/scsim/_ckernels.pyx"], optional=True)],
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )

setup(ext_modules=ext_modules)

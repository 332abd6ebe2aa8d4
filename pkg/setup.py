"""Builds the optional compiled inner-solver kernel.

If Cython or a C compiler is missing the package installs without it and
falls back to the pure-numpy kernel at import time.
"""
from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    ext_modules = cythonize(["src/hybris/inner/_ckernel.pyx"], quiet=True,
                            compiler_directives={"language_level": 3})
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"compiled kernel skipped: {exc}")


try:
    from setuptools.command.build_ext import build_ext

    class OptionalBuildExt(build_ext):
        def run(self):
            try:
                super().run()
            except Exception as exc:  # pragma: no cover
                print(f"compiled kernel build failed, using fallback: {exc}")

        def build_extension(self, ext):
            try:
                super().build_extension(ext)
            except Exception as exc:  # pragma: no cover
                print(f"compiled kernel build failed, using fallback: {exc}")

    cmdclass = {"build_ext": OptionalBuildExt}
except ImportError:  # pragma: no cover
    cmdclass = {}

setup(ext_modules=ext_modules, cmdclass=cmdclass)

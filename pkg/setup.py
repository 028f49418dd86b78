"""Build script for the optional compiled Gram-matrix core.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so the extension is marked optional: if no C
compiler or Cython is available the install proceeds as pure Python.
Vectorization flags are probed at build time and dropped when the
toolchain does not support them.
"""

import os
import tempfile

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

# A loop the optimizer turns into vector math-library calls, so the probe
# exercises both the compile flags and the link line (-lmvec on glibc).
_PROBE_SRC = """\
#include <math.h>
int main(void) {
    double a[256];
    for (int i = 0; i < 256; ++i) a[i] = (double) i * 0.01;
    for (int i = 0; i < 256; ++i) a[i] = exp(a[i]);
    volatile double s = 0.0;
    for (int i = 0; i < 256; ++i) s += a[i];
    return (int) s;
}
"""

_FLAG_SETS = [
    (["-O3", "-ffast-math", "-funroll-loops", "-march=native"], ["mvec", "m"]),
    (["-O3", "-ffast-math", "-funroll-loops"], ["mvec", "m"]),
    (["-O3", "-ffast-math"], ["m"]),
    (["-O3"], []),
    ([], []),
]


class _TunedBuildExt(build_ext):
    def _works(self, flags, libraries) -> bool:
        with tempfile.TemporaryDirectory() as td:
            src = os.path.join(td, "probe.c")
            with open(src, "w") as fh:
                fh.write(_PROBE_SRC)
            try:
                objs = self.compiler.compile([src], output_dir=td, extra_postargs=list(flags))
                self.compiler.link_executable(
                    objs, os.path.join(td, "probe"), libraries=list(libraries)
                )
            except Exception:
                return False
        return True

    def build_extensions(self):
        for flags, libraries in _FLAG_SETS:
            if self._works(flags, libraries):
                for ext in self.extensions:
                    ext.extra_compile_args = list(flags)
                    ext.libraries = list(libraries)
                break
        super().build_extensions()


ext_modules = []
cmdclass = {}
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "harmonicgp.backend._core",
                ["src/harmonicgp/backend/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        compiler_directives={"language_level": 3},
    )
    cmdclass["build_ext"] = _TunedBuildExt
except Exception:
    ext_modules = []
    cmdclass = {}

setup(ext_modules=ext_modules, cmdclass=cmdclass)

"""Import-time selection of the stepping backend.

The compiled kernel (Cython, :mod:`sgalign._speedup`) covers fixed-step RK4
over networks of built-in zoo models, which dominates the runtime of the
experiment catalog.  When the extension is not built, everything runs
through the generic Python loop in :mod:`sgalign.integrate` instead.  See
``benchmarks/bench_backends.py`` for a timing comparison.
"""

try:
    from . import _speedup as _compiled
    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - depends on build environment
    _compiled = None
    HAVE_COMPILED = False


def kernel():
    if _compiled is None:
        raise RuntimeError("compiled kernel is not available")
    return _compiled

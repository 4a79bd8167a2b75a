"""Backend dispatch for the hot DP kernel.

The compiled extension is preferred; the pure-numpy fallback is selected when
the extension is unavailable or when ``HJGAMMA_PURE_PYTHON`` is set in the
environment. Both backends are bit-identical; ``benchmarks/bench_kernels.py``
compares their throughput.
"""

import os

if os.environ.get("HJGAMMA_PURE_PYTHON"):
    from ._numpy_core import bellman_backup

    BACKEND = "numpy"
else:
    try:
        from ._core import bellman_backup

        BACKEND = "cython"
    except ImportError:  # extension not built; fall back silently
        from ._numpy_core import bellman_backup

        BACKEND = "numpy"

__all__ = ["bellman_backup", "BACKEND"]

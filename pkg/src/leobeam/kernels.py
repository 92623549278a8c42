"""Rate kernel selection.

Prefers the compiled extension, falls back to the numpy implementation;
LEOBEAM_PURE_PYTHON=1 forces the fallback.  Both implementations share
the same contract and agree to floating-point noise (see the parity
tests and benchmarks/bench_kernels.py).
"""

import os

if os.environ.get("LEOBEAM_PURE_PYTHON") == "1":
    from . import _kernels_py as _impl

    IMPLEMENTATION = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        IMPLEMENTATION = "cython"
    except ImportError:
        from . import _kernels_py as _impl

        IMPLEMENTATION = "python"

slot_rates = _impl.slot_rates

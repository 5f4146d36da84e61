"""Backend dispatch for the numeric hot kernels.

Two interchangeable backends exist:

* ``numba`` (default): JIT-compiled loops from ``_numba.py``.
* ``numpy``: vectorized fallback from ``_numpy.py``.

Set ``HOPKIT_PURE_NUMPY=1`` in the environment to force the numpy path.
If numba is not importable the fallback is selected automatically. The
choice is made once at import time; both backends compute identical
results (same expressions, same evaluation order, no fastmath).

``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

from . import _numpy

_FORCE_NUMPY = os.environ.get("HOPKIT_PURE_NUMPY", "").strip() not in ("", "0")

if _FORCE_NUMPY:
    _impl = _numpy
    BACKEND = "numpy"
else:
    try:
        from . import _numba as _impl  # noqa: F401

        BACKEND = "numba"
    except ImportError:
        _impl = _numpy
        BACKEND = "numpy"

fk_batch = _impl.fk_batch
quat_mul_batch = _impl.quat_mul_batch
quat_rotate_batch = _impl.quat_rotate_batch


def backend_name() -> str:
    """Name of the active kernel backend: 'numba' or 'numpy'."""
    return BACKEND

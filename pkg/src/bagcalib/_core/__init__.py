"""Backend selection for the bag-calibration inner loop.

The compiled Cython kernel is used when its extension module is importable;
otherwise the NumPy twin takes over.  Set ``BAGCALIB_BACKEND=python`` or
``BAGCALIB_BACKEND=compiled`` to force a choice (the latter raises if the
extension is missing).  ``benchmarks/bench_backends.py`` compares the two.
"""

from __future__ import annotations

import os

_requested = os.environ.get("BAGCALIB_BACKEND", "").strip().lower()

if _requested == "python":
    from . import pykernel as _impl
elif _requested == "compiled":
    from . import kernel as _impl  # type: ignore[no-redef]
else:
    try:
        from . import kernel as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import pykernel as _impl

bag_gweights = _impl.bag_gweights
BACKEND = _impl.BACKEND_NAME

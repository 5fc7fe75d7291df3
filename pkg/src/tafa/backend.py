"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used. TAFA_FORCE_NUMPY=1 forces the fallback (useful for the
kernel parity tests and the benchmark).
"""

from __future__ import annotations

import os

from tafa import _kernels_py

if os.environ.get("TAFA_FORCE_NUMPY") == "1":
    _impl = _kernels_py
else:
    try:
        from tafa import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND_NAME

posterior_from_logdens = _impl.posterior_from_logdens
label_prob_columns = _impl.label_prob_columns
knn_select = _impl.knn_select


def available_backends():
    """Importable kernel implementations, keyed by name."""
    impls = {_kernels_py.BACKEND_NAME: _kernels_py}
    try:
        from tafa import _kernels

        impls[_kernels.BACKEND_NAME] = _kernels
    except ImportError:
        pass
    return impls

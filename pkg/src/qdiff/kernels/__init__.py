"""Hot numeric kernels with a switchable backend.

The backend is chosen once, at import, from the ``QDIFF_NUMBA`` environment
variable: ``1`` (default when numba imports) uses the ``@njit`` kernels,
``0`` forces the pure-numpy reference path. Both modules stay importable so
tests and the benchmark can compare them side by side.
"""

import os

from . import _numpy as numpy_backend

try:
    from . import _numba as numba_backend
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_backend = None


def _want_numba():
    flag = os.environ.get("QDIFF_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off", "")


USE_NUMBA = numba_backend is not None and _want_numba()
backend = numba_backend if USE_NUMBA else numpy_backend
BACKEND_NAME = "numba" if USE_NUMBA else "numpy"

masked_softmax = backend.masked_softmax
masked_softmax_backward = backend.masked_softmax_backward
layernorm = backend.layernorm
layernorm_backward = backend.layernorm_backward
# numpy's vectorised tanh beats a scalar loop here (see benchmarks/), so the
# GELU pair always takes the reference path; the numba twin stays for comparison
gelu = numpy_backend.gelu
gelu_backward = numpy_backend.gelu_backward
pegasos_epochs = backend.pegasos_epochs
bootstrap_mean_diffs = backend.bootstrap_mean_diffs

__all__ = [
    "BACKEND_NAME",
    "USE_NUMBA",
    "numpy_backend",
    "numba_backend",
    "masked_softmax",
    "masked_softmax_backward",
    "layernorm",
    "layernorm_backward",
    "gelu",
    "gelu_backward",
    "pegasos_epochs",
    "bootstrap_mean_diffs",
]

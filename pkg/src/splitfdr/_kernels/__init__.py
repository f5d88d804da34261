"""Kernel backend selection.

The compiled extension is preferred when importable; setting the environment
variable ``SPLITFDR_FORCE_FALLBACK=1`` pins the pure-numpy implementations.
Both backends are always importable side by side (``py_*`` / ``c_*``) for
parity tests and benchmarks.
"""

import os

from . import _pykernels

py_lloyd2_batch = _pykernels.lloyd2_batch
py_poisson_quantile_matrix = _pykernels.poisson_quantile_matrix

c_lloyd2_batch = None
c_poisson_quantile_matrix = None
try:
    from . import _ckernels

    c_lloyd2_batch = _ckernels.lloyd2_batch
    c_poisson_quantile_matrix = _ckernels.poisson_quantile_matrix
except ImportError:
    _ckernels = None

_force_fallback = os.environ.get("SPLITFDR_FORCE_FALLBACK", "") not in ("", "0")

if _ckernels is not None and not _force_fallback:
    BACKEND = "compiled"
    lloyd2_batch = c_lloyd2_batch
    poisson_quantile_matrix = c_poisson_quantile_matrix
else:
    BACKEND = "python"
    lloyd2_batch = py_lloyd2_batch
    poisson_quantile_matrix = py_poisson_quantile_matrix

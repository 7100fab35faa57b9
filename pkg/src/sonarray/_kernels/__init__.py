"""Hot-loop kernels.

The compiled extension is used when it was built; otherwise the numpy
versions in :mod:`._pykernels` are used.  Setting ``SONARRAY_PURE_PYTHON=1``
forces the fallback.  :data:`BACKEND` names the active implementation.
"""

import os

from . import _pykernels

if os.environ.get("SONARRAY_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

grid_energies = _impl.grid_energies
region_energies = _impl.region_energies
multi_source_search = _impl.multi_source_search
observation_likelihoods = _impl.observation_likelihoods

__all__ = [
    "BACKEND",
    "grid_energies",
    "multi_source_search",
    "observation_likelihoods",
    "region_energies",
]

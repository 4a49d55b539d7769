"""Kernel backend selection.

The compiled extension ``gnnspace._ckernels`` is used when it was built;
otherwise the numpy fallback in ``gnnspace._pykernels`` is loaded. Set
``GNNSPACE_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from gnnspace import _pykernels

if os.environ.get("GNNSPACE_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from gnnspace import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def segment_sum(values, seg, num_segments, impl=None):
    return (impl or _impl).segment_sum(_f64(values), _i64(seg), int(num_segments))


def segment_max(values, seg, num_segments, impl=None):
    return (impl or _impl).segment_max(_f64(values), _i64(seg), int(num_segments))


def bfs_distance_sum(indptr, indices, n, impl=None):
    total, pairs = (impl or _impl).bfs_distance_sum(_i64(indptr), _i64(indices), int(n))
    return int(total), int(pairs)


def triangle_counts(indptr, indices, n, impl=None):
    return np.asarray((impl or _impl).triangle_counts(_i64(indptr), _i64(indices), int(n)))


def pair_counts(x, y, impl=None):
    c, d, tx, ty = (impl or _impl).pair_counts(_f64(x), _f64(y))
    return int(c), int(d), int(tx), int(ty)


def available_backends():
    """Mapping of backend name to implementation module, for tests and benchmarks."""
    out = {"python": _pykernels}
    try:
        from gnnspace import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out

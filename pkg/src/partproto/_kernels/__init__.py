"""Numeric kernel backend selection.

The compiled extension accelerates the loop-shaped kernels (Lloyd
iterations, SLIC rounds, bilinear resampling); it is preferred when
built and not disabled via PARTPROTO_FORCE_FALLBACK=1. The dot-product
shaped kernels (cosine parts, squared distances) are BLAS-bound and
always use the numpy implementation, which benchmarks faster than a
compiled loop at these sizes.
"""

import os

from . import _numpy

if os.environ.get("PARTPROTO_FORCE_FALLBACK", "") not in ("", "0"):
    _impl = _numpy
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _numpy

BACKEND = _impl.BACKEND_NAME

cosine_parts = _numpy.cosine_parts
sqdist_matrix = _numpy.sqdist_matrix
kmeans_lloyd = _impl.kmeans_lloyd
slic_iterate = _impl.slic_iterate
bilinear_resize = _impl.bilinear_resize

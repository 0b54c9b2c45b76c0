"""DTW and normalized DTW between sub-trajectories.

nDTW divides the warping cost by the geometric mean of the two windows'
path lengths, which makes the measure invariant under translation, rotation
and uniform scaling of both arguments together.  Stationary windows (zero
path length) have no defined nDTW to anything; such pairs are reported as
+inf and excluded from neighbor structures upstream.

Not a metric: the triangle inequality does not hold and nothing here or in
the index may assume it.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .model import GeoPoint, SubTrajectory


def _pts(t) -> np.ndarray:
    if isinstance(t, SubTrajectory):
        return t.points
    a = np.ascontiguousarray(t, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 2:
        raise ValueError(f"expected (l, 2) point array, got shape {a.shape}")
    return a


def euclidean(a: GeoPoint, b: GeoPoint) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2)


def dtw(t, q) -> float:
    """Warping cost between two point sequences (equal length not required).

    O(l*h) dynamic program over two rolling rows; strict float64 so the
    result is bit-identical to exhaustive path enumeration.
    """
    a, b = _pts(t), _pts(q)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("dtw of an empty sequence")
    return float(_kernels.dtw_pair(a, b))


def path_length(t) -> float:
    """Sum of consecutive segment lengths, meters."""
    return float(_kernels.path_len(_pts(t)))


def ndtw(t, q) -> float:
    """Scale-normalized DTW: dtw / (sqrt(len(t)) * sqrt(len(q))).

    Returns +inf when either window is stationary.
    """
    a, b = _pts(t), _pts(q)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("ndtw of an empty sequence")
    return float(_kernels.ndtw_pair(a, _kernels.path_len(a), b, _kernels.path_len(b)))

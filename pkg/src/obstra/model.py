"""Trajectory data model: points, trajectories, sliding-window partitioning.

All coordinates are planar meters (east, north).  Projection from lat/lon
lives in :mod:`obstra.geo`; everything downstream of ingestion works on a
metric plane so Euclidean distances are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

import numpy as np


class GeoPoint(NamedTuple):
    """A single planar point in meters (x east, y north)."""

    x: float
    y: float


@dataclass(frozen=True)
class PartitionParams:
    """Sliding-window parameters: window length ``w`` and step ``s`` (points)."""

    w: int = 6
    s: int = 1

    def __post_init__(self):
        if not (0 < self.s < self.w):
            raise ValueError(f"require 0 < s < w, got w={self.w}, s={self.s}")


class Trajectory:
    """An ordered sequence of planar points with uniform time spacing.

    The point array is owned by the trajectory and frozen after construction;
    sub-trajectories are views into it.
    """

    __slots__ = ("id", "points")

    def __init__(self, id: str, points: np.ndarray | Iterable):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"trajectory {id!r}: points must be (l, 2), got {pts.shape}")
        if pts.shape[0] < 2:
            raise ValueError(f"trajectory {id!r}: need at least 2 points, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"trajectory {id!r}: non-finite coordinates")
        pts.flags.writeable = False
        self.id = id
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    def __repr__(self) -> str:
        return f"Trajectory(id={self.id!r}, length={len(self)})"


class SubTrajectory:
    """A fixed-width window of ``w`` consecutive points of a parent trajectory.

    ``points`` is a zero-copy view into the parent array.  Identity is the
    pair (parent_id, index_in_parent); two windows cut from equal geometry
    but different parents are distinct.
    """

    __slots__ = ("parent_id", "index_in_parent", "start_offset", "points")

    def __init__(self, parent_id: str, index_in_parent: int, start_offset: int,
                 points: np.ndarray):
        self.parent_id = parent_id
        self.index_in_parent = index_in_parent
        self.start_offset = start_offset
        self.points = points

    @property
    def w(self) -> int:
        return self.points.shape[0]

    @property
    def vector(self) -> np.ndarray:
        """The window read as a flat 2w-dimensional vector (a view)."""
        return self.points.reshape(-1)

    @property
    def last_point(self) -> GeoPoint:
        return GeoPoint(float(self.points[-1, 0]), float(self.points[-1, 1]))

    def key(self) -> tuple[str, int]:
        return (self.parent_id, self.index_in_parent)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SubTrajectory):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return (f"SubTrajectory(parent={self.parent_id!r}, "
                f"index={self.index_in_parent}, offset={self.start_offset})")


def partition(traj: Trajectory, params: PartitionParams) -> list[SubTrajectory]:
    """Cut a trajectory into overlapping windows of ``w`` points every ``s`` points.

    Windows are T[i*s : i*s + w] for i = 0..floor((l-w)/s); trailing points
    that do not fill a whole window are dropped.  A trajectory shorter than
    ``w`` yields an empty list (not an error).
    """
    l = len(traj)
    w, s = params.w, params.s
    if l < w:
        return []
    n = (l - w) // s + 1
    return [
        SubTrajectory(traj.id, i, i * s, traj.points[i * s: i * s + w])
        for i in range(n)
    ]


class SubTrajectoryStore:
    """All windows of a corpus, addressable by (parent_id, index_in_parent)."""

    def __init__(self, trajectories: Iterable[Trajectory], params: PartitionParams):
        self.params = params
        self.windows: list[SubTrajectory] = []
        self._by_key: dict[tuple[str, int], SubTrajectory] = {}
        self._count_by_parent: dict[str, int] = {}
        for traj in trajectories:
            if traj.id in self._count_by_parent:
                raise ValueError(f"duplicate trajectory id {traj.id!r}")
            subs = partition(traj, params)
            self._count_by_parent[traj.id] = len(subs)
            for sub in subs:
                self.windows.append(sub)
                self._by_key[sub.key()] = sub

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)

    def get(self, parent_id: str, index_in_parent: int) -> Optional[SubTrajectory]:
        return self._by_key.get((parent_id, index_in_parent))

    def window_count(self, parent_id: str) -> int:
        return self._count_by_parent.get(parent_id, 0)


def succ(t: SubTrajectory, store: SubTrajectoryStore) -> Optional[SubTrajectory]:
    """The next overlapping window of the same parent, or None for the last one."""
    return store.get(t.parent_id, t.index_in_parent + 1)

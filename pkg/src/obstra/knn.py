"""Layered navigable-graph kNN index over sub-trajectory windows under nDTW.

The graph is a small-world hierarchy: each node draws a geometric level,
links to a diversity-pruned neighbor set per layer, and queries descend
greedily from the top layer before a beam search at layer 0.  All edge and
beam distances are nDTW (never Euclidean on the flat vectors), and nothing
assumes the triangle inequality.

Two query flavors: plain kNN, and distinct kNN which keeps at most one (the
nearest) window per parent trajectory and never returns the query's own
parent.  Exact linear-scan oracles back both for recall measurement.

Stationary windows (zero path length) have no finite nDTW to anything and
are excluded from the index entirely.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .model import PartitionParams, SubTrajectory, SubTrajectoryStore

MAGIC = b"OBSTRIDX"
FORMAT_VERSION = 1

# list of (SubTrajectory, ndtw) sorted ascending
NeighborList = list


@dataclass(frozen=True)
class IndexParams:
    """Graph-construction and query knobs."""

    k: int = 8
    M: int = 16
    ef_construction: int = 200
    ef_search: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.M < 2:
            raise ValueError(f"M must be >= 2, got {self.M}")
        if self.ef_search < self.k:
            raise ValueError(
                f"ef_search ({self.ef_search}) must be >= k ({self.k})")
        if self.ef_construction < 1:
            raise ValueError("ef_construction must be >= 1")


class CorpusIndex:
    """All windows of one corpus plus the navigable graph over them.

    Immutable once built; concurrently readable.  Construction is
    single-threaded and deterministic given the seed and input order.
    """

    def __init__(self):
        # populated by build()/load(); not for direct use
        self.pparams: PartitionParams = None
        self.iparams: IndexParams = None
        self.corpus_kind = "reference"
        self.origin = None          # (lat0, lon0) used at projection time
        self.parent_ids: list = []
        self.data: np.ndarray = None          # (n, w, 2)
        self.plens: np.ndarray = None         # (n,)
        self.parents: np.ndarray = None       # (n,) parent codes
        self.idx_in_parent: np.ndarray = None
        self.succ_idx: np.ndarray = None      # (n,) global id of succ or -1
        self.levels: np.ndarray = None
        self.adj: list = []                   # per level: (n, cap+1) int64
        self.deg: list = []
        self.entry = -1
        self.max_level = -1
        self.dk_ids = None                    # (n, k) precomputed distinct kNN
        self.dk_dists = None
        self.dk_count = None
        self._evals = np.zeros(1, np.int64)

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, trajectories, pparams: PartitionParams,
              iparams: IndexParams, corpus_kind: str = "reference",
              precompute_distinct: bool = False, origin=None):
        store = SubTrajectoryStore(trajectories, pparams)
        if len(store) == 0:
            raise ValueError("no trajectory long enough to partition")
        self = cls()
        self.pparams = pparams
        self.iparams = iparams
        self.corpus_kind = corpus_kind
        self.origin = origin

        kept = [s for s in store if K.path_len(s.points) > 0.0]
        if not kept:
            raise ValueError("all windows are stationary; nothing to index")
        n = len(kept)
        w = pparams.w
        code = {}
        for s in kept:
            if s.parent_id not in code:
                code[s.parent_id] = len(code)
        self.parent_ids = list(code)
        self.data = np.empty((n, w, 2), np.float64)
        self.parents = np.empty(n, np.int64)
        self.idx_in_parent = np.empty(n, np.int64)
        for g, s in enumerate(kept):
            self.data[g] = s.points
            self.parents[g] = code[s.parent_id]
            self.idx_in_parent[g] = s.index_in_parent
        self.plens = np.array([K.path_len(self.data[g]) for g in range(n)])
        gid = {(s.parent_id, s.index_in_parent): g for g, s in enumerate(kept)}
        self.succ_idx = np.array(
            [gid.get((s.parent_id, s.index_in_parent + 1), -1) for s in kept],
            np.int64)
        self.levels = np.zeros(n, np.int64)
        self._finish_derived()
        self._build_graph()
        if precompute_distinct:
            self._precompute_distinct()
        return self

    def _finish_derived(self):
        """Objects and scratch derived from the stored arrays."""
        n, w = self.data.shape[0], self.data.shape[1]
        s = self.pparams.s
        self.trajectory_count = len(self.parent_ids)
        self.subs = [
            SubTrajectory(self.parent_ids[self.parents[g]],
                          int(self.idx_in_parent[g]),
                          int(self.idx_in_parent[g]) * s,
                          self.data[g])
            for g in range(n)
        ]
        self._gid = {t.key(): g for g, t in enumerate(self.subs)}
        order = sorted(range(len(self.parent_ids)),
                       key=lambda c: self.parent_ids[c])
        self._parent_lex = np.empty(len(order), np.int64)
        for rank, c in enumerate(order):
            self._parent_lex[c] = rank
        self._visited = np.zeros(n, np.int64)
        self._epoch = 0
        cap = max(self.iparams.ef_construction, self.iparams.ef_search,
                  2 * self.iparams.M + 1) + 1
        self._cd = np.empty(n + 1, np.float64)
        self._ci = np.empty(n + 1, np.int64)
        self._rd = np.empty(cap, np.float64)
        self._ri = np.empty(cap, np.int64)
        self._sel = np.empty(2 * self.iparams.M + 1, np.int64)
        self._dpa = np.empty(w, np.float64)
        self._dpb = np.empty(w, np.float64)

    def _cap(self, level: int) -> int:
        return 2 * self.iparams.M if level == 0 else self.iparams.M

    def _ensure_level(self, level: int):
        n = self.data.shape[0]
        while len(self.adj) <= level:
            l = len(self.adj)
            self.adj.append(np.zeros((n, self._cap(l) + 1), np.int64))
            self.deg.append(np.zeros(n, np.int64))

    def _build_graph(self):
        ip = self.iparams
        rng = np.random.default_rng(ip.seed)
        ml = 1.0 / math.log(ip.M)
        n = self.data.shape[0]
        data, plens = self.data, self.plens
        for i in range(n):
            level = int(-math.log(1.0 - rng.random()) * ml)
            self.levels[i] = level
            self._ensure_level(level)
            if self.entry < 0:
                self.entry = i
                self.max_level = level
                continue
            q = data[i]
            qp = plens[i]
            cur = self.entry
            curd = float(K.ndtw_pair(q, qp, data[cur], plens[cur]))
            self._evals[0] += 1
            for l in range(self.max_level, level, -1):
                cur, curd = K.greedy_layer(
                    q, qp, data, plens, self.adj[l], self.deg[l], cur, curd,
                    self._dpa, self._dpb, self._evals)
            for l in range(min(level, self.max_level), -1, -1):
                self._epoch += 1
                rsize = K.search_plain(
                    q, qp, data, plens, self.adj[l], self.deg[l], cur, curd,
                    ip.ef_construction, self._visited, self._epoch,
                    self._cd, self._ci, self._rd, self._ri,
                    self._dpa, self._dpb, self._evals)
                nsel = K.select_heuristic(
                    data, plens, self._ri, self._rd, rsize, ip.M, self._sel,
                    self._dpa, self._dpb, self._evals)
                K.connect_node(
                    data, plens, i, self._sel, nsel, self.adj[l], self.deg[l],
                    self._cap(l), self._dpa, self._dpb, self._evals)
                am = int(np.argmin(self._rd[:rsize]))
                cur = int(self._ri[am])
                curd = float(self._rd[am])
            if level > self.max_level:
                self.entry = i
                self.max_level = level

    def _precompute_distinct(self):
        k = self.iparams.k
        n = self.data.shape[0]
        self.dk_ids = np.full((n, k), -1, np.int64)
        self.dk_dists = np.full((n, k), np.inf)
        self.dk_count = np.zeros(n, np.int64)
        for g in range(n):
            res = self._search_distinct_ids(
                self.data[g], self.plens[g], k, int(self.parents[g]))
            self.dk_count[g] = len(res)
            for j, (d, gg) in enumerate(res):
                self.dk_ids[g, j] = gg
                self.dk_dists[g, j] = d

    # -- queries ------------------------------------------------------------

    def __len__(self):
        return self.data.shape[0]

    def window(self, g: int) -> SubTrajectory:
        return self.subs[g]

    def gid_of(self, t: SubTrajectory) -> Optional[int]:
        return self._gid.get(t.key())

    def _order_key(self, d: float, g: int):
        # Def-6 tie break: (distance, parent id, index in parent)
        return (d, int(self._parent_lex[self.parents[g]]),
                int(self.idx_in_parent[g]))

    def _sorted_pairs(self, ds, gs, k: int):
        pairs = sorted(
            ((float(d), int(g)) for d, g in zip(ds, gs)
             if math.isfinite(d)),
            key=lambda p: self._order_key(p[0], p[1]))
        return pairs[:k]

    def _qpts(self, query):
        if isinstance(query, SubTrajectory):
            pts = np.ascontiguousarray(query.points)
        else:
            pts = np.ascontiguousarray(query, dtype=np.float64)
        return pts, float(K.path_len(pts))

    def _descend(self, q, qp):
        cur = self.entry
        curd = float(K.ndtw_pair(q, qp, self.data[cur], self.plens[cur]))
        self._evals[0] += 1
        for l in range(self.max_level, 0, -1):
            cur, curd = K.greedy_layer(
                q, qp, self.data, self.plens, self.adj[l], self.deg[l],
                cur, curd, self._dpa, self._dpb, self._evals)
        return cur, curd

    def knn(self, query, k: Optional[int] = None, exact: bool = False):
        """Plain kNN: ascending nDTW, k results (fewer on tiny corpora)."""
        kk = self.iparams.k if k is None else k
        q, qp = self._qpts(query)
        if qp <= 0.0:
            return []
        if exact:
            out = np.empty(len(self), np.float64)
            K.ndtw_to_all(q, qp, self.data, self.plens, out)
            self._evals[0] += len(self)
            top = np.lexsort((self.idx_in_parent,
                              self._parent_lex[self.parents], out))[:kk]
            pairs = [(float(out[g]), int(g)) for g in top
                     if math.isfinite(out[g])]
        else:
            ef = max(self.iparams.ef_search, kk)
            cur, curd = self._descend(q, qp)
            self._epoch += 1
            rsize = K.search_plain(
                q, qp, self.data, self.plens, self.adj[0], self.deg[0],
                cur, curd, ef, self._visited, self._epoch,
                self._cd, self._ci, self._rd, self._ri,
                self._dpa, self._dpb, self._evals)
            pairs = self._sorted_pairs(self._rd[:rsize], self._ri[:rsize], kk)
        return [(self.subs[g], d) for d, g in pairs]

    def _exclude_code(self, query) -> int:
        if isinstance(query, SubTrajectory):
            for c, pid in enumerate(self.parent_ids):
                if pid == query.parent_id:
                    return c
        return -1

    def _search_distinct_ids(self, q, qp, kk: int, exclude_code: int):
        """Graph distinct search; returns [(d, gid)] sorted, <= kk entries."""
        avail = self.trajectory_count - (1 if exclude_code >= 0 else 0)
        if avail <= 0:
            return []
        ef = min(max(self.iparams.ef_search, kk), avail)
        cur, curd = self._descend(q, qp)
        self._epoch += 1
        rsize = K.search_distinct(
            q, qp, self.data, self.plens, self.parents, exclude_code,
            self.adj[0], self.deg[0], cur, curd, ef,
            self._visited, self._epoch, self._cd, self._ci,
            self._rd, self._ri, self._dpa, self._dpb, self._evals)
        return self._sorted_pairs(self._rd[:rsize], self._ri[:rsize], kk)

    def distinct_knn(self, query, k: Optional[int] = None,
                     exact: bool = False):
        """kNN with pairwise-distinct parents.

        At most one (the nearest) window per parent; the query's own parent
        is excluded whenever the query is a window of this corpus, so a
        window never supports its own density.
        """
        kk = self.iparams.k if k is None else k
        q, qp = self._qpts(query)
        if qp <= 0.0:
            return []
        exclude_code = self._exclude_code(query)
        if exact:
            pairs = self._exact_distinct_ids(q, qp, kk, exclude_code)
        else:
            g = self.gid_of(query) if isinstance(query, SubTrajectory) else None
            if (not exact and self.dk_ids is not None and g is not None
                    and kk <= self.iparams.k):
                cnt = int(self.dk_count[g])
                pairs = [(float(self.dk_dists[g, j]), int(self.dk_ids[g, j]))
                         for j in range(min(cnt, kk))]
            else:
                pairs = self._search_distinct_ids(q, qp, kk, exclude_code)
        return [(self.subs[g], d) for d, g in pairs]

    def _exact_distinct_ids(self, q, qp, kk: int, exclude_code: int):
        out = np.empty(len(self), np.float64)
        K.ndtw_to_all(q, qp, self.data, self.plens, out)
        self._evals[0] += len(self)
        order = np.lexsort((self.idx_in_parent,
                            self._parent_lex[self.parents], out))
        pairs = []
        seen = set()
        for g in order:
            c = int(self.parents[g])
            if c == exclude_code or c in seen or not math.isfinite(out[g]):
                continue
            seen.add(c)
            pairs.append((float(out[g]), int(g)))
            if len(pairs) == kk:
                break
        return pairs

    def precomputed_distinct(self, g: int):
        """The stored distinct-kNN list of indexed window g."""
        if self.dk_ids is None:
            raise ValueError("index built without precomputed distinct lists")
        cnt = int(self.dk_count[g])
        return [(self.subs[int(self.dk_ids[g, j])], float(self.dk_dists[g, j]))
                for j in range(cnt)]

    @property
    def distance_evals(self) -> int:
        return int(self._evals[0])

    # -- persistence --------------------------------------------------------

    def save(self, path):
        """Versioned binary dump; save -> load -> save is byte-identical."""
        header = {
            "corpus_kind": self.corpus_kind,
            "entry": int(self.entry),
            "format": FORMAT_VERSION,
            "has_distinct": self.dk_ids is not None,
            "iparams": {
                "M": self.iparams.M,
                "ef_construction": self.iparams.ef_construction,
                "ef_search": self.iparams.ef_search,
                "k": self.iparams.k,
                "seed": self.iparams.seed,
            },
            "levels_present": len(self.adj),
            "max_level": int(self.max_level),
            "n": int(self.data.shape[0]),
            "origin": list(self.origin) if self.origin is not None else None,
            "parent_ids": self.parent_ids,
            "pparams": {"s": self.pparams.s, "w": self.pparams.w},
        }
        blob = json.dumps(header, sort_keys=True,
                          separators=(",", ":")).encode()
        with open(path, "wb") as fp:
            fp.write(MAGIC)
            fp.write(struct.pack("<I", FORMAT_VERSION))
            fp.write(struct.pack("<Q", len(blob)))
            fp.write(blob)
            for arr in self._array_manifest():
                np.lib.format.write_array(fp, arr, version=(1, 0))

    def _array_manifest(self):
        arrs = [self.data, self.plens, self.parents, self.idx_in_parent,
                self.succ_idx, self.levels]
        for l in range(len(self.adj)):
            arrs.append(self.adj[l])
            arrs.append(self.deg[l])
        if self.dk_ids is not None:
            arrs += [self.dk_ids, self.dk_dists, self.dk_count]
        return arrs

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fp:
            if fp.read(len(MAGIC)) != MAGIC:
                raise ValueError(f"{path}: not an index file")
            (version,) = struct.unpack("<I", fp.read(4))
            if version != FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported index version {version}")
            (hlen,) = struct.unpack("<Q", fp.read(8))
            header = json.loads(fp.read(hlen))
            self = cls()
            self.pparams = PartitionParams(**header["pparams"])
            self.iparams = IndexParams(**header["iparams"])
            self.corpus_kind = header["corpus_kind"]
            org = header["origin"]
            self.origin = tuple(org) if org is not None else None
            self.parent_ids = header["parent_ids"]
            self.entry = header["entry"]
            self.max_level = header["max_level"]
            rd = lambda: np.lib.format.read_array(fp)
            self.data = rd()
            self.plens = rd()
            self.parents = rd()
            self.idx_in_parent = rd()
            self.succ_idx = rd()
            self.levels = rd()
            for _ in range(header["levels_present"]):
                self.adj.append(rd())
                self.deg.append(rd())
            if header["has_distinct"]:
                self.dk_ids = rd()
                self.dk_dists = rd()
                self.dk_count = rd()
        self._finish_derived()
        return self


def build_index(trajectories, pparams: PartitionParams = None,
                iparams: IndexParams = None, precompute_distinct: bool = True,
                corpus_kind: str = "reference", origin=None) -> CorpusIndex:
    """Partition every trajectory and index all non-stationary windows."""
    return CorpusIndex.build(trajectories, pparams or PartitionParams(),
                             iparams or IndexParams(),
                             corpus_kind=corpus_kind,
                             precompute_distinct=precompute_distinct,
                             origin=origin)


def exact_knn(index: CorpusIndex, query, k: int):
    """Linear-scan plain kNN; ground truth for recall measurement."""
    return index.knn(query, k=k, exact=True)


def exact_distinct_knn(index: CorpusIndex, query, k: int):
    """Linear-scan distinct-parent kNN; ground truth for recall measurement."""
    return index.distinct_knn(query, k=k, exact=True)

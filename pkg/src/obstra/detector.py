"""Obstacle scoring and the flagged depth-first candidate search.

A reference window becomes a candidate when the fraction of its local
kernel mass that continues forward is significantly lower in the query
corpus than in the reference corpus (one-sided two-proportion z-test) and
both densities clear a support threshold.  The search walks the query
corpus: every query window fetches its nearest reference windows, scores
them, and recurses into the query window's own neighborhood while
candidates keep appearing.  Each query window is processed at most once,
so one detection pass is at most |query windows| neighborhood expansions.

Four independent optimizations are toggled by name:
  precomputed_ref_knn  reference distinct-kNN lists read from the index
  verdict_bitmap       each reference window scored at most once, and an
                       accepted window is claimed by a single obstacle
  skip_close_query     don't recurse into query windows within epsilon of
                       the current one
  copy_close_verdict   reuse the verdict of an already-decided reference
                       window within epsilon of the one under evaluation
With epsilon = 0 the last two never fire and the union of candidates is
identical to a fully unoptimized run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .density import DensityParams, DensityProfile, density_profile
from .knn import CorpusIndex
from .model import GeoPoint, SubTrajectory

ALL_OPTIMIZATIONS = frozenset(
    {"precomputed_ref_knn", "verdict_bitmap", "skip_close_query",
     "copy_close_verdict"})

Z_MODES = ("paper", "pooled")


@dataclass(frozen=True)
class DetectParams:
    tau: float = 1.645
    delta: float = 1.0
    k: int = 8
    epsilon: float = 0.0
    z_denominator_mode: str = "pooled"
    optimizations_enabled: frozenset = ALL_OPTIMIZATIONS

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.z_denominator_mode not in Z_MODES:
            raise ValueError(f"z_denominator_mode must be one of {Z_MODES}")
        unknown = set(self.optimizations_enabled) - ALL_OPTIMIZATIONS
        if unknown:
            raise ValueError(f"unknown optimizations: {sorted(unknown)}")


@dataclass
class Obstacle:
    """Last points of the accepted reference windows, with hull and heading."""

    candidate_subs: list
    points: list
    hull: list
    mean_heading: tuple


@dataclass
class DetectStats:
    queries_checked: int = 0
    candidates_tested: int = 0
    cache_hits: int = 0
    skips_close_query: int = 0
    copied_verdicts: int = 0
    distance_evals: int = 0

    @property
    def skips_taken(self) -> int:
        return self.skips_close_query + self.copied_verdicts


@dataclass
class DetectionResult:
    obstacles: list
    stats: DetectStats

    def candidate_union(self) -> set:
        """Keys of all accepted reference windows across obstacles."""
        out = set()
        for ob in self.obstacles:
            out.update(t.key() for t in ob.candidate_subs)
        return out


def score(profile: DensityProfile, mode: str = "pooled") -> float:
    """One-sided z-statistic for p1 > p2; -inf when the test is degenerate.

    `paper` subtracts the reciprocal densities inside the radicand, which
    goes negative exactly when the reference side is denser; `pooled` adds
    them (the standard two-proportion form).  Any non-positive radicand or
    zero pooled variance yields -inf, so the caller may compare against a
    threshold without special cases.
    """
    if not profile.supported:
        raise ValueError("score of an unsupported profile")
    if mode not in Z_MODES:
        raise ValueError(f"mode must be one of {Z_MODES}")
    pq = profile.p_pooled * (1.0 - profile.p_pooled)
    if mode == "paper":
        inv = 1.0 / profile.f_ref - 1.0 / profile.f_qry
    else:
        inv = 1.0 / profile.f_ref + 1.0 / profile.f_qry
    rad = pq * inv
    if not rad > 0.0:
        return -math.inf
    return (profile.p1 - profile.p2) / math.sqrt(rad)


def is_candidate(profile: DensityProfile, params: DetectParams) -> bool:
    """Significance and two-sided support, all strict inequalities."""
    if not profile.supported:
        return False
    return (score(profile, params.z_denominator_mode) > params.tau
            and profile.f_ref > params.delta
            and profile.f_qry > params.delta)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> list:
    """Monotone-chain hull, counter-clockwise, vertices a subset of input.

    Degenerate inputs give back what they can: one point, or the two
    extremes of a collinear set.
    """
    uniq = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(uniq) <= 2:
        return [GeoPoint(*p) for p in uniq]
    lower = []
    for p in uniq:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(uniq):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        # all points collinear: keep the two extremes
        hull = [uniq[0], uniq[-1]]
    return [GeoPoint(*p) for p in hull]


def build_obstacle(candidates) -> Obstacle:
    """Collect last points, hull them, and average the final headings."""
    if not candidates:
        raise ValueError("obstacle from an empty candidate set")
    subs = sorted(candidates, key=lambda t: t.key())
    points = [t.last_point for t in subs]
    hx = hy = 0.0
    n_head = 0
    for t in subs:
        vx = t.points[-1, 0] - t.points[-2, 0]
        vy = t.points[-1, 1] - t.points[-2, 1]
        norm = math.hypot(vx, vy)
        if norm > 0.0:
            hx += vx / norm
            hy += vy / norm
            n_head += 1
    if n_head:
        hx /= n_head
        hy /= n_head
        norm = math.hypot(hx, hy)
        if norm > 0.0:
            hx /= norm
            hy /= norm
    return Obstacle(subs, points, convex_hull(points),
                    (float(hx), float(hy)))


class _Search:
    """One detection pass over a pair of built indexes."""

    def __init__(self, ref: CorpusIndex, qry: CorpusIndex,
                 params: DetectParams, dparams: DensityParams,
                 exact_knn: bool):
        self.ref = ref
        self.qry = qry
        self.params = params
        self.dparams = dparams
        self.exact = exact_knn
        self.opts = params.optimizations_enabled
        self.stats = DetectStats()
        self.flags = np.zeros(len(qry), bool)
        keep_verdicts = ("verdict_bitmap" in self.opts
                         or "copy_close_verdict" in self.opts)
        self.verdict = np.full(len(ref), -1, np.int8) if keep_verdicts else None
        self.claimed = np.zeros(len(ref), bool)
        self.succ_of_ref = self._succ_fn(ref)
        self.succ_of_qry = self._succ_fn(qry)

    @staticmethod
    def _succ_fn(index: CorpusIndex):
        def succ_of(sub: SubTrajectory) -> Optional[SubTrajectory]:
            g = index.gid_of(sub)
            if g is None:
                return None
            sg = int(index.succ_idx[g])
            return index.window(sg) if sg >= 0 else None
        return succ_of

    def _ref_neighbors(self, tg: int, t: SubTrajectory):
        if ("precomputed_ref_knn" in self.opts and not self.exact
                and self.ref.dk_ids is not None):
            return self.ref.precomputed_distinct(tg)
        return self.ref.distinct_knn(t, self.params.k, exact=self.exact)

    def _evaluate(self, tg: int, t: SubTrajectory, ref_list=None) -> bool:
        """Full verdict for one reference window (no caches consulted)."""
        self.stats.candidates_tested += 1
        if int(self.ref.succ_idx[tg]) < 0:
            # a window with no succeed has no forward ratio to test
            return False
        if ref_list is None:
            ref_list = self._ref_neighbors(tg, t)
        qry_list = self.qry.distinct_knn(t, self.params.k, exact=self.exact)
        profile = density_profile(
            t, ref_list, qry_list, self.succ_of_ref, self.succ_of_qry,
            self.dparams, self.ref.trajectory_count, self.qry.trajectory_count)
        return is_candidate(profile, self.params)

    def _verdict(self, tg: int, t: SubTrajectory) -> bool:
        if self.verdict is not None and self.verdict[tg] >= 0:
            self.stats.cache_hits += 1
            return bool(self.verdict[tg])
        eps = self.params.epsilon
        ref_list = None
        if ("copy_close_verdict" in self.opts and eps > 0
                and self.verdict is not None
                and int(self.ref.succ_idx[tg]) >= 0):
            ref_list = self._ref_neighbors(tg, t)
            for nb, d in ref_list:
                if d >= eps:
                    break
                ng = self.ref.gid_of(nb)
                if ng is not None and self.verdict[ng] >= 0:
                    v = bool(self.verdict[ng])
                    self.verdict[tg] = v
                    self.stats.copied_verdicts += 1
                    return v
        v = self._evaluate(tg, t, ref_list)
        if self.verdict is not None:
            self.verdict[tg] = v
        return v

    def find_candidates(self, q0: int) -> set:
        """Flagged DFS from one query window; returns accepted ref window ids.

        Explicit stack: corpus size must not be bounded by recursion depth.
        """
        stack = [q0]
        self.flags[q0] = True
        found = set()
        k = self.params.k
        eps = self.params.epsilon
        skip_close = "skip_close_query" in self.opts and eps > 0
        use_bitmap = "verdict_bitmap" in self.opts
        while stack:
            qg = stack.pop()
            self.stats.queries_checked += 1
            q = self.qry.window(qg)
            local_any = False
            for t_sub, _d in self.ref.knn(q, k, exact=self.exact):
                tg = self.ref.gid_of(t_sub)
                if self._verdict(tg, t_sub):
                    local_any = True
                    if not (use_bitmap and self.claimed[tg]):
                        found.add(tg)
                        if use_bitmap:
                            self.claimed[tg] = True
            if not local_any:
                continue
            for qi_sub, dq in self.qry.knn(q, k, exact=self.exact):
                qig = self.qry.gid_of(qi_sub)
                if self.flags[qig]:
                    continue
                self.flags[qig] = True
                if skip_close and dq < eps:
                    self.stats.skips_close_query += 1
                    continue
                stack.append(qig)
        return found


def detect(ref_index: CorpusIndex, qry_index: CorpusIndex,
           params: DetectParams = None, dparams: DensityParams = None,
           exact_knn: bool = False) -> DetectionResult:
    """Run the full candidate search over every query window.

    Every query window serves as a search root exactly once; each non-empty
    candidate set found becomes one obstacle.  Deterministic given the
    indexes: iteration follows stored window order.
    """
    params = params or DetectParams()
    dparams = dparams or DensityParams()
    if ref_index.pparams != qry_index.pparams:
        raise ValueError(
            f"window params differ: reference {ref_index.pparams} "
            f"vs query {qry_index.pparams}")
    search = _Search(ref_index, qry_index, params, dparams, exact_knn)
    evals0 = ref_index.distance_evals + qry_index.distance_evals
    obstacles = []
    for q0 in range(len(qry_index)):
        if search.flags[q0]:
            continue
        found = search.find_candidates(q0)
        if found:
            subs = [ref_index.window(g) for g in sorted(found)]
            obstacles.append(build_obstacle(subs))
    search.stats.distance_evals = (
        ref_index.distance_evals + qry_index.distance_evals - evals0)
    return DetectionResult(obstacles, search.stats)

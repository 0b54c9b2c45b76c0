"""Gaussian-kernel density estimates over distinct-kNN neighbor lists.

A window's density is the kernel-weighted count of its distinct-parent
neighbors; its succeed density re-weights the same neighbors by
delta_i = max(ndtw(t, t_i), ndtw(succ(t), succ(t_i))), so a neighbor whose
continuation diverges from t's continuation contributes strictly less.
Neighbors with no succeed contribute zero (delta_i = +inf) rather than
being replaced, which keeps both estimates over one shared neighbor set.

The default normalization (`kernel_sum`) reports the bare kernel sum,
bounded by k; `paper_literal` divides by the corpus trajectory count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .model import SubTrajectory
from .similarity import ndtw

NORMALIZATION_MODES = ("kernel_sum", "paper_literal")


@dataclass(frozen=True)
class DensityParams:
    sigma: float = 1.0
    normalization_mode: str = "kernel_sum"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.normalization_mode not in NORMALIZATION_MODES:
            raise ValueError(
                f"normalization_mode must be one of {NORMALIZATION_MODES}, "
                f"got {self.normalization_mode!r}")


@dataclass(frozen=True)
class DensityProfile:
    """The four densities of one window plus the derived ratios.

    p1/p2 are the fractions of local kernel mass that continues forward in
    the reference/query corpus; p_pooled is their density-weighted blend.
    All three are nan when either side is unsupported (density zero).
    """

    f_ref: float
    f_ref_succ: float
    f_qry: float
    f_qry_succ: float
    p1: float
    p2: float
    p_pooled: float
    supported: bool


def kernel(d: float, sigma: float) -> float:
    """exp(-d^2 / (2 sigma^2)); 0 at d=+inf."""
    if math.isinf(d):
        return 0.0
    return math.exp(-(d * d) / (2.0 * sigma * sigma))


def _normalize(total: float, params: DensityParams,
               trajectory_count: int) -> float:
    if params.normalization_mode == "paper_literal":
        if trajectory_count <= 0:
            raise ValueError("paper_literal normalization needs a positive "
                             "trajectory count")
        return total / trajectory_count
    return total


def density(t, neighbors, params: DensityParams,
            trajectory_count: int = 0) -> float:
    """Kernel sum over a distinct-kNN list [(SubTrajectory, ndtw)]."""
    total = 0.0
    for _, d in neighbors:
        total += kernel(d, params.sigma)
    return _normalize(total, params, trajectory_count)


def succ_delta(t_succ: SubTrajectory, d: float,
               n_succ: Optional[SubTrajectory]) -> float:
    """delta_i for one neighbor: max of the window and succeed distances.

    +inf (zero contribution) when the neighbor has no succeed.
    """
    if n_succ is None:
        return math.inf
    return max(d, ndtw(t_succ, n_succ))


def succ_density(t: SubTrajectory, neighbors,
                 succ_of: Callable[[SubTrajectory], Optional[SubTrajectory]],
                 params: DensityParams, trajectory_count: int = 0) -> float:
    """Kernel sum over the penalized succeed distances of t's own neighbors.

    t must have a succeed; callers filter windows without one.
    """
    t_succ = succ_of(t)
    if t_succ is None:
        raise ValueError(f"{t!r} has no succeed; it cannot have a succeed "
                         "density")
    total = 0.0
    for nb, d in neighbors:
        total += kernel(succ_delta(t_succ, d, succ_of(nb)), params.sigma)
    return _normalize(total, params, trajectory_count)


def density_profile(t: SubTrajectory, ref_neighbors, qry_neighbors,
                    succ_of_ref, succ_of_qry, params: DensityParams,
                    ref_count: int = 0, qry_count: int = 0) -> DensityProfile:
    """All four densities of t plus p1, p2 and the pooled blend.

    ref_neighbors is t's distinct-kNN list in its own (reference) corpus,
    qry_neighbors the distinct-kNN list against the query corpus.  succ_of_*
    resolve succeeds in the respective corpus; t itself lives in the
    reference corpus and must have a succeed.
    """
    f_ref = density(t, ref_neighbors, params, ref_count)
    f_qry = density(t, qry_neighbors, params, qry_count)
    t_succ = succ_of_ref(t)
    if t_succ is None:
        raise ValueError(f"{t!r} has no succeed; profile undefined")
    f_ref_succ = succ_density(t, ref_neighbors, succ_of_ref, params, ref_count)
    f_qry_succ = _succ_density_foreign(t_succ, qry_neighbors, succ_of_qry,
                                       params, qry_count)
    supported = f_ref > 0.0 and f_qry > 0.0
    if not supported:
        return DensityProfile(f_ref, f_ref_succ, f_qry, f_qry_succ,
                              math.nan, math.nan, math.nan, False)
    p1 = f_ref_succ / f_ref
    p2 = f_qry_succ / f_qry
    p_pooled = (f_ref_succ + f_qry_succ) / (f_ref + f_qry)
    return DensityProfile(f_ref, f_ref_succ, f_qry, f_qry_succ,
                          p1, p2, p_pooled, True)


def _succ_density_foreign(t_succ, neighbors, succ_of, params,
                          trajectory_count):
    # same arithmetic as succ_density with t's succeed already resolved in
    # the reference corpus (the neighbors live in the query corpus)
    total = 0.0
    for nb, d in neighbors:
        total += kernel(succ_delta(t_succ, d, succ_of(nb)), params.sigma)
    return _normalize(total, params, trajectory_count)

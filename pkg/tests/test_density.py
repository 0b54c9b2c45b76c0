import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from obstra.density import (
    DensityParams,
    density,
    density_profile,
    kernel,
    succ_delta,
    succ_density,
)
from obstra.model import PartitionParams, SubTrajectoryStore, Trajectory, succ
from obstra.similarity import ndtw


def window_of(tid, pts, index=0):
    """A free-standing window for plumbing-level tests."""
    from obstra.model import SubTrajectory
    return SubTrajectory(tid, index, index,
                         np.asarray(pts, dtype=np.float64))


def random_store(seed, n_traj=6, n_pts=10):
    rng = np.random.default_rng(seed)
    trajs = []
    for i in range(n_traj):
        steps = rng.normal(0, 1.0, (n_pts - 1, 2)) + (1.0, 0.0)
        pts = np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])
        pts += rng.uniform(-5, 5, 2)
        trajs.append(Trajectory(f"t{i}", pts))
    return SubTrajectoryStore(trajs, PartitionParams())


class TestKernel:
    def test_zero_distance_is_one(self):
        assert kernel(0.0, 1.0) == 1.0

    def test_infinite_distance_contributes_nothing(self):
        assert kernel(math.inf, 1.0) == 0.0

    def test_known_value(self):
        assert kernel(0.5, 1.0) == pytest.approx(math.exp(-0.125), rel=1e-12)

    @given(d=st.floats(0, 50, allow_nan=False),
           sigma=st.floats(0.05, 10, allow_nan=False))
    def test_matches_scalar_oracle(self, d, sigma):
        assert kernel(d, sigma) == pytest.approx(
            oracles.kernel(d, sigma), rel=1e-12, abs=0)

    @given(sigma=st.floats(0.05, 10))
    def test_monotone_decreasing_in_distance(self, sigma):
        ds = [0.0, 0.3, 1.0, 2.5, 7.0]
        ks = [kernel(d, sigma) for d in ds]
        assert ks == sorted(ks, reverse=True)


class TestDensity:
    def test_two_neighbor_example(self):
        nbrs = [(None, 0.5), (None, 1.0)]
        got = density(None, nbrs, DensityParams(sigma=1.0))
        assert got == pytest.approx(math.exp(-0.125) + math.exp(-0.5),
                                    rel=1e-12)
        assert got == pytest.approx(1.4890, abs=5e-5)

    def test_paper_literal_divides_by_trajectory_count(self):
        nbrs = [(None, 0.0), (None, 0.0)]
        params = DensityParams(sigma=1.0, normalization_mode="paper_literal")
        assert density(None, nbrs, params, trajectory_count=8) == 2.0 / 8.0

    def test_paper_literal_needs_count(self):
        params = DensityParams(normalization_mode="paper_literal")
        with pytest.raises(ValueError):
            density(None, [(None, 1.0)], params)

    def test_empty_neighborhood_is_zero(self):
        assert density(None, [], DensityParams()) == 0.0

    @given(dists=st.lists(st.floats(0, 20) | st.just(math.inf),
                          min_size=0, max_size=8),
           sigma=st.floats(0.05, 5.0))
    def test_matches_oracle_and_is_bounded_by_k(self, dists, sigma):
        nbrs = [(None, d) for d in dists]
        got = density(None, nbrs, DensityParams(sigma=sigma))
        assert got == pytest.approx(oracles.density(dists, sigma),
                                    rel=1e-12, abs=1e-300)
        assert 0.0 <= got <= len(dists)

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            DensityParams(normalization_mode="nonsense")
        with pytest.raises(ValueError):
            DensityParams(sigma=0.0)


class TestSuccDelta:
    def test_neighbor_without_succeed_is_infinite(self):
        t_succ = window_of("a", [[0, 0], [1, 0]])
        assert succ_delta(t_succ, 0.3, None) == math.inf

    def test_penalty_is_max_of_window_and_succeed_distance(self):
        t_succ = window_of("a", [[0.0, 0.0], [1.0, 0.0]])
        n_succ = window_of("b", [[0.0, 0.5], [1.0, 0.5]])
        d_succ = ndtw(t_succ, n_succ)
        assert succ_delta(t_succ, 0.0, n_succ) == d_succ
        assert succ_delta(t_succ, d_succ + 1.0, n_succ) == d_succ + 1.0

    def test_spec_of_penalized_kernel(self):
        # a succeed 1.5 apart under sigma=1 contributes exp(-1.125)
        assert kernel(1.5, 1.0) == pytest.approx(math.exp(-1.125), rel=1e-12)
        assert math.exp(-1.125) == pytest.approx(0.3247, abs=5e-5)


class TestSuccDensity:
    def test_raises_without_succeed(self):
        store = random_store(0)
        last = max(store, key=lambda t: (t.parent_id, t.index_in_parent))
        assert succ(last, store) is None
        with pytest.raises(ValueError):
            succ_density(last, [], lambda t: succ(t, store), DensityParams())

    def test_never_exceeds_base_density(self):
        store = random_store(1)
        params = DensityParams()
        subs = list(store)
        for t in subs[:20]:
            if succ(t, store) is None:
                continue
            nbrs = []
            for o in subs:
                if o.parent_id == t.parent_id:
                    continue
                d = ndtw(t, o)
                if math.isfinite(d):
                    nbrs.append((o, d))
            nbrs.sort(key=lambda p: p[1])
            nbrs = nbrs[:8]
            base = density(t, nbrs, params)
            succd = succ_density(t, nbrs, lambda x: succ(x, store), params)
            assert succd <= base

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=60)
    def test_succ_density_bounded_random_geometry(self, seed):
        rng = np.random.default_rng(seed)
        t = window_of("q", np.cumsum(rng.normal(1, 0.5, (4, 2)), axis=0))
        t_next = window_of("q", np.cumsum(rng.normal(1, 0.5, (4, 2)), axis=0),
                           index=1)
        nbrs = []
        succs = {}
        for i in range(6):
            nb = window_of(f"n{i}",
                           np.cumsum(rng.normal(1, 0.5, (4, 2)), axis=0))
            d = ndtw(t, nb)
            if not math.isfinite(d):
                continue
            nbrs.append((nb, d))
            if rng.random() < 0.7:
                succs[nb.key()] = window_of(
                    f"n{i}", np.cumsum(rng.normal(1, 0.5, (4, 2)), axis=0),
                    index=1)
        def succ_of(x):
            if x.key() == t.key():
                return t_next
            return succs.get(x.key())
        params = DensityParams(sigma=float(rng.uniform(0.2, 3.0)))
        base = density(t, nbrs, params)
        succd = succ_density(t, nbrs, succ_of, params)
        assert succd <= base
        assert 0.0 <= succd


class TestDensityProfile:
    def _profile(self, seed):
        ref = random_store(seed)
        qry = random_store(seed + 1000)
        ref_subs, qry_subs = list(ref), list(qry)
        t = ref_subs[len(ref_subs) // 2]
        assert succ(t, ref) is not None

        def knn_in(store_subs, exclude_parent):
            rows = []
            for o in store_subs:
                if o.parent_id == exclude_parent:
                    continue
                d = ndtw(t, o)
                if math.isfinite(d):
                    rows.append((o, d))
            rows.sort(key=lambda p: p[1])
            best, seen = [], set()
            for o, d in rows:
                if o.parent_id in seen:
                    continue
                seen.add(o.parent_id)
                best.append((o, d))
            return best[:8]

        params = DensityParams()
        return density_profile(
            t, knn_in(ref_subs, t.parent_id), knn_in(qry_subs, None),
            lambda x: succ(x, ref), lambda x: succ(x, qry), params)

    @pytest.mark.parametrize("seed", [0, 3, 9])
    def test_profile_invariants(self, seed):
        prof = self._profile(seed)
        assert 0.0 <= prof.f_ref_succ <= prof.f_ref
        assert 0.0 <= prof.f_qry_succ <= prof.f_qry
        if prof.supported:
            assert 0.0 <= prof.p1 <= 1.0
            assert 0.0 <= prof.p2 <= 1.0
            assert min(prof.p1, prof.p2) <= prof.p_pooled <= max(prof.p1,
                                                                 prof.p2)

    def test_profile_requires_succeed(self):
        store = random_store(4)
        last = max(store, key=lambda t: (t.parent_id, t.index_in_parent))
        with pytest.raises(ValueError):
            density_profile(last, [], [], lambda t: succ(t, store),
                            lambda t: None, DensityParams())

    def test_unsupported_profile_has_nan_ratios(self):
        store = random_store(5)
        t = list(store)[0]
        prof = density_profile(t, [], [], lambda x: succ(x, store),
                               lambda x: None, DensityParams())
        assert not prof.supported
        assert math.isnan(prof.p1) and math.isnan(prof.p2)

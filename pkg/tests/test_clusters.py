import math

import numpy as np
import pytest

from isacsim.clusters import (
    Cluster,
    ClusterKind,
    DelayWindow,
    ExplicitIndices,
    RandomK,
    SecondStrongest,
    generate_delays,
    generate_powers,
    make_clusters,
    prune_clusters,
    select_target_clusters,
)
from isacsim.errors import InsufficientClustersError, ValidationError


class ForcedUniformRng:
    """Stub generator whose uniform() returns a prescribed vector."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def uniform(self, size=None):
        assert size == self.values.size
        return self.values.copy()


class TestGenerateDelays:
    def test_all_draws_one_gives_zero_delays(self):
        rng = ForcedUniformRng(np.ones(5))
        delays = generate_delays(5, 3.0, 1e-7, rng)
        assert np.all(delays == 0.0)

    def test_hand_case(self):
        # X = e^-1, e^-2, e^-3 with r_tau=3, ds=100 ns:
        # tau' = 300, 600, 900 ns -> tau = 0, 300, 600 ns
        rng = ForcedUniformRng(np.exp([-1.0, -2.0, -3.0]))
        delays = generate_delays(3, 3.0, 100e-9, rng)
        assert np.allclose(delays, [0.0, 300e-9, 600e-9], atol=1e-18)

    def test_sorted_and_zero_min_across_seeds(self):
        for seed in range(200):
            delays = generate_delays(24, 3.0, 3.2e-8, np.random.default_rng(seed))
            assert delays[0] == 0.0
            assert np.all(np.diff(delays) >= 0)

    def test_parameter_validation(self):
        with pytest.raises(ValidationError):
            generate_delays(4, 1.0, 1e-7, np.random.default_rng(0))
        with pytest.raises(ValidationError):
            generate_delays(4, 2.0, 0.0, np.random.default_rng(0))


class TestGeneratePowers:
    def test_single_cluster_normalizes_to_one(self):
        p, _ = generate_powers(np.array([0.0]), 3.0, 1e-7, 0.0, np.random.default_rng(0))
        assert p[0] == 1.0

    def test_two_equal_delays_split_evenly(self):
        p, _ = generate_powers(
            np.array([1e-7, 1e-7]), 3.0, 1e-7, 0.0, np.random.default_rng(0)
        )
        assert np.allclose(p, [0.5, 0.5], atol=1e-15)

    def test_hand_case(self):
        # tau = 0, 300, 600 ns, r_tau=3, ds=100 ns, zeta=0:
        # P' = 1, e^-2, e^-4  ->  P ~ 0.8668, 0.1173, 0.0159
        delays = np.array([0.0, 300e-9, 600e-9])
        p, shadow = generate_powers(delays, 3.0, 100e-9, 0.0, np.random.default_rng(0))
        raw = np.exp([0.0, -2.0, -4.0])
        assert np.allclose(p, raw / raw.sum(), atol=1e-15)
        assert np.allclose(p, [0.8668, 0.1173, 0.0159], atol=5e-5)
        assert np.all(shadow == 0.0)

    def test_normalization_across_seeds(self):
        for seed in range(200):
            rng = np.random.default_rng(seed)
            delays = generate_delays(24, 3.0, 3.2e-8, rng)
            p, _ = generate_powers(delays, 3.0, 3.2e-8, 3.0, rng)
            assert abs(p.sum() - 1.0) < 1e-12


def clusters_from_powers(powers, delays=None):
    delays = delays if delays is not None else np.arange(len(powers), dtype=float) * 1e-8
    return make_clusters(delays, powers, np.zeros(len(powers)))


class TestPruneClusters:
    def test_paper_threshold(self):
        powers = [1.0, 10 ** (-10 / 10), 10 ** (-30 / 10)]
        kept = prune_clusters(clusters_from_powers(powers), -25.0)
        assert [c.index for c in kept] == [0, 1]

    def test_boundary_inclusive(self):
        powers = [1.0, 10 ** (-49.9 / 10), 10 ** (-50.1 / 10)]
        kept = prune_clusters(clusters_from_powers(powers), -50.0)
        assert [c.index for c in kept] == [0, 1]

    def test_none_keeps_all(self):
        powers = [1.0, 1e-12, 1e-20]
        kept = prune_clusters(clusters_from_powers(powers), None)
        assert len(kept) == 3

    def test_max_always_survives(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            delays = generate_delays(24, 3.0, 3.2e-8, rng)
            p, z = generate_powers(delays, 3.0, 3.2e-8, 3.0, rng)
            kept = prune_clusters(make_clusters(delays, p, z), -25.0)
            assert max(c.power for c in kept) == p.max()

    def test_lower_threshold_is_superset(self):
        rng = np.random.default_rng(17)
        delays = generate_delays(24, 3.0, 3.2e-8, rng)
        p, z = generate_powers(delays, 3.0, 3.2e-8, 3.0, rng)
        clusters = make_clusters(delays, p, z)
        kept_hi = {c.index for c in prune_clusters(clusters, -25.0)}
        kept_lo = {c.index for c in prune_clusters(clusters, -50.0)}
        assert kept_hi <= kept_lo

    def test_powers_not_renormalized(self):
        # 0.2/0.7 = -5.44 dB, 0.1/0.7 = -8.45 dB
        powers = [0.7, 0.2, 0.1]
        kept = prune_clusters(clusters_from_powers(powers), -6.0)
        assert [c.power for c in kept] == [0.7, 0.2]


class TestSelectTargetClusters:
    def test_random_k_three_of_paper_setup(self):
        rng = np.random.default_rng(0)
        delays = generate_delays(24, 3.0, 3.2e-8, rng)
        p, z = generate_powers(delays, 3.0, 3.2e-8, 3.0, rng)
        kept = prune_clusters(make_clusters(delays, p, z), -50.0)
        targets, env = select_target_clusters(kept, RandomK(3), rng)
        assert len(targets) == 3
        assert len(targets) + len(env) == len(kept)
        assert all(t.kind is ClusterKind.TARGET for t in targets)
        assert all(t.delay_s > 0 for t in targets)

    def test_second_strongest(self):
        clusters = clusters_from_powers([0.8668, 0.1173, 0.0159])
        targets, _ = select_target_clusters(clusters, SecondStrongest(), np.random.default_rng(0))
        assert [t.power for t in targets] == [0.1173]

    def test_second_strongest_skips_zero_delay(self):
        # strongest at delay>0, second strongest is the zero-delay tap: skip it
        clusters = make_clusters(
            np.array([0.0, 1e-8, 2e-8]), np.array([0.4, 0.5, 0.1]), np.zeros(3)
        )
        targets, _ = select_target_clusters(clusters, SecondStrongest(), np.random.default_rng(0))
        assert [t.index for t in targets] == [2]

    def test_delay_window(self):
        clusters = clusters_from_powers(
            [0.8, 0.15, 0.05], delays=np.array([0.0, 300e-9, 600e-9])
        )
        targets, _ = select_target_clusters(
            clusters, DelayWindow(100e-9, 400e-9), np.random.default_rng(0)
        )
        assert [t.delay_s for t in targets] == [300e-9]

    def test_explicit_indices(self):
        clusters = clusters_from_powers([0.5, 0.3, 0.2])
        targets, env = select_target_clusters(
            clusters, ExplicitIndices((1, 2)), np.random.default_rng(0)
        )
        assert [t.index for t in targets] == [1, 2]

    def test_explicit_zero_delay_rejected(self):
        clusters = clusters_from_powers([0.5, 0.5], delays=np.array([0.0, 1e-8]))
        with pytest.raises(ValidationError):
            select_target_clusters(clusters, ExplicitIndices((0,)), np.random.default_rng(0))

    def test_insufficient_clusters(self):
        clusters = clusters_from_powers([0.5, 0.5], delays=np.array([0.0, 1e-8]))
        with pytest.raises(InsufficientClustersError):
            select_target_clusters(clusters, RandomK(2), np.random.default_rng(0))

    def test_none_policy_all_environment(self):
        clusters = clusters_from_powers([0.5, 0.3, 0.2])
        targets, env = select_target_clusters(clusters, None, np.random.default_rng(0))
        assert targets == []
        assert len(env) == 3

    def test_seed_determinism(self):
        clusters = clusters_from_powers(list(np.full(10, 0.1)))
        t1, _ = select_target_clusters(clusters, RandomK(3), np.random.default_rng(42))
        t2, _ = select_target_clusters(clusters, RandomK(3), np.random.default_rng(42))
        assert [c.index for c in t1] == [c.index for c in t2]

    def test_random_policy_does_not_touch_rng_when_empty(self):
        clusters = clusters_from_powers([0.5, 0.3, 0.2])
        rng = np.random.default_rng(1)
        select_target_clusters(clusters, None, rng)
        probe_after_none = rng.uniform()
        probe_reference = np.random.default_rng(1).uniform()
        assert probe_after_none == probe_reference

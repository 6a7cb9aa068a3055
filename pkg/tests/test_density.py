"""Density estimator tests against a brute-force oracle.

The oracle recomputes k-nearest-neighbour densities with explicit pairwise
distances and a full sort, and carries its own hard-coded unit-ball volumes,
so it shares no code with the implementation under test.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lge.density import (
    density_order,
    density_ranks,
    knn_log_density,
    neighbour_count,
    sample_rank_truncated_geometric,
)

# unit-ball volumes for d = 1, 2, 4, 16, from the closed forms
ORACLE_BALL_VOLUME = {
    1: 2.0,
    2: math.pi,
    4: math.pi ** 2 / 2.0,
    16: math.pi ** 8 / 40320.0,
}


def oracle_log_density(points: np.ndarray) -> np.ndarray:
    n, d = points.shape
    k = int(math.floor(2.0 * n ** (1.0 / d) + 0.5))
    k = max(1, min(k, n - 1))
    out = np.empty(n)
    for i in range(n):
        dists = sorted(
            math.sqrt(float(((points[i] - points[j]) ** 2).sum()))
            for j in range(n) if j != i
        )
        d_k = dists[k - 1]
        if d_k == 0.0:
            out[i] = math.inf
        else:
            out[i] = (math.log(k) - math.log(n)
                      - math.log(ORACLE_BALL_VOLUME[d]) - d * math.log(d_k))
    return out


def oracle_ranks(log_density: np.ndarray) -> np.ndarray:
    idx = sorted(range(len(log_density)), key=lambda i: (log_density[i], i))
    ranks = np.empty(len(log_density), dtype=np.int64)
    for r, i in enumerate(idx, start=1):
        ranks[i] = r
    return ranks


class TestNeighbourCount:
    @pytest.mark.parametrize("n,d,expected", [
        (2, 1, 1),       # 2*2 = 4 clamps to n-1 = 1
        (100, 1, 99),    # 200 clamps to 99
        (100, 2, 20),
        (100, 16, 3),    # 2 * 100**(1/16) = 2.66 -> 3
        (1000, 16, 3),   # 2 * 1000**(1/16) = 3.08 -> 3
        (65536, 16, 4),
        (3, 1, 2),
    ])
    def test_known_values(self, n, d, expected):
        assert neighbour_count(n, d) == expected

    def test_rejects_single_point(self):
        with pytest.raises(ValueError):
            neighbour_count(1, 2)


class TestLogDensity:
    def test_three_point_line_frozen_values(self):
        # points 0, 1, 3 on a line: k=2, C_1=2, densities 1/9, 1/6, 1/9
        points = np.array([[0.0], [1.0], [3.0]])
        logf = knn_log_density(points)
        np.testing.assert_allclose(
            logf, [math.log(1 / 9), math.log(1 / 6), math.log(1 / 9)], rtol=1e-12)
        np.testing.assert_array_equal(density_ranks(logf), [1, 3, 2])

    def test_duplicates_score_positive_infinity(self):
        # n=6 in 16 dimensions gives k=2, so three coincident points all
        # have a zero second-neighbour distance
        rng = np.random.default_rng(0)
        spread = rng.uniform(1.0, 9.0, size=(3, 16))
        points = np.vstack([np.zeros((3, 16)), spread])
        logf = knn_log_density(points)
        assert np.all(logf[:3] == math.inf)
        assert np.all(np.isfinite(logf[3:]))
        # infinite densities rank last, ties broken by index
        np.testing.assert_array_equal(density_ranks(logf)[:3], [4, 5, 6])

    @pytest.mark.parametrize("d", [1, 2, 4, 16])
    def test_matches_oracle_across_dimensions(self, d):
        rng = np.random.default_rng(100 + d)
        for _ in range(10):
            n = int(rng.integers(2, 40))
            points = rng.normal(size=(n, d)) * rng.uniform(0.1, 10.0)
            logf = knn_log_density(points)
            expected = oracle_log_density(points)
            finite = np.isfinite(expected)
            np.testing.assert_allclose(logf[finite], expected[finite], rtol=1e-10)
            np.testing.assert_array_equal(density_ranks(logf), oracle_ranks(expected))

    def test_matches_oracle_with_many_duplicates(self):
        rng = np.random.default_rng(42)
        base = rng.normal(size=(6, 2))
        points = np.vstack([base, base[:3], base[:1]])
        logf = knn_log_density(points)
        np.testing.assert_array_equal(density_ranks(logf),
                                      oracle_ranks(oracle_log_density(points)))

    def test_rank_scale_invariance(self):
        rng = np.random.default_rng(7)
        points = rng.normal(size=(50, 4))
        base = density_ranks(knn_log_density(points))
        for scale in (1e-3, 0.5, 3.0, 1e4):
            scaled = density_ranks(knn_log_density(points * scale))
            np.testing.assert_array_equal(scaled, base)

    @pytest.mark.parametrize("bad", [
        np.zeros((1, 3)),                      # single point
        np.zeros((4,)),                        # wrong rank
        np.array([[0.0, np.nan], [1.0, 2.0]]),  # non-finite
    ])
    def test_rejects_bad_input(self, bad):
        with pytest.raises(ValueError):
            knn_log_density(bad)

    def test_order_and_ranks_are_inverse(self):
        rng = np.random.default_rng(3)
        logf = rng.normal(size=30)
        order = density_order(logf)
        ranks = density_ranks(logf)
        np.testing.assert_array_equal(ranks[order], np.arange(1, 31))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 25), st.integers(1, 4), st.integers(0, 10_000))
def test_property_ranks_match_oracle(n, dim_pick, seed):
    d = [1, 2, 4, 16][dim_pick - 1] if dim_pick <= 4 else 2
    rng = np.random.default_rng(seed)
    points = rng.uniform(-5, 5, size=(n, d))
    logf = knn_log_density(points)
    np.testing.assert_array_equal(density_ranks(logf),
                                  oracle_ranks(oracle_log_density(points)))


class TestTruncatedGeometricSampler:
    def test_two_rank_probabilities(self):
        # n=2, p=0.5: P(1) = 2/3, P(2) = 1/3
        rng = np.random.default_rng(0)
        draws = np.array([sample_rank_truncated_geometric(2, 0.5, rng)
                          for _ in range(30_000)])
        p1 = np.mean(draws == 1)
        assert abs(p1 - 2 / 3) < 0.01
        assert set(draws) == {1, 2}

    def test_degenerate_cases(self):
        rng = np.random.default_rng(1)
        assert sample_rank_truncated_geometric(1, 0.3, rng) == 1
        assert all(sample_rank_truncated_geometric(50, 1.0, rng) == 1 for _ in range(10))

    def test_rejects_bad_parameters(self):
        rng = np.random.default_rng(2)
        with pytest.raises(ValueError):
            sample_rank_truncated_geometric(0, 0.5, rng)
        with pytest.raises(ValueError):
            sample_rank_truncated_geometric(5, 0.0, rng)
        with pytest.raises(ValueError):
            sample_rank_truncated_geometric(5, 1.5, rng)

    def test_all_ranks_reachable_and_bounded(self):
        rng = np.random.default_rng(3)
        draws = [sample_rank_truncated_geometric(4, 0.4, rng) for _ in range(5000)]
        assert set(draws) == {1, 2, 3, 4}

    def test_matches_analytic_distribution_small(self):
        rng = np.random.default_rng(4)
        n, p, trials = 6, 0.3, 60_000
        counts = np.zeros(n)
        for _ in range(trials):
            counts[sample_rank_truncated_geometric(n, p, rng) - 1] += 1
        q = 1.0 - p
        probs = np.array([q ** (r - 1) * p for r in range(1, n + 1)])
        probs /= probs.sum()
        for r in range(n):
            sigma = math.sqrt(probs[r] * (1 - probs[r]) * trials)
            assert abs(counts[r] - probs[r] * trials) < 4 * sigma

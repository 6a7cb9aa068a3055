"""Nonparametric density scoring over stored latent points.

Density is the k-nearest-neighbour estimate
``f(x) = k / (n * C_d * D_k(x)^d)`` with ``C_d`` the unit-ball volume and
``D_k`` the distance to the k-th nearest other point, ``k = 2 * n**(1/d)``
rounded half up and clamped to [1, n-1]. All work happens in log space so
duplicate points (D_k = 0, infinite density) stay well ordered.

Neighbour search uses an exact k-d tree; it returns the same distances as a
direct pairwise computation, so ranks match a brute-force evaluation.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gammaln

__all__ = [
    "neighbour_count",
    "knn_log_density",
    "density_ranks",
    "density_order",
    "sample_rank_truncated_geometric",
]


def neighbour_count(n: int, d: int) -> int:
    """k = 2 * n**(1/d), rounded half up, clamped to [1, n-1]."""
    if n < 2:
        raise ValueError("need at least two points")
    k = math.floor(2.0 * n ** (1.0 / d) + 0.5)
    return max(1, min(k, n - 1))


def log_unit_ball_volume(d: int) -> float:
    """log of C_d = pi**(d/2) / Gamma(d/2 + 1)."""
    return 0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0)


def knn_log_density(points: np.ndarray) -> np.ndarray:
    """Log density of every point among all points. Duplicates score +inf."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be (n, d)")
    n, d = points.shape
    if n < 2:
        raise ValueError("need at least two points")
    if d < 1:
        raise ValueError("need at least one dimension")
    if not np.isfinite(points).all():
        raise ValueError("points must be finite")
    k = neighbour_count(n, d)
    tree = cKDTree(points)
    # column k of the (k+1)-nearest query is the k-th nearest *other* point:
    # the self distance of exactly one 0 occupies one earlier column
    dist, _ = tree.query(points, k=k + 1)
    d_k = dist[:, k]
    with np.errstate(divide="ignore"):
        log_dist = np.log(d_k)
    return math.log(k) - math.log(n) - log_unit_ball_volume(d) - d * log_dist


def density_ranks(log_density: np.ndarray) -> np.ndarray:
    """Rank per point, 1 = lowest density; ties broken by point index."""
    log_density = np.asarray(log_density)
    n = log_density.shape[0]
    order = density_order(log_density)
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(1, n + 1)
    return ranks

def density_order(log_density: np.ndarray) -> np.ndarray:
    """Point indices sorted from lowest to highest density (ties by index)."""
    log_density = np.asarray(log_density)
    # lexsort's last key dominates; stable mergesort keeps index order on ties
    return np.argsort(log_density, kind="stable")


def sample_rank_truncated_geometric(n: int, p: float, rng: np.random.Generator) -> int:
    """Draw a rank in [1, n] with P(rank = r) proportional to (1-p)**(r-1) * p.

    Uses the closed-form inverse CDF of the geometric distribution truncated
    to n outcomes, so one uniform draw decides the rank.
    """
    if n < 1:
        raise ValueError("need at least one rank")
    if not 0.0 < p <= 1.0:
        raise ValueError("p must be in (0, 1]")
    if p == 1.0 or n == 1:
        return 1
    q = 1.0 - p
    u = rng.random()
    mass = -np.expm1(n * math.log(q))  # 1 - q**n, total truncated mass
    r = math.ceil(math.log1p(-u * mass) / math.log(q))
    return min(max(r, 1), n)

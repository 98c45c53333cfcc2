import math
from functools import reduce

import numpy as np

from interacting_urns.dynamics import InteractionSystem
from interacting_urns.graph_core import validate_matrix
from interacting_urns.spectral import Attitude


def cycle_matrix(n: int) -> np.ndarray:
    """Agent i listens only to agent i + 1 (mod n)."""
    weights = np.zeros((n, n))
    for i in range(n):
        weights[i, (i + 1) % n] = 1.0
    return weights


def build_system(weights, attitude=Attitude.COMPETITIVE, **kwargs) -> InteractionSystem:
    return InteractionSystem.build(validate_matrix(weights), attitude, **kwargs)


def cooperative_triangle() -> np.ndarray:
    return np.array(
        [[0.2, 0.5, 0.3], [0.4, 0.2, 0.4], [0.3, 0.3, 0.4]]
    )


def two_cycle_feeds_singleton() -> np.ndarray:
    """Closed 2-cycle {0, 1} feeding agent 2 (alpha_22 = 0.5, B = (0.25, 0.25))."""
    return np.array(
        [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.25, 0.25, 0.5]]
    )


def random_irreducible_class(
    n: int, bipartite: bool, seed: int, self_weight: bool = False
) -> np.ndarray:
    """
    Row-stochastic matrix whose off-diagonal support is strongly connected.
    Bipartite classes keep every edge between the two sides; the others
    contain a Hamiltonian cycle plus random chords.
    """
    rng = np.random.default_rng(seed)
    support = np.zeros((n, n), dtype=bool)
    order = rng.permutation(n)
    if bipartite:
        a = int(rng.integers(1, n))
        side_i, side_j = order[:a], order[a:]
        # closed walk alternating sides and visiting every vertex
        length = 2 * max(len(side_i), len(side_j))
        walk = [
            side_i[k // 2 % len(side_i)]
            if k % 2 == 0
            else side_j[k // 2 % len(side_j)]
            for k in range(length)
        ]
        for u, v in zip(walk, walk[1:] + walk[:1]):
            support[u, v] = True
        extra = rng.random((n, n)) < 0.3
        cross = np.zeros((n, n), dtype=bool)
        cross[np.ix_(side_i, side_j)] = True
        cross[np.ix_(side_j, side_i)] = True
        support |= extra & cross
    else:
        for u, v in zip(order, np.roll(order, -1)):
            support[u, v] = True
        support |= rng.random((n, n)) < 0.3
        np.fill_diagonal(support, False)
        if n == 2:
            # two agents can only form a 2-cycle
            return random_irreducible_class(n, True, seed, self_weight)

    weights = np.where(support, rng.uniform(0.1, 1.0, (n, n)), 0.0)
    weights /= weights.sum(axis=1, keepdims=True)
    if self_weight:
        diagonal = rng.uniform(0.0, 0.5, n)
        weights *= (1 - diagonal)[:, None]
        weights[np.diag_indices(n)] = diagonal
    return weights


def period_by_cycle_lengths(weights) -> int:
    """gcd of the lengths k <= 2n of closed walks (trace of B^k > 0)."""
    support = (np.asarray(weights) > 0).astype(int)
    np.fill_diagonal(support, 0)
    n = len(support)
    lengths = []
    power = np.eye(n, dtype=int)
    for k in range(1, 2 * n + 1):
        power = np.minimum(power @ support, 1)
        if np.trace(power) > 0:
            lengths.append(k)
    return reduce(math.gcd, lengths, 0)


def transitive_closure(weights) -> np.ndarray:
    """reach[i, j]: j is reachable from i (i reaches itself)."""
    support = np.asarray(weights) > 0
    reach = support | np.eye(len(support), dtype=bool)
    for k in range(len(support)):
        reach |= reach[:, [k]] & reach[[k], :]
    return reach


def eigenvalues(K) -> np.ndarray:
    """Eigenvalues by root finding on the characteristic polynomial."""
    return np.roots(np.poly(np.asarray(K, dtype=float)))

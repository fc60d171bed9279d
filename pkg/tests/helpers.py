"""Shared generators for the test suite: random reversible kernels and chains."""

import numpy as np


def random_pi(rng, m, floor=0.2):
    pi = rng.random(m) + floor
    return pi / pi.sum()


def random_reversible_kernel(rng, pi, activity=0.4):
    """K(x,y) = c A(x,y) / pi(x) for symmetric A, diagonal filled to row sum 1.

    Reversible w.r.t. pi by construction; `activity` < 1 keeps diagonals
    positive (lazy enough for gamma > 0).
    """
    m = len(pi)
    A = rng.random((m, m))
    A = A + A.T
    c = activity / max((A.sum(axis=1) / pi).max(), 1e-12)
    K = c * A / pi[:, None]
    K[np.diag_indices(m)] += 1.0 - K.sum(axis=1)
    return K


def random_kernels(rng, pi, k, activity=0.4):
    return tuple(random_reversible_kernel(rng, pi, activity) for _ in range(k))


def lazy(K):
    return 0.5 * (K + np.eye(K.shape[0]))

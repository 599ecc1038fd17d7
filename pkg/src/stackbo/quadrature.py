"""Gauss-Hermite rules normalized for expectations under a standard normal."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

MAX_ORDER = 100
DEFAULT_ORDER = 20


@dataclass(frozen=True)
class QuadratureRule:
    """``sum_k weights[k] * h(nodes[k])`` approximates ``E[h(Z)]``, ``Z ~ N(0, 1)``."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def shifted_nodes(self, mean, var):
        """Nodes ``mean + sqrt(var) * z_k``; broadcasts over array-valued moments."""
        mean = np.asarray(mean, dtype=np.float64)
        sd = np.sqrt(np.asarray(var, dtype=np.float64))
        return mean[..., None] + sd[..., None] * self.nodes


def gauss_hermite_rule(K):
    """Build the K-point rule from the Jacobi matrix of the probabilists' Hermite polynomials.

    The recurrence ``He_{k+1} = z He_k - k He_{k-1}`` gives a symmetric
    tridiagonal matrix with zero diagonal and off-diagonal ``sqrt(k)``; its
    eigenvalues are the nodes. Weights come from the Christoffel function
    ``1 / sum_j p_j(z)^2`` of the orthonormal polynomials, which keeps the
    tiny tail weights accurate where squared eigenvector entries underflow.
    """
    if isinstance(K, bool) or int(K) != K or not 1 <= K <= MAX_ORDER:
        raise ValueError(f"quadrature order must be an integer in [1, {MAX_ORDER}], got {K!r}")
    K = int(K)
    if K == 1:
        return QuadratureRule(1, np.zeros(1), np.ones(1))
    off = np.sqrt(np.arange(1, K, dtype=np.float64))
    nodes = eigh_tridiagonal(np.zeros(K), off, eigvals_only=True)
    # symmetrize away eigensolver round-off
    nodes = 0.5 * (nodes - nodes[::-1])
    p_prev, p = np.zeros(K), np.ones(K)
    norm2 = np.ones(K)
    for j in range(1, K):
        p_prev, p = p, (nodes * p - np.sqrt(j - 1) * p_prev) / np.sqrt(j)
        norm2 += p * p
    weights = 1.0 / norm2
    weights = 0.5 * (weights + weights[::-1])
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(K, nodes, weights)


def gaussian_expectation(h, mean, var, rule):
    """``E[h(T)]`` for ``T ~ N(mean, var)`` by the shifted rule."""
    if var < 0:
        raise ValueError(f"variance must be non-negative, got {var}")
    t = mean + np.sqrt(var) * rule.nodes
    vals = np.array([h(tk) for tk in t], dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand is not finite at a quadrature node")
    return float(rule.weights @ vals)

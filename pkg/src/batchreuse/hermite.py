"""Probabilists' Hermite polynomials and Gaussian expectation machinery.

Everything analytic in this package reduces to expectations of the form

    E[f(z)],   z ~ N(0, I_m),

and to Hermite coefficients nu_j = E[g(xi) He_j(xi)] of scalar functions.
He_j denotes the probabilists' polynomial (orthogonal under the standard
Gaussian with E[He_i He_j] = i! delta_ij), generated by

    He_0 = 1,  He_1 = x,  He_{n+1}(x) = x He_n(x) - n He_{n-1}(x).

Coefficient tables are kept in exact integer arithmetic up to degree 20 so
that low-degree identities can be checked without quadrature noise.
Expectations are computed by Gauss-Hermite quadrature, with tensor-product
rules capped at dimension 5; higher-dimensional integrals must fall back to
Monte Carlo at the call site.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import hermite_e

MAX_EXACT_DEGREE = 20
MAX_TENSOR_DIMENSION = 5
DEFAULT_NODE_COUNT = 40

# Points evaluated per chunk when a tensor-product grid is too large to
# materialize at once (40^5 nodes in 5D).
_CHUNK_POINTS = 1 << 18


def _coefficient_rows(max_degree: int) -> tuple[tuple[int, ...], ...]:
    """Monomial coefficients of He_0..He_max_degree, low order first."""
    rows: list[tuple[int, ...]] = [(1,)]
    if max_degree >= 1:
        rows.append((0, 1))
    for n in range(1, max_degree):
        cur, prev = rows[n], rows[n - 1]
        nxt = [0] * (n + 2)
        for i, c in enumerate(cur):
            nxt[i + 1] += c
        for i, c in enumerate(prev):
            nxt[i] -= n * c
        rows.append(tuple(nxt))
    return tuple(rows)


@dataclass(frozen=True)
class HermiteBasis:
    """Exact integer coefficient table for He_0 .. He_max_degree.

    coefficients[j][i] is the coefficient of x^i in He_j(x).  The table is
    built from the three-term recurrence, so it is exact for any degree,
    but degrees beyond roughly 20 are better evaluated through
    hermite_eval, which runs the recurrence in floating point instead of
    expanding into the (badly conditioned) monomial basis.
    """

    max_degree: int = MAX_EXACT_DEGREE
    coefficients: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.max_degree < 0:
            raise ValueError(f"max_degree must be >= 0, got {self.max_degree}")
        object.__setattr__(self, "coefficients", _coefficient_rows(self.max_degree))

    def polynomial(self, j: int) -> tuple[int, ...]:
        """Integer monomial coefficients of He_j, low order first."""
        if not 0 <= j <= self.max_degree:
            raise ValueError(f"degree {j} outside table range 0..{self.max_degree}")
        return self.coefficients[j]

    def eval_from_table(self, j: int, x: float) -> float:
        """Evaluate He_j(x) by Horner on the exact coefficients."""
        acc = 0.0
        for c in reversed(self.polynomial(j)):
            acc = acc * x + c
        return acc


def hermite_eval(j: int, x: float | np.ndarray) -> float | np.ndarray:
    """Probabilists' He_j(x) via the three-term recurrence.

    Accepts scalars or arrays; arrays are evaluated elementwise.  Works for
    any degree j >= 0 without a precomputed table.
    """
    if j < 0:
        raise ValueError(f"degree must be >= 0, got {j}")
    arr = np.asarray(x, dtype=float)
    prev = np.ones_like(arr)
    if j == 0:
        return float(prev) if arr.ndim == 0 else prev
    cur = arr.copy()
    for n in range(1, j):
        prev, cur = cur, arr * cur - n * prev
    return float(cur) if arr.ndim == 0 else cur


def gaussian_moment(k: int) -> float:
    """E[xi^k] for xi ~ N(0,1): (k-1)!! for even k, 0 for odd k."""
    if k < 0:
        raise ValueError(f"moment order must be >= 0, got {k}")
    if k % 2 == 1:
        return 0.0
    out = 1
    for m in range(k - 1, 0, -2):
        out *= m
    return float(out)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite rule for expectations under N(0, I_dimension).

    nodes and weights describe the one-dimensional rule; weights are
    normalized to sum to 1 so that sum_i w_i f(x_i) is an expectation, not
    a raw integral.  For dimension > 1 the full tensor-product grid is
    formed lazily during evaluation.  Exact on 1D polynomials of degree
    up to 2 * len(nodes) - 1.
    """

    nodes: np.ndarray
    weights: np.ndarray
    dimension: int = 1

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.ndim != 1 or weights.shape != nodes.shape:
            raise ValueError("nodes and weights must be 1D arrays of equal length")
        if not np.all(weights > 0):
            raise ValueError("quadrature weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 (Gaussian-normalized rule)")
        if not 1 <= self.dimension <= MAX_TENSOR_DIMENSION:
            raise ValueError(
                f"tensor-product dimension must be 1..{MAX_TENSOR_DIMENSION}, "
                f"got {self.dimension}"
            )

    @property
    def node_count(self) -> int:
        return int(self.nodes.size)

    def with_dimension(self, dimension: int) -> "QuadratureRule":
        return QuadratureRule(self.nodes, self.weights, dimension)


def gauss_hermite_rule(
    n_nodes: int = DEFAULT_NODE_COUNT, dimension: int = 1
) -> QuadratureRule:
    """Build a normalized probabilists' Gauss-Hermite rule.

    hermegauss returns nodes and weights for the weight function
    exp(-x^2/2); dividing the weights by their sum sqrt(2*pi) turns the
    quadrature sum into an expectation under N(0,1).
    """
    if n_nodes < 1:
        raise ValueError(f"need at least one node, got {n_nodes}")
    nodes, weights = hermite_e.hermegauss(n_nodes)
    return QuadratureRule(nodes, weights / weights.sum(), dimension)


def gauss_expectation(
    f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule
) -> float:
    """E[f(z)] for z ~ N(0, I_m), m = rule.dimension, by tensor quadrature.

    f must be vectorized: in 1D it receives the node array of shape (n,),
    in m > 1 dimensions it receives point blocks of shape (chunk, m) and
    must return one value per row.  Grids larger than a fixed chunk size
    are streamed so the 40^5 five-dimensional rule stays within memory.
    """
    m = rule.dimension
    x, w = rule.nodes, rule.weights
    if m == 1:
        vals = np.asarray(f(x), dtype=float)
        if vals.shape != x.shape:
            raise ValueError("f must return one value per 1D node")
        return float(w @ vals)

    n = x.size
    total_points = n**m
    acc = 0.0
    shape = (n,) * m
    for start in range(0, total_points, _CHUNK_POINTS):
        flat = np.arange(start, min(start + _CHUNK_POINTS, total_points))
        multi = np.unravel_index(flat, shape)
        points = np.stack([x[idx] for idx in multi], axis=1)
        block_w = w[multi[0]].copy()
        for idx in multi[1:]:
            block_w *= w[idx]
        vals = np.asarray(f(points), dtype=float)
        if vals.shape != flat.shape:
            raise ValueError("f must return one value per point row")
        acc += float(block_w @ vals)
    return acc


def hermite_coefficients(
    g: Callable[[np.ndarray], np.ndarray],
    max_j: int,
    rule: QuadratureRule | None = None,
) -> np.ndarray:
    """Unnormalized Hermite coefficients nu_j = E[g(xi) He_j(xi)], j=0..max_j.

    Note nu_j carries the factor j! relative to the orthonormal expansion:
    g = sum_j (nu_j / j!) He_j when g is square integrable.  The rule must
    be one-dimensional and should have at least (max_j + degree of g)/2 + 1
    nodes for polynomial g to come out exact.
    """
    if max_j < 0:
        raise ValueError(f"max_j must be >= 0, got {max_j}")
    if rule is None:
        rule = gauss_hermite_rule()
    if rule.dimension != 1:
        raise ValueError("hermite_coefficients needs a 1D rule")
    x, w = rule.nodes, rule.weights
    gx = np.asarray(g(x), dtype=float)
    if gx.shape != x.shape:
        raise ValueError("g must return one value per node")
    out = np.empty(max_j + 1)
    prev = np.ones_like(x)
    out[0] = float(w @ (gx * prev))
    if max_j >= 1:
        cur = x.copy()
        out[1] = float(w @ (gx * cur))
        for j in range(2, max_j + 1):
            prev, cur = cur, x * cur - (j - 1) * prev
            out[j] = float(w @ (gx * cur))
    return out

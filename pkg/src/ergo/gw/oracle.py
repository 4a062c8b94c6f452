"""Exhaustive reference minimizer for tiny GW instances.

Used only to check the entropic solver.  Three regimes:

* ``n == 1`` or ``m == 1``: the product coupling is the only feasible plan.
* ``n == m == 2``: sweep ``T(alpha) = [[alpha, 1/2 - alpha], [1/2 - alpha, alpha]]``.
* otherwise: evaluate every vertex of the transport polytope, plus a lattice
  over the free ``(n-1)(m-1)`` entries when that lattice is small.  For RBF
  similarity matrices the objective is concave on the polytope (``Ce`` is
  positive semi-definite, ``-log Cf`` is a conditionally negative definite
  squared distance), so its minimum sits on a vertex.
"""

from __future__ import annotations

import functools
import itertools

import numpy as np

from ..errors import ValidationError
from .solver import _Problem, _similarity_parts

MAX_CELLS = 16
_LATTICE_BUDGET = 20_000


def _objective_many(prob: _Problem, plans: np.ndarray) -> np.ndarray:
    # plans: (k, n, m)
    r = plans.sum(axis=2)
    const = np.einsum("ki,ij,kj->k", r, prob.ce_log_ce, r)
    G = np.einsum("ij,kjl,lm->kim", prob.ce, plans, prob.log_cf, optimize=True)
    return const - np.einsum("kij,kij->k", G, plans)


@functools.lru_cache(maxsize=None)
def transport_vertices(n: int, m: int) -> np.ndarray:
    """All vertices of the uniform-marginal transport polytope (with repeats
    removed), found as basic feasible solutions on ``n + m - 1`` cells."""
    a = np.full(n, 1.0 / n)
    b = np.full(m, 1.0 / m)
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A[n + j, j::m] = 1.0
    rhs = np.r_[a, b]
    # one constraint is redundant; drop the last column-sum row
    A, rhs = A[:-1], rhs[:-1]
    found = []
    for support in itertools.combinations(range(n * m), n + m - 1):
        sub = A[:, support]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, rhs)
        if np.any(x < -1e-12):
            continue
        T = np.zeros(n * m)
        T[list(support)] = np.clip(x, 0.0, None)
        found.append(T.reshape(n, m))
    if not found:
        return np.zeros((0, n, m))
    plans = np.unique(np.round(np.array(found), 12), axis=0)
    plans.setflags(write=False)
    return plans


def _lattice_plans(n: int, m: int, steps: int) -> np.ndarray:
    """Feasible plans whose free entries lie on a grid of ``steps`` levels."""
    a, b = 1.0 / n, 1.0 / m
    hi = min(a, b)
    levels = np.linspace(0.0, hi, steps + 1)
    free = (n - 1) * (m - 1)
    out = []
    for vals in itertools.product(levels, repeat=free):
        T = np.zeros((n, m))
        T[: n - 1, : m - 1] = np.reshape(vals, (n - 1, m - 1))
        T[: n - 1, m - 1] = a - T[: n - 1, : m - 1].sum(1)
        T[n - 1, :] = b - T[: n - 1, :].sum(0)
        if T.min() >= -1e-15:
            out.append(np.clip(T, 0.0, None))
    return np.array(out) if out else np.zeros((0, n, m))


def brute_force_gw(Ce, Cf, grid_resolution: float = 1e-4) -> float:
    """Smallest KL-GW objective found by exhaustive search (``n * m <= 16``)."""
    ce, log_ce = _similarity_parts(Ce, "Ce")
    cf, log_cf = _similarity_parts(Cf, "Cf")
    n, m = ce.shape[0], cf.shape[0]
    if n * m > MAX_CELLS:
        raise ValidationError(f"brute force limited to n*m <= {MAX_CELLS}, got {n}x{m}")
    if not 0 < grid_resolution < 0.5:
        raise ValidationError("grid_resolution must lie in (0, 0.5)")
    prob = _Problem(ce, log_ce, log_cf)
    if n == 1 or m == 1:
        T = np.outer(prob.a, prob.b)
        return float(prob.objective(T)[0])
    if n == m == 2:
        alpha = np.arange(0.0, 0.5 + grid_resolution / 2, grid_resolution)
        alpha = np.minimum(alpha, 0.5)
        plans = np.empty((alpha.size, 2, 2))
        plans[:, 0, 0] = plans[:, 1, 1] = alpha
        plans[:, 0, 1] = plans[:, 1, 0] = 0.5 - alpha
        return float(_objective_many(prob, plans).min())
    candidates = [transport_vertices(n, m)]
    free = (n - 1) * (m - 1)
    steps = int(round(min(1.0 / n, 1.0 / m) / grid_resolution))
    while steps > 1 and (steps + 1) ** free > _LATTICE_BUDGET:
        steps //= 2
    if steps >= 1:
        candidates.append(_lattice_plans(n, m, steps))
    plans = np.concatenate([c for c in candidates if len(c)])
    return float(_objective_many(prob, plans).min())

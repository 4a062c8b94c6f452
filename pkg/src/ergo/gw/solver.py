"""Entropic Gromov-Wasserstein solver for the KL distortion.

The objective ``sum_{ijkl} T_ij T_kl Ce_ik log(Ce_ik / Cf_jl)`` splits into a
part that only depends on the row sums of ``T`` and a bilinear part::

    r^T (Ce * log Ce) r  -  <Ce T log(Cf)^T, T>,      r = T 1

Each outer iteration linearizes the bilinear part at the current plan and
solves the resulting entropic transport problem with a log-stabilized
Sinkhorn loop (projected mirror descent with step ``1/epsilon``).
"""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import eigh
from scipy.special import logsumexp

from ..errors import NumericalError, ValidationError
from .kernels import DEFAULT_BANDWIDTH, SimilarityMatrix

log = logging.getLogger(__name__)

MARGINAL_TOLERANCE = 1e-6
_ABSORB_LIMIT = 30.0  # absorb scalings into the potentials past exp(+-30)
_INITS = ("product", "profile", "spectral", "spectral_flip")
_DEFAULT_INITS = ("spectral", "spectral_flip")


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 5e-3
    outer_max: int = 200
    sinkhorn_max: int = 500
    tol: float = 1e-7
    event_cap: int = 2000
    seed: int = 0
    bandwidth: float = DEFAULT_BANDWIDTH
    inits: tuple[str, ...] = _DEFAULT_INITS
    sinkhorn_tol: float = 1e-8
    exchange_steps: int = 64
    exchange_rounds: int = 1
    full_search_cells: int = 200_000
    vertex_tol: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "inits", tuple(self.inits))
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if self.outer_max < 1 or self.sinkhorn_max < 1:
            raise ValidationError("iteration limits must be positive")
        if not 0 < self.tol < 1:
            raise ValidationError("tol must lie in (0, 1)")
        if self.event_cap < 1:
            raise ValidationError("event_cap must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        if not self.bandwidth > 0:
            raise ValidationError("bandwidth must be positive")
        if not self.inits or any(i not in _INITS for i in self.inits):
            raise ValidationError(f"inits must be a non-empty subset of {_INITS}")
        if self.exchange_steps < 0 or self.exchange_rounds < 0:
            raise ValidationError("exchange limits must be non-negative")
        if not 0 < self.sinkhorn_tol < 1:
            raise ValidationError("sinkhorn_tol must lie in (0, 1)")
        if not 0 <= self.vertex_tol < 1:
            raise ValidationError("vertex_tol must lie in [0, 1)")
        if self.full_search_cells < 0:
            raise ValidationError("full_search_cells must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inits"] = list(self.inits)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown solver settings: {sorted(unknown)}")
        return cls(**{k: tuple(v) if k == "inits" else v for k, v in d.items()})

    def replace(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


@dataclass
class GwdResult:
    objective: float
    plan: np.ndarray = field(repr=False)
    iterations: int
    converged: bool
    marginal_violation: float
    init: str = "product"

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "marginal_violation": self.marginal_violation,
            "init": self.init,
        }


def _similarity_parts(C, name: str) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(C, SimilarityMatrix):
        values, logs = C.values, C.log_values
    else:
        values = np.asarray(C, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValidationError(f"{name} must be a square matrix, got shape {values.shape}")
        if np.any(values <= 0) or not np.all(np.isfinite(values)):
            raise ValidationError(f"{name} must hold strictly positive finite similarities")
        logs = np.log(values)
    if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] < 1:
        raise ValidationError(f"{name} must be a non-empty square matrix")
    if not np.allclose(values, values.T, rtol=0.0, atol=1e-12):
        raise ValidationError(f"{name} must be symmetric")
    return values, logs


def marginal_violation(T: np.ndarray) -> float:
    n, m = T.shape
    return float(max(np.abs(T.sum(1) - 1.0 / n).max(), np.abs(T.sum(0) - 1.0 / m).max()))


def gw_objective(Ce, Cf, T: np.ndarray) -> float:
    """KL-GW objective of a given plan (tensorized, exact for any ``T``)."""
    ce, log_ce = _similarity_parts(Ce, "Ce")
    cf, log_cf = _similarity_parts(Cf, "Cf")
    return _Problem(ce, log_ce, log_cf).objective(T)[0]


class _Problem:
    def __init__(self, ce: np.ndarray, log_ce: np.ndarray, log_cf: np.ndarray):
        self.ce = ce
        self.log_cf = log_cf
        self.ce_log_ce = ce * log_ce
        n, m = ce.shape[0], log_cf.shape[0]
        self.a = np.full(n, 1.0 / n)
        self.b = np.full(m, 1.0 / m)

    def bilinear(self, T: np.ndarray) -> np.ndarray:
        return (self.ce @ T) @ self.log_cf

    def objective(self, T: np.ndarray) -> tuple[float, np.ndarray]:
        G = self.bilinear(T)
        r = T.sum(axis=1)
        value = float(r @ self.ce_log_ce @ r - np.vdot(G, T))
        return value, G


def _sinkhorn_log(cost, a, b, eps, f, g, max_iter, tol):
    """Log-stabilized Sinkhorn with warm-started potentials.

    Returns ``(T, f, g, iterations, row_error)``.  Columns of ``T`` match
    ``b`` to rounding; rows are within ``row_error`` of ``a``.
    """
    log_a, log_b = np.log(a), np.log(b)

    def rescale(f, g):
        M = (f[:, None] + g[None, :] - cost) / eps
        f = f + eps * (log_a - logsumexp(M, axis=1))
        M = (f[:, None] + g[None, :] - cost) / eps
        g = g + eps * (log_b - logsumexp(M, axis=0))
        K = np.exp((f[:, None] + g[None, :] - cost) / eps)
        return f, g, K

    M = (f[:, None] + g[None, :] - cost) / eps
    top = M.max()
    if -_ABSORB_LIMIT < top < _ABSORB_LIMIT:
        # warm potentials keep the kernel in range: skip the log-domain pass
        K = np.exp(M)
    else:
        f, g, K = rescale(f, g)
    u = np.ones_like(a)
    v = np.ones_like(b)
    err = np.inf
    it = 0
    check = 5
    while it < max_iter:
        u_keep, v_keep = u, v
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            # under/overflow is detected and repaired just below
            for _ in range(min(check, max_iter - it)):
                u = a / (K @ v)
                v = b / (K.T @ u)
            lu, lv = np.log(u), np.log(v)
        it += min(check, max_iter - it)
        if not (np.isfinite(lu).all() and np.isfinite(lv).all()):
            # a scaling under/overflowed: fold the last good one into the potentials
            f, g = f + eps * np.log(u_keep), g + eps * np.log(v_keep)
            f, g, K = rescale(f, g)
            u, v = np.ones_like(a), np.ones_like(b)
            if not np.all(np.isfinite(K)):
                raise NumericalError(
                    "Sinkhorn produced non-finite marginals",
                    {"inner_iteration": it, "epsilon": eps},
                )
            continue
        err = float(np.abs(u * (K @ v) - a).max())
        if err <= tol:
            break
        if np.abs(lu).max() > _ABSORB_LIMIT or np.abs(lv).max() > _ABSORB_LIMIT:
            f, g = f + eps * lu, g + eps * lv
            f, g, K = rescale(f, g)
            u, v = np.ones_like(a), np.ones_like(b)
    f = f + eps * np.log(u)
    g = g + eps * np.log(v)
    T = u[:, None] * K * v[None, :]
    return T, f, g, it, err


def round_to_polytope(T: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rounding of Altschuler et al.: shrink over-full rows and columns, then
    spread the missing mass as a rank-one correction.  The result has the
    marginals ``a``, ``b`` up to floating-point error and differs from ``T``
    by at most twice its marginal error in l1."""
    T = T * np.minimum(a / T.sum(1), 1.0)[:, None]
    T = T * np.minimum(b / T.sum(0), 1.0)[None, :]
    err_r = a - T.sum(1)
    err_c = b - T.sum(0)
    total = err_r.sum()
    if total > 0:
        T = T + np.outer(err_r, err_c) / total
    return T


def _quantile_profiles(C: np.ndarray, levels: int = 32) -> np.ndarray:
    """Quantiles of each row's similarity distribution under uniform weights."""
    q = (np.arange(levels) + 0.5) / levels
    srt = np.sort(C, axis=1)
    n = C.shape[1]
    idx = np.minimum((q * n).astype(np.int64), n - 1)
    return srt[:, idx]


def _spectral_order(C: np.ndarray) -> np.ndarray:
    """Order points along the second leading eigenvector of their similarity
    matrix; the sign is fixed so the result is deterministic."""
    n = C.shape[0]
    if n < 3:
        vec = np.arange(n, dtype=np.float64)
    else:
        _, vecs = eigh(C, subset_by_index=[n - 2, n - 1])
        vec = vecs[:, 0]
        k = int(np.argmax(np.abs(vec)))
        if vec[k] < 0:
            vec = -vec
    return np.argsort(vec, kind="stable")


def monotone_plan(order_a: np.ndarray, order_b: np.ndarray) -> np.ndarray:
    """North-west-corner coupling of uniform marginals along two orderings."""
    n, m = order_a.size, order_b.size
    # cumulative mass boundaries on a common grid of n*m units keeps this exact
    T = np.zeros((n, m))
    i = j = 0
    left_i, left_j = m, n
    while i < n and j < m:
        step = min(left_i, left_j)
        T[order_a[i], order_b[j]] += step
        left_i -= step
        left_j -= step
        if left_i == 0:
            i += 1
            left_i = m
        if left_j == 0:
            j += 1
            left_j = n
    return T / (n * m)


def _initial_plan(kind: str, prob: _Problem, ce: np.ndarray, cf: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    a, b = prob.a, prob.b
    if kind == "product":
        return np.outer(a, b)
    if kind.startswith("spectral"):
        oe, of = _spectral_order(ce), _spectral_order(cf)
        if kind == "spectral_flip":
            of = of[::-1]
        return monotone_plan(oe, of)
    Qe = _quantile_profiles(ce)
    Qf = _quantile_profiles(cf)
    cost = (
        (Qe * Qe).sum(1)[:, None] + (Qf * Qf).sum(1)[None, :] - 2.0 * Qe @ Qf.T
    ) / Qe.shape[1]
    cost = np.maximum(cost, 0.0)
    T, *_ = _sinkhorn_log(
        cost, a, b, cfg.epsilon, np.zeros_like(a), np.zeros_like(b), cfg.sinkhorn_max, cfg.sinkhorn_tol
    )
    return round_to_polytope(T, a, b)


def _exact_plan(cost: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Optimal vertex of the linear transport problem (network simplex)."""
    # POT probes every installed deep-learning backend on import; none is needed here
    for key in ("PYTORCH", "JAX", "TENSORFLOW", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{key}", "1")
    import ot

    return ot.emd(a, b, np.ascontiguousarray(cost), numItermax=10_000_000)


def _vertex_descent(prob: _Problem, T: np.ndarray, rel_tol: float,
                    max_steps: int = 50) -> tuple[float, np.ndarray]:
    """Frank-Wolfe steps to vertices.  For a concave objective the vertex that
    minimizes the linearization at ``T`` is never worse than ``T`` itself, so
    this sharpens the entropic plan onto an exactly feasible vertex.  Stops
    once a step gains less than ``rel_tol`` relative to the objective."""
    obj, G = prob.objective(T)
    for step in range(max_steps):
        V = _exact_plan(-G, prob.a, prob.b)
        v_obj, G_v = prob.objective(V)
        if v_obj > obj or (step and not v_obj < obj):
            break
        gain = obj - v_obj
        T, obj, G = V, v_obj, G_v
        if step and gain <= rel_tol * abs(obj):
            break
    return obj, T


def _swap_gains(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Gain in ``sum_ab X[pi(a), pi(b)] * Y[a, b]`` for every transposition
    ``pi = (i k)``; ``X`` and ``Y`` symmetric."""
    Z = X @ Y
    dz = np.diag(Z)
    dx = np.diag(X)
    dy = np.diag(Y)
    full = 2.0 * (Z + Z.T - dz[:, None] - dz[None, :])
    # remove the b in {i, k} terms counted in ``full``, then add the exact 2x2 block change
    edge = 2.0 * (
        (X - dx[:, None]) * dy[:, None]
        + (dx[:, None] - X) * Y
        + (dx[None, :] - X) * Y
        + (X - dx[None, :]) * dy[None, :]
    )
    block = dx[None, :] * dy[:, None] + dx[:, None] * dy[None, :] - (dx * dy)[:, None] - (dx * dy)[None, :]
    gain = full - edge + block
    np.fill_diagonal(gain, 0.0)
    return gain


def _exchange_search(prob: _Problem, T: np.ndarray, max_steps: int) -> tuple[np.ndarray, int]:
    """Greedy row/column transpositions of ``T`` (both keep uniform marginals)
    while they lower the objective.  Returns the plan and the number of swaps."""
    L = prob.log_cf
    steps = 0
    while steps < max_steps:
        S = T @ L @ T.T
        R = T.T @ prob.ce @ T
        rows = _swap_gains(prob.ce, S)
        cols = _swap_gains(L, R)
        ri = np.unravel_index(np.argmax(rows), rows.shape)
        ci = np.unravel_index(np.argmax(cols), cols.shape)
        best = max(rows[ri], cols[ci])
        scale = abs(float(np.vdot(prob.bilinear(T), T))) + 1e-300
        if best <= 1e-12 * scale:
            break
        T = T.copy()
        if rows[ri] >= cols[ci]:
            i, k = ri
            T[[i, k], :] = T[[k, i], :]
        else:
            j, l = ci
            T[:, [j, l]] = T[:, [l, j]]
        steps += 1
    return T, steps


def _run(prob: _Problem, T: np.ndarray, cfg: SolverConfig) -> tuple[float, np.ndarray, int, bool]:
    a, b = prob.a, prob.b
    f = np.zeros_like(a)
    g = np.zeros_like(b)
    obj, G = prob.objective(T)
    best_obj, best_T = obj, T
    converged = False
    it = 0
    for it in range(1, cfg.outer_max + 1):
        T_new, f, g, _, _ = _sinkhorn_log(-G, a, b, cfg.epsilon, f, g, cfg.sinkhorn_max, cfg.sinkhorn_tol)
        # score only feasible plans, even when Sinkhorn stopped short
        T_new = round_to_polytope(T_new, a, b)
        new_obj, G = prob.objective(T_new)
        if not np.isfinite(new_obj):
            raise NumericalError("objective became non-finite", {"outer_iteration": it})
        if new_obj < best_obj:
            best_obj, best_T = new_obj, T_new
        change = abs(new_obj - obj)
        plan_change = float(np.abs(T_new - T).max())
        T, obj = T_new, new_obj
        if change <= cfg.tol * max(abs(new_obj), 1e-12) or plan_change <= 1e-15:
            converged = True
            break
    return best_obj, best_T, it, converged


def solve_gw(Ce, Cf, cfg: SolverConfig | None = None) -> GwdResult:
    """Minimize the KL-GW objective over couplings with uniform marginals.

    Runs one descent per configured initialization and keeps the lowest
    objective.  The objective is concave on the polytope for RBF similarities,
    so its minima sit on vertices.  Each entropic descent is therefore
    followed by Frank-Wolfe steps onto vertices, then by a greedy search over
    row and column transpositions of the plan (which keep the uniform
    marginals) that looks for a better basin.  Problems with more than
    ``full_search_cells`` plan entries skip the transposition search and
    descend only the initialization with the lowest starting objective.
    Deterministic.
    """
    cfg = cfg or SolverConfig()
    ce, log_ce = _similarity_parts(Ce, "Ce")
    cf, log_cf = _similarity_parts(Cf, "Cf")
    n, m = ce.shape[0], cf.shape[0]
    prob = _Problem(ce, log_ce, log_cf)
    if n == 1 or m == 1:
        T = np.outer(prob.a, prob.b)
        return GwdResult(prob.objective(T)[0], T, 0, True, marginal_violation(T), "product")

    starts = [(kind, _initial_plan(kind, prob, ce, cf, cfg)) for kind in cfg.inits]
    full = n * m <= cfg.full_search_cells
    if not full:
        starts = [min(starts, key=lambda kt: prob.objective(kt[1])[0])]
    rounds = cfg.exchange_rounds if full and cfg.exchange_steps else 0
    best: tuple | None = None
    for kind, T0 in starts:
        obj, T, iters, conv = _run(prob, T0, cfg)
        obj, T = _vertex_descent(prob, T, cfg.vertex_tol)
        for _ in range(rounds):
            T_x, swaps = _exchange_search(prob, T, cfg.exchange_steps)
            if swaps == 0:
                break
            obj_x, T_x = _vertex_descent(prob, T_x, cfg.vertex_tol)
            if not obj_x < obj:
                break
            obj, T = obj_x, T_x
        log.debug("init=%s objective=%.6g iterations=%d converged=%s", kind, obj, iters, conv)
        if best is None or obj < best[0]:
            best = (obj, T, iters, conv, kind)
    obj, T, iters, conv, kind = best
    viol = marginal_violation(T)
    return GwdResult(obj, T, iters, bool(conv and viol <= MARGINAL_TOLERANCE), viol, kind)

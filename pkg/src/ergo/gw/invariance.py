"""Feature transforms that leave the similarity matrix (and so the GWD) unchanged.

The data-dependent variance makes the RBF similarity invariant to any
affine map ``v -> a v + b`` of the embedded points, to appending a constant
vector, and to duplicating every coordinate: distances and the variance pick
up the same factor, which cancels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..errors import ValidationError
from .kernels import FeaturePointSet, similarity_matrix
from .solver import SolverConfig, solve_gw

TOLERANCE = 1e-12
AFFINE_A = (0.5, 3.0, -2.0)
AFFINE_B = (-1.0, 0.0, 10.0)


@dataclass(frozen=True)
class Affine:
    a: float
    b: float

    def __post_init__(self):
        if self.a == 0:
            raise ValidationError("affine scale a must be non-zero")

    @property
    def label(self) -> str:
        return f"affine(a={self.a:g},b={self.b:g})"


@dataclass(frozen=True)
class ConcatConstant:
    c: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(v) for v in np.atleast_1d(self.c)))
        if not self.c:
            raise ValidationError("constant vector must be non-empty")

    @property
    def label(self) -> str:
        return "concat_constant(" + ",".join(f"{v:g}" for v in self.c) + ")"


@dataclass(frozen=True)
class Duplicate:
    label: str = "duplicate"


Transform = Union[Affine, ConcatConstant, Duplicate]


def invariance_transform(points: FeaturePointSet, kind: Transform) -> FeaturePointSet:
    P = points.points
    if isinstance(kind, Affine):
        return FeaturePointSet(kind.a * P + kind.b, points.n_features)
    if isinstance(kind, ConcatConstant):
        extra = np.broadcast_to(np.asarray(kind.c), (P.shape[0], len(kind.c)))
        return FeaturePointSet(np.hstack([P, extra]), points.n_features + len(kind.c))
    if isinstance(kind, Duplicate):
        return FeaturePointSet(np.hstack([P, P]), 2 * points.n_features + 2)
    raise ValidationError(f"unknown invariance transform {kind!r}")


@dataclass
class SuiteResult:
    name: str
    max_deviation: float = 0.0
    cases: int = 0
    gwd_identical: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_deviation <= TOLERANCE

    def to_dict(self) -> dict:
        return {
            "suite": self.name,
            "max_deviation": self.max_deviation,
            "cases": self.cases,
            "gwd_bit_identical": self.gwd_identical,
            "passed": self.passed,
            "gwd_mismatches": self.failures,
        }


def random_point_set(rng: np.random.Generator, n: int, n_features: int) -> FeaturePointSet:
    feats = rng.normal(size=(n, n_features))
    pos = rng.uniform(0.0, 1.0, size=(n, 2))
    return FeaturePointSet(np.hstack([feats, pos]), n_features)


def run_invariance_suites(seed: int = 0, n_sets: int = 10, affine_a=AFFINE_A, affine_b=AFFINE_B,
                          constant=(7.0,), cfg: SolverConfig | None = None) -> list[SuiteResult]:
    """Check every transform on ``n_sets`` seeded random point sets.

    For each set a random event cloud supplies ``Ce``; the GWD against the
    original and the transformed feature set is compared bit for bit.
    """
    transforms: dict[str, list[Transform]] = {
        "affine": [Affine(float(a), float(b)) for a in affine_a for b in affine_b],
        "concat_constant": [ConcatConstant(tuple(constant))],
        "duplicate": [Duplicate()],
    }
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng(seed)
    suites = {name: SuiteResult(name) for name in transforms}
    for s in range(n_sets):
        n = int(rng.integers(6, 16))
        m = int(rng.integers(6, 16))
        events = rng.uniform(0.0, 1.0, size=(n, 4))
        events[:, 3] = rng.choice([-1.0, 1.0], size=n)
        Ce = similarity_matrix(events, h=cfg.bandwidth)
        pts = random_point_set(rng, m, int(rng.integers(1, 6)))
        Cf = similarity_matrix(pts.points, h=cfg.bandwidth)
        base = solve_gw(Ce, Cf, cfg).objective
        for name, kinds in transforms.items():
            res = suites[name]
            for kind in kinds:
                Cf_t = similarity_matrix(invariance_transform(pts, kind).points, h=cfg.bandwidth)
                dev = float(np.abs(Cf_t.values - Cf.values).max())
                res.max_deviation = max(res.max_deviation, dev)
                res.cases += 1
                gwd = solve_gw(Ce, Cf_t, cfg).objective
                if gwd == base:
                    res.gwd_identical += 1
                else:
                    res.failures.append(f"set {s} {kind.label}: {gwd!r} vs {base!r}")
    return list(suites.values())

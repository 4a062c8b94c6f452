"""Acceptance criteria AC1-AC10.

Every criterion records one PASS/FAIL line (printed at the end of the run by
``conftest.pytest_terminal_summary``) and then asserts at its stated
tolerance.  Directional criteria that the synthetic corpus does not reproduce
fail here on purpose; their analysis lives outside the package.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest

from ergo.cli import main
from ergo.corpus import DEMO_SCENE, demo_corpus
from ergo.events import slice_count
from ergo.experiments import sweep_blur, sweep_channels, sweep_samples
from ergo.gw.invariance import TOLERANCE, run_invariance_suites
from ergo.gw.kernels import embed_features, similarity_matrix
from ergo.gw.oracle import brute_force_gw
from ergo.gw.pipeline import gwd_sample_result
import ergo.gw.solver as solver
from ergo.gw.solver import SolverConfig
from ergo.report import canonical_json
from ergo.representations import PRESET_NAMES, build_preset, preset_builder
from ergo.synthetic import SyntheticSceneConfig, generate_synthetic_scene

CHANNELS = [1, 2, 4, 8, 12]
SIGMAS = [0.0, 1.0, 2.0, 4.0]
RANK_REPRS = ["hist2", "timesurface12", "voxel12", "mdes12"]


def random_similarity(rng: np.random.Generator, n: int, dim: int):
    return similarity_matrix(rng.uniform(0.0, 1.0, size=(n, dim)))


# ---------------------------------------------------------------- AC1

def test_ac1_solver_oracle_equivalence(record_ac):
    rng = np.random.default_rng(2024)
    worst, bad = 0.0, []
    t0 = time.perf_counter()
    for k in range(100):
        n, m = (int(v) for v in rng.integers(1, 5, size=2))
        Ce = random_similarity(rng, n, 4)
        Cf = random_similarity(rng, m, int(rng.integers(1, 6)))
        got = solver.solve_gw(Ce, Cf).objective
        ref = brute_force_gw(Ce, Cf)
        slack = max(0.05 * abs(ref), 1e-4)
        worst = max(worst, (got - ref) / slack)
        if got > ref + slack:
            bad.append((k, n, m, got, ref))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 60
    record_ac("AC1", ok, f"{100 - len(bad)}/100 within tolerance, worst gap {worst:.3f} of slack, {elapsed:.1f}s")
    assert not bad, bad[:5]
    assert elapsed < 60


# ---------------------------------------------------------------- AC2

def test_ac2_marginals_on_own_solves(record_ac, plan_log):
    rng = np.random.default_rng(7)
    for n, m in [(1, 9), (9, 1), (30, 17), (120, 90), (500, 700)]:
        solver.solve_gw(random_similarity(rng, n, 4), random_similarity(rng, m, 3))
    assert len(plan_log) >= 5
    worst = max(plan_log)
    # conftest overwrites this line with the whole-suite figure at session end
    record_ac("AC2", worst <= 1e-6, f"{len(plan_log)} plans so far, worst violation {worst:.2e}")
    assert worst <= 1e-6


# ---------------------------------------------------------------- AC3

def naive_quadruple_sum(Ce, Cf, T) -> float:
    """Every term T_ij T_kl Ce_ik log(Ce_ik / Cf_jl), enumerated one ``i`` at a time."""
    n, m = T.shape
    total = 0.0
    for i in range(n):
        # terms[k, j, l] for this i
        terms = Ce[i][:, None, None] * np.log(Ce[i][:, None, None] / Cf[None, :, :])
        total += float(np.einsum("j,kjl,kl->", T[i], terms, T))
    return total


SHAPES = [(1, 1), (1, 7), (6, 1), (2, 3), (4, 4), (5, 9), (12, 8), (20, 20), (33, 17), (40, 60),
          (64, 64), (90, 100), (100, 100), (10, 1000), (1000, 10), (50, 200), (7, 13), (25, 400),
          (400, 25), (3, 3000)]


def test_ac3_objective_audit(record_ac):
    rng = np.random.default_rng(3)
    worst = 0.0
    for n, m in SHAPES:
        assert n * m <= 10_000
        Ce = random_similarity(rng, n, 4).values
        Cf = random_similarity(rng, m, int(rng.integers(1, 13))).values
        res = solver.solve_gw(Ce, Cf)
        ref = naive_quadruple_sum(Ce, Cf, res.plan)
        rel = abs(res.objective - ref) / max(abs(ref), 1e-300)
        if ref == 0.0:
            rel = abs(res.objective)
        worst = max(worst, rel)
    record_ac("AC3", worst <= 1e-9, f"20 instances, worst relative error {worst:.2e}")
    assert worst <= 1e-9


# ---------------------------------------------------------------- AC4

def test_ac4_invariances(record_ac):
    suites = run_invariance_suites(seed=0, n_sets=10)
    dev = max(s.max_deviation for s in suites)
    cases = sum(s.cases for s in suites)
    same = sum(s.gwd_identical for s in suites)
    ok = dev <= TOLERANCE and same == cases
    record_ac("AC4", ok, f"similarity deviation {dev:.1e} (tol 1e-12), GWD bit-identical {same}/{cases}")
    assert dev <= TOLERANCE
    assert same == cases, [f for s in suites for f in s.failures][:5]


# ---------------------------------------------------------------- AC5-AC8 runners

DIRECTIONAL: dict[str, dict[str, bytes]] = {}


def run_ac5() -> dict[str, bytes]:
    cfg = SolverConfig(event_cap=1000)
    samples = demo_corpus().samples()
    return {f"sweep_channels_{fam}.json": canonical_json(
        sweep_channels(samples, fam, CHANNELS, cfg, len(samples)).to_dict()).encode()
        for fam in ("voxel", "mdes")}


def run_ac6() -> dict[str, bytes]:
    samples = demo_corpus().samples()
    rep = sweep_blur(samples, "voxel12", SIGMAS, SolverConfig(), len(samples))
    return {"sweep_blur.json": canonical_json(rep.to_dict()).encode()}


def run_ac7() -> dict[str, bytes]:
    study = sweep_samples(demo_corpus(200).samples(), RANK_REPRS, [25, 100, 200], SolverConfig())
    return {"sweep_samples.json": canonical_json(study.to_dict()).encode()}


def run_ac8(out) -> dict[str, bytes]:
    rc = main(["search", "--strategy", "exhaustive", "--channels", "12", "--event-cap", "500",
               "--n", "20", "--out", str(out)])
    assert rc == 0
    names = ["spec.json", "search_log.json", "search_report.json"]
    return {n: (out / n).read_bytes() for n in names}


def non_increasing(xs, slack=0.0) -> bool:
    return all(b <= a + slack for a, b in zip(xs, xs[1:]))


# ---------------------------------------------------------------- AC5

def test_ac5_channel_sweeps(record_ac):
    t0 = time.perf_counter()
    DIRECTIONAL["AC5"] = reports = run_ac5()
    elapsed = time.perf_counter() - t0
    verdicts, details = [], []
    for fam in ("voxel", "mdes"):
        means = [p["mean"] for p in json.loads(reports[f"sweep_channels_{fam}.json"])["points"]]
        drop = (means[0] - means[-1]) / abs(means[0])
        verdicts.append((non_increasing(means), drop))
        details.append(f"{fam} " + ",".join(f"{v:.4f}" for v in means))
    ok = all(mono for mono, _ in verdicts) and any(d >= 0.02 for _, d in verdicts) and elapsed < 600
    record_ac("AC5", ok, f"{'; '.join(details)}; {elapsed:.0f}s")
    assert elapsed < 600
    assert all(mono for mono, _ in verdicts), details
    assert any(d >= 0.02 for _, d in verdicts), details


# ---------------------------------------------------------------- AC6

def test_ac6_blur_sweep(record_ac):
    DIRECTIONAL["AC6"] = reports = run_ac6()
    means = [p["mean"] for p in json.loads(reports["sweep_blur.json"])["points"]]
    steps = [(b - a) / abs(a) for a, b in zip(means, means[1:])]
    ok = all(s >= 0.005 for s in steps)
    record_ac("AC6", ok, "voxel12 by sigma " + ",".join(f"{v:.4f}" for v in means))
    assert ok, means


# ---------------------------------------------------------------- AC7

def test_ac7_ranking_stability(record_ac):
    DIRECTIONAL["AC7"] = reports = run_ac7()
    table = {row["N"]: row for row in json.loads(reports["sweep_samples.json"])["ranking"]}
    tau = table[100]["kendall_tau"]
    record_ac("AC7", tau == 1.0, f"tau(100 vs 200) = {tau}; order at 200: {' < '.join(table[200]['order'])}")
    assert tau == 1.0


# ---------------------------------------------------------------- AC8

@pytest.mark.slow
def test_ac8_search_dominance(record_ac, tmp_path):
    t0 = time.perf_counter()
    DIRECTIONAL["AC8"] = reports = run_ac8(tmp_path)
    elapsed = time.perf_counter() - t0
    rep = json.loads(reports["search_report.json"])
    scores = rep["stage_scores"]
    mono = non_increasing(scores, 1e-9)
    beats = all(rep["final_score"] <= v for v in rep["baselines"].values())
    base = ", ".join(f"{k} {v:.4f}" for k, v in sorted(rep["baselines"].items()))
    last = json.loads(reports["search_log.json"])["stages"][-1]
    scored = next(c for c in last["candidates"] if c["channel"] == last["winner"])
    ok = mono and beats and len(scores) == 12 and elapsed < 4 * 3600
    record_ac("AC8", ok, f"final {rep['final_score']:.4f} (scored on {scored['n']} samples, "
                         f"{scored['skipped']} degenerate) vs {base}; stages non-increasing: {mono}; "
                         f"{elapsed / 60:.0f} min")
    assert len(scores) == 12 and set(rep["baselines"]) == set(PRESET_NAMES)
    assert mono, scores
    assert beats, rep["baselines"]
    assert elapsed < 4 * 3600


# ---------------------------------------------------------------- AC9

@pytest.mark.slow
def test_ac9_determinism(record_ac, tmp_path):
    runners = {"AC5": run_ac5, "AC6": run_ac6, "AC7": run_ac7,
               "AC8": lambda: run_ac8(tmp_path / "search")}
    differing = []
    for name, fn in runners.items():
        first = DIRECTIONAL.get(name) or fn()
        second = fn()
        differing += [f"{name}:{f}" for f in first if first[f] != second.get(f)]
    record_ac("AC9", not differing, "reports byte-identical" if not differing else f"differ: {differing}")
    assert not differing


# ---------------------------------------------------------------- AC10

@pytest.mark.benchmark
def test_ac10_performance(record_ac):
    scene = SyntheticSceneConfig(**{**DEMO_SCENE.to_dict(), "duration": 20.0})
    sample = slice_count(generate_synthetic_scene(scene), 0, 2000)
    pixels = embed_features(build_preset(sample, "voxel12")).size
    assert len(sample) == 2000 and pixels <= 1500
    t0 = time.perf_counter()
    res = gwd_sample_result(sample, preset_builder("voxel12"), SolverConfig(event_cap=2000))
    elapsed = time.perf_counter() - t0
    ok = elapsed < 30 and math.isfinite(res.objective)
    record_ac("AC10", ok, f"2000 events x {pixels} pixels in {elapsed:.1f}s")
    assert ok

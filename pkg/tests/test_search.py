from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergo.corpus import demo_corpus
from ergo.errors import ValidationError
from ergo.gw.solver import SolverConfig
from ergo.representations import ChannelSpec, RepresentationSpec, WindowSpec, window_basis
from ergo.search import (
    CandidateSpace,
    CorpusEvaluator,
    ProposalStrategy,
    SearchState,
    enumerate_candidates,
    evaluate_candidate,
    propose,
    _ridge_predict,
    stagewise_search,
)

FAST = SolverConfig(event_cap=60)


@pytest.fixture(scope="module")
def tiny():
    return demo_corpus(3).samples()


def test_space_total():
    space = CandidateSpace()
    assert space.total == 196 == len(space.all()) == len(set(space.all()))


def test_enumerate_minus_chosen():
    space = CandidateSpace()
    all_ = space.all()
    assert len(enumerate_candidates(space, SearchState())) == 196
    assert len(enumerate_candidates(space, SearchState(chosen=all_[:1]))) == 195
    assert len(enumerate_candidates(space, SearchState(chosen=all_[:12]))) == 184


def test_enumeration_order():
    space = CandidateSpace()
    keys = [space.order_key(c) for c in space.all()]
    assert keys == sorted(keys)
    assert space.all()[0] == ChannelSpec(window_basis()[0], "t_pos", "max")


def test_propose_exhaustive_and_random():
    space = CandidateSpace()
    state = SearchState()
    assert len(propose(state, space, ProposalStrategy("exhaustive"))) == 196
    a = propose(state, space, ProposalStrategy("random_k", 100, seed=1))
    b = propose(state, space, ProposalStrategy("random_k", 100, seed=1))
    assert a == b and len(a) == len(set(a)) == 100
    assert a != propose(state, space, ProposalStrategy("random_k", 100, seed=2))
    assert len(propose(state, space, ProposalStrategy("random_k", 300, seed=1))) == 196


def test_propose_surrogate_two_phases():
    space = CandidateSpace()
    state = SearchState()
    strat = ProposalStrategy("surrogate", 10, seed=0)
    first = propose(state, space, strat)
    assert len(first) == 5
    state.evaluations.append([(c, 0.0 if c.aggregation == "max" else 1.0) for c in first])
    second = propose(state, space, strat)
    assert len(second) == 5 and not set(second) & set(first)
    # the ranked half is the five lowest ridge predictions over the remaining pool
    pool = [c for c in space.all() if c not in first]
    pred = dict(zip(pool, _ridge_predict(space, state.evaluations[0], pool)))
    assert max(pred[c] for c in second) <= min(pred[c] for c in pool if c not in second)
    state.evaluations[0] += [(c, 0.5) for c in second]
    assert propose(state, space, strat) == []


def test_strategy_validation():
    with pytest.raises(ValidationError):
        ProposalStrategy("gryffin")
    with pytest.raises(ValidationError):
        ProposalStrategy("random_k", 0)


def test_evaluate_candidate(tiny):
    ev = CorpusEvaluator(tiny, FAST, N=3, n_channels=12)
    c = CandidateSpace().all()[10]
    a = evaluate_candidate(SearchState(), c, ev)
    assert a.n == 3 and a.skipped == 0
    assert a.mean == evaluate_candidate(SearchState(), c, ev).mean
    with pytest.raises(ValidationError):
        evaluate_candidate(SearchState(chosen=[c]), c, ev)


def test_zero_padding_matches_single_channel_family(tiny):
    from ergo.gw.pipeline import gwd_batch
    from ergo.representations import FamilyBuilder
    c = ChannelSpec(WindowSpec("count", 0.0, 1.0), "p", "sum")
    ev = CorpusEvaluator(tiny, FAST, N=2, n_channels=12)
    padded = ev.score([c]).mean
    plain = gwd_batch(tiny, FamilyBuilder(RepresentationSpec((c,))), FAST, 2).mean
    # zero channels shift no pairwise distance, so the similarity matrices match
    assert padded == pytest.approx(plain, rel=1e-12)


def test_restricted_space_two_stages(tiny):
    space = CandidateSpace(windows=(WindowSpec("count", 0.0, 1.0),), measurements=("p",),
                           aggregations=("sum", "max"))
    res = stagewise_search(tiny, space, ProposalStrategy(), FAST, n_channels=2, N=2)
    assert sorted(c.aggregation for c in res.spec.channels) == ["max", "sum"]
    first_scores = {c.aggregation: s for c, s in res.state.evaluations[0]}
    assert res.state.stage_scores[0] == min(first_scores.values())
    assert res.spec.channels[0].aggregation == min(first_scores, key=first_scores.get)


def test_single_stage_is_global_argmin(tiny):
    space = CandidateSpace(windows=tuple(window_basis()[3:5]), measurements=("t", "p", "c"),
                           aggregations=("sum", "mean"))
    res = stagewise_search(tiny, space, ProposalStrategy(), FAST, n_channels=1, N=2)
    scores = res.state.evaluations[0]
    best = min(s for _, s in scores)
    assert res.state.stage_scores == [best]
    tied = [c for c, s in scores if s == best]
    assert res.spec.channels[0] == min(tied, key=space.order_key)


def test_search_log_and_spec_files(tmp_path, tiny):
    space = CandidateSpace(windows=(WindowSpec("count", 0.0, 1.0),), measurements=("t", "p"),
                           aggregations=("sum",))
    res = stagewise_search(tiny, space, ProposalStrategy(), FAST, n_channels=2, N=2)
    spec_path, log_path = res.save(tmp_path)
    assert RepresentationSpec.load(spec_path) == res.spec
    log = json.loads(log_path.read_text())
    assert log["stage_scores"] == res.state.stage_scores
    assert [len(s["candidates"]) for s in log["stages"]] == [2, 1]


def test_search_reproducible_and_parallel(tiny):
    space = CandidateSpace(windows=tuple(window_basis()[:2]), measurements=("t", "c"),
                           aggregations=("max", "sum"))
    a = stagewise_search(tiny, space, ProposalStrategy(), FAST, n_channels=2, N=2)
    b = stagewise_search(tiny, space, ProposalStrategy(), FAST, n_channels=2, N=2, jobs=2)
    assert a.log_dict() == b.log_dict()


def test_no_duplicate_channels(tiny):
    space = CandidateSpace(windows=(WindowSpec("count", 0.0, 1.0),), measurements=("p", "c"),
                           aggregations=("sum", "max"))
    res = stagewise_search(tiny, space, ProposalStrategy(), FAST, n_channels=4, N=1)
    assert len(set(res.spec.channels)) == 4


def test_search_validation(tiny):
    space = CandidateSpace(windows=(WindowSpec("count", 0.0, 1.0),), measurements=("p",),
                           aggregations=("sum",))
    with pytest.raises(ValidationError):
        stagewise_search(tiny, space, ProposalStrategy(), FAST, n_channels=2)
    with pytest.raises(ValidationError):
        stagewise_search(tiny, space, ProposalStrategy(), FAST, n_channels=0)


def test_exhaustive_dominates_random_k(tiny):
    cfg = SolverConfig(event_cap=40)
    ex = stagewise_search(tiny, CandidateSpace(), ProposalStrategy(), cfg, n_channels=2, N=1)
    rk = stagewise_search(tiny, CandidateSpace(), ProposalStrategy("random_k", 100, seed=0), cfg,
                          n_channels=2, N=1)
    for s_ex, s_rk in zip(ex.state.stage_scores, rk.state.stage_scores):
        assert s_ex <= s_rk


def test_stage_one_prefers_time_measurement(tiny):
    res = stagewise_search(tiny, CandidateSpace(), ProposalStrategy(), SolverConfig(event_cap=100),
                           n_channels=1, N=3)
    winner = res.spec.channels[0]
    assert winner.measurement in ("t", "t_pos", "t_neg"), winner.label()


@settings(max_examples=20)
@given(st.integers(0, 195), st.integers(1, 196), st.integers(0, 1000))
def test_random_k_subset_property(n_chosen, k, seed):
    space = CandidateSpace()
    state = SearchState(chosen=space.all()[:n_chosen])
    out = propose(state, space, ProposalStrategy("random_k", k, seed))
    assert len(out) == min(k, 196 - n_chosen)
    assert not set(out) & set(state.chosen)

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snrlab.corpus import cyclic_dataset, make_circle_embeddings
from snrlab.errors import ConfigError, InvalidBudgetError, UndefinedRatioError
from snrlab.refine import (
    DEFAULT_GAMMA_VIS,
    DEFAULT_TOP_P,
    ETA_CAP_TABLE,
    RemaskSchedule,
    eta_cap_for_budget,
    fig5_toy_draft,
    posterior_for_draft,
    remask_probability,
    run_refinement,
    top_p_sample,
    write_trace_jsonl,
)
from snrlab.seeding import child_rng


@pytest.fixture(scope="module")
def k7():
    return cyclic_dataset(7), make_circle_embeddings(7)


def test_remask_probability_reference_value():
    sched = RemaskSchedule(strategy="cap-loop", eta_cap=0.01, alpha_loop=0.9)
    assert remask_probability(0.3, 0.5, sched) == pytest.approx(0.18, abs=1e-12)


def test_remask_probability_zero_outside_window():
    sched = RemaskSchedule(strategy="cap-loop")
    assert remask_probability(0.6, 0.5, sched) == 0.0
    assert remask_probability(0.04, 0.5, sched) == 0.0
    assert remask_probability(0.55, 0.5, sched) == 0.0  # window is [t_off, t_on)
    assert remask_probability(0.05, 0.5, sched) > 0.0


def test_remask_probability_rejects_all_masked():
    sched = RemaskSchedule(strategy="cap-loop")
    with pytest.raises(UndefinedRatioError):
        remask_probability(0.3, 1.0, sched)


def test_eta_cap_table_values():
    assert ETA_CAP_TABLE == {128: 0.010, 256: 0.008, 512: 0.007, 1024: 0.002}
    for T, cap in ETA_CAP_TABLE.items():
        assert eta_cap_for_budget(T) == cap


def test_eta_cap_interpolation_and_clamping():
    mid = eta_cap_for_budget(192)
    assert 0.008 < mid < 0.010
    assert eta_cap_for_budget(64) == 0.010
    assert eta_cap_for_budget(4096) == 0.002
    with pytest.raises(InvalidBudgetError):
        eta_cap_for_budget(0)


def test_schedule_validation():
    with pytest.raises(ConfigError):
        RemaskSchedule(strategy="bogus")
    with pytest.raises(ConfigError):
        RemaskSchedule(t_on=0.1, t_off=0.5)
    with pytest.raises(ConfigError):
        RemaskSchedule(eta_cap=0.0)


def test_all_masked_draft_gives_uniform_marginals():
    data = cyclic_dataset(5)
    emb = make_circle_embeddings(5)
    post = posterior_for_draft(np.full(5, 5), 10.0, data, emb)
    assert np.allclose(post, 0.2)


def test_fig5_draft_layout(k7):
    draft, truth = fig5_toy_draft()
    assert np.array_equal(truth, np.arange(7))
    assert np.array_equal(draft, [7, 7, 2, 3, 1, 5, 5])


def test_fig5_planted_errors_have_lowest_committed_confidence(k7):
    data, emb = k7
    draft, _ = fig5_toy_draft()
    post = posterior_for_draft(draft, 10.0, data, emb)
    visible = np.flatnonzero(draft != 7)
    conf = {int(i): post[i, draft[i]] for i in visible}
    wrong = {4, 6}
    for bad in wrong:
        for good in set(conf) - wrong:
            assert conf[bad] < conf[good]


def test_fig5_recovery_with_default_seed(k7):
    data, emb = k7
    draft, truth = fig5_toy_draft()
    sched = RemaskSchedule(strategy="confidence")
    trace = run_refinement(draft, 10, sched, DEFAULT_GAMMA_VIS, DEFAULT_TOP_P, 0, data, emb)
    assert np.array_equal(trace.final_draft, truth)


def test_final_step_time_is_one_over_T(k7):
    data, emb = k7
    sched = RemaskSchedule(strategy="cap-loop")
    trace = run_refinement(np.full(7, 7), 128, sched, 10.0, DEFAULT_TOP_P, 1, data, emb)
    assert trace.steps[0].t == 1.0
    assert trace.steps[-1].t == pytest.approx(1.0 / 128)
    assert trace.T == 128


def test_run_is_deterministic_given_seed(k7):
    data, emb = k7
    sched = RemaskSchedule(strategy="cap-loop")
    a = run_refinement(np.full(7, 7), 32, sched, 10.0, DEFAULT_TOP_P, 5, data, emb)
    b = run_refinement(np.full(7, 7), 32, sched, 10.0, DEFAULT_TOP_P, 5, data, emb)
    assert np.array_equal(a.drafts(), b.drafts())


def test_final_draft_fully_revealed(k7):
    data, emb = k7
    sched = RemaskSchedule(strategy="cap-loop")
    trace = run_refinement(np.full(7, 7), 64, sched, 10.0, DEFAULT_TOP_P, 2, data, emb)
    assert np.all(trace.final_draft != 7)


def test_hard_remask_reintroduces_masks(k7):
    data, emb = k7
    sched = RemaskSchedule(strategy="cap-loop", eta_cap=0.01, refresh_unmasked=False)
    trace = run_refinement(np.full(7, 7), 128, sched, 2.0, DEFAULT_TOP_P, 3, data, emb)
    remasked_steps = [s for s in trace.steps if s.remasked]
    assert remasked_steps
    for s in remasked_steps:
        assert np.all(s.draft_after[list(s.remasked)] == 7)


def test_top_p_sample_restricted_to_nucleus():
    rng = child_rng(0)
    probs = np.array([0.5, 0.45, 0.05])
    draws = {top_p_sample(probs, 0.9, rng) for _ in range(200)}
    assert draws <= {0, 1}


@given(st.integers(0, 30))
@settings(max_examples=10, deadline=None)
def test_top_p_one_covers_support(seed):
    rng = child_rng(seed)
    probs = np.array([0.25, 0.25, 0.25, 0.25])
    v = top_p_sample(probs, 1.0, rng)
    assert 0 <= v < 4


def test_trace_jsonl_roundtrip(tmp_path, k7):
    data, emb = k7
    draft, _ = fig5_toy_draft()
    sched = RemaskSchedule(strategy="confidence")
    trace = run_refinement(draft, 10, sched, 10.0, DEFAULT_TOP_P, 0, data, emb)
    path = tmp_path / "trace.jsonl"
    write_trace_jsonl(trace, path)
    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(records) == 10
    assert records[0]["step"] == 0
    assert records[-1]["draft"] == [int(v) for v in trace.final_draft]
    assert all(len(r["max_prob"]) == 7 for r in records)

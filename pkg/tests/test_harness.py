import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbo import harness
from mbo.errors import InsufficientDataError, MalformedContentError, ParameterError, TrialError, VersionError
from mbo.harness import (AggregateReport, RunConfig, TrialResult, aggregate, apply_options, cross_task,
                         emit_report, load_results, loads_results, run, run_trial, save_results, summarize,
                         worker_count)
from mbo.optimizers import GradConfig
from mbo.stats import bootstrap_ci, iqm, percentile_score, stratified_bootstrap_ci
from mbo.surrogate import TrainConfig
from mbo.tasks import build_dataset, score_normalize


def trial(p100, p50=None, best=0.5, seed=0):
    p50 = p100 if p50 is None else p50
    return TrialResult(seed, np.array([p50, p100]), np.array([p50, p100]), p100, p50, best)


# -- percentile and iqm ---------------------------------------------------------------

def test_percentile_examples():
    assert percentile_score([0.1, 0.9, 0.5], 100) == 0.9
    assert percentile_score([1, 2, 3, 4], 50) == 2


def test_percentile_against_a_full_sort():
    s = np.random.default_rng(0).normal(size=128)
    assert percentile_score(s, 50) == sorted(s.tolist())[63]


@settings(max_examples=50)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.randoms())
def test_percentile_max_is_permutation_invariant(v, r):
    shuffled = list(v)
    r.shuffle(shuffled)
    assert percentile_score(v, 100) == max(v) == percentile_score(shuffled, 100)


def test_percentile_errors():
    with pytest.raises(InsufficientDataError):
        percentile_score([], 50)
    with pytest.raises(ParameterError):
        percentile_score([1.0], 0)


def test_iqm_examples():
    assert iqm(np.arange(1, 101)) == 50.5
    assert iqm([1.0, 2.0, 6.0]) == 3.0
    assert iqm(np.full(9, 0.25)) == 0.25
    with pytest.raises(InsufficientDataError):
        iqm([])


@settings(max_examples=50)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.data())
def test_iqm_is_monotone(v, data):
    i = data.draw(st.integers(0, len(v) - 1))
    bump = data.draw(st.floats(0, 1e3))
    raised = list(v)
    raised[i] += bump
    assert iqm(raised) >= iqm(v) - 1e-9
    assert min(v) - 1e-9 <= iqm(v) <= max(v) + 1e-9


# -- bootstrap -------------------------------------------------------------------------

def test_bootstrap_constant():
    for stat in ("mean", "median", "iqm"):
        assert bootstrap_ci(np.full(10, 0.3), stat, seed=1) == (0.3, 0.3)


def test_bootstrap_width_matches_normal_theory():
    v = np.random.default_rng(2).normal(size=30)
    lo, hi = bootstrap_ci(v, "mean", seed=3)
    target = 2 * 1.96 / math.sqrt(30)
    assert 0.7 * target <= hi - lo <= 1.3 * target


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1), st.sampled_from(["mean", "median", "iqm"]))
def test_bootstrap_brackets_the_point(n, seed, stat):
    v = np.random.default_rng(seed).normal(size=n)
    s = summarize(v, seed)
    lo, hi = s.ci[stat]
    assert lo <= {"mean": s.mean, "median": s.median, "iqm": s.iqm}[stat] <= hi


def test_bootstrap_is_seeded_and_needs_two_values():
    v = np.random.default_rng(4).normal(size=12)
    assert bootstrap_ci(v, seed=5) == bootstrap_ci(v, seed=5)
    with pytest.raises(InsufficientDataError):
        bootstrap_ci([1.0])


def test_stratified_single_group_is_plain_bootstrap():
    v = np.random.default_rng(6).normal(size=15)
    assert stratified_bootstrap_ci({"a": v}, seed=7) == bootstrap_ci(v, seed=7)


# -- aggregation ----------------------------------------------------------------------

def test_single_trial_aggregate():
    r = aggregate([trial(0.7)])
    assert r.p100.mean == r.p100.median == r.p100.iqm == 0.7
    assert r.p100.std == 0.0
    assert r.p100.ci["mean"] == (0.7, 0.7)


def test_two_trial_aggregate():
    r = aggregate([trial(0.0), trial(1.0)])
    assert r.p100.mean == 0.5
    assert r.p100.std == pytest.approx(math.sqrt(0.5), abs=1e-15)


def test_aggregate_iqm_is_consistent():
    values = np.random.default_rng(8).uniform(size=8)
    r = aggregate([trial(v) for v in values])
    assert r.p100.iqm == iqm(values)
    assert values.min() <= r.p100.iqm <= values.max()


def test_aggregate_needs_trials():
    with pytest.raises(ParameterError):
        aggregate([])


def test_cross_task_equal_weights():
    a = aggregate([trial(v) for v in (0.0, 0.2)], task="a", method="m")
    b = aggregate([trial(v) for v in (1.0, 1.0, 1.0, 1.0)], task="b", method="m")
    out = cross_task([a, b])
    assert out["mean"]["point"] == pytest.approx(0.55)
    lo, hi = out["mean"]["ci"]
    assert lo <= 0.55 <= hi


# -- reports --------------------------------------------------------------------------

def test_markdown_table():
    r = aggregate([trial(0.41234, 0.2)], task="toy", method="grad")
    text = emit_report({"grad": r})
    lines = text.strip().splitlines()
    assert len(lines) == 4     # header, rule, method, dataset-best
    assert "| toy | grad | 0.412 ± 0.000 | 0.200 ± 0.000 |" in lines
    assert lines[-1].startswith("| toy | dataset-best | 0.500")


def test_null_method_row_is_the_reference():
    rs = {m: aggregate([trial(0.5)], task="toy", method=m) for m in ("grad", "dataset-best")}
    lines = emit_report(rs).strip().splitlines()
    assert len(lines) == 4 and sum("dataset-best" in line for line in lines) == 1


def test_json_report_round_trip():
    rs = {"grad": aggregate([trial(v, v / 2) for v in (0.3, 0.6, 0.9)], task="toy", method="grad")}
    body = json.loads(emit_report(rs, "json", {"K": 128}))
    assert body["version"] == 1 and body["config"] == {"K": 128}
    assert AggregateReport.from_dict(body["reports"]["grad"]) == rs["grad"]


def test_json_report_adds_cross_task_for_many_tasks():
    rs = {f"grad {t}": aggregate([trial(0.5), trial(0.6)], task=t, method="grad") for t in ("a", "b")}
    assert "cross_task" in json.loads(emit_report(rs, "json"))


def test_report_errors():
    with pytest.raises(ParameterError):
        emit_report({})
    with pytest.raises(ParameterError):
        emit_report({"m": aggregate([trial(0.1)])}, "html")


# -- trials ---------------------------------------------------------------------------

def test_single_candidate_trial(toy_task):
    t = run_trial(toy_task, "dataset-best", None, 1, 0)
    assert t.p100 == t.p50 == t.normalized_scores[0]


def test_dataset_best_trial(toy_task, toy_dataset):
    t = run_trial(toy_task, "dataset-best", None, 128, 0)
    assert t.p100 == t.dataset_best == score_normalize(toy_task, toy_dataset.scores.max())
    assert t.p100 >= t.p50


def test_trial_is_deterministic(toy_task):
    cfg = GradConfig(steps=20, train=TrainConfig(hidden=(16,), epochs=5))
    assert run_trial(toy_task, "grad", cfg, 16, 2) == run_trial(toy_task, "grad", cfg, 16, 2)


def test_trial_errors_name_the_seed(toy_task):
    with pytest.raises(TrialError) as e:
        run_trial(toy_task, "dataset-best", None, len(build_dataset(toy_task, 9)) + 1, 9)
    assert e.value.seed == 9


def test_run_config_validation():
    with pytest.raises(ParameterError):
        RunConfig("toy-quadratic", "grad", K=0)
    with pytest.raises(ParameterError):
        RunConfig("toy-quadratic", "grad", base_seed=-1)
    with pytest.raises(ParameterError):
        RunConfig("toy-quadratic", "nope")
    assert RunConfig("toy-quadratic", "grad", trials=3, base_seed=10).seeds() == [10, 11, 12]


def test_apply_options():
    cfg = apply_options(GradConfig(), ["steps=5", "lr=1", "train.hidden=[8, 8]", "mode=min"])
    assert cfg.steps == 5 and cfg.lr == 1.0 and isinstance(cfg.lr, float)
    assert cfg.train.hidden == (8, 8) and cfg.mode == "min"
    for bad in (["nope=1"], ["steps"], ["steps.x=1"]):
        with pytest.raises(ParameterError):
            apply_options(GradConfig(), bad)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("MBO_THREADS", "3")
    assert worker_count() == 3
    for bad in ("0", "x"):
        monkeypatch.setenv("MBO_THREADS", bad)
        with pytest.raises(ParameterError):
            worker_count()


def test_parallel_trials_match_sequential(monkeypatch):
    config = RunConfig("toy-quadratic", "dataset-best", K=8, trials=3)
    monkeypatch.setenv("MBO_THREADS", "1")
    seq = run(config)
    monkeypatch.setenv("MBO_THREADS", "2")
    par = run(config)
    assert seq.trials == par.trials and seq.report == par.report


# -- results files ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def record():
    return run(RunConfig("toy-quadratic", "dataset-best", K=8, trials=2), workers=1)


def test_results_round_trip_is_byte_identical(record, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_results(a, record)
    loaded = load_results(a)
    save_results(b, loaded)
    assert a.read_bytes() == b.read_bytes()
    assert loaded.trials == record.trials and loaded.report == record.report


def test_run_writes_output(tmp_path):
    out = tmp_path / "r.json"
    run(RunConfig("toy-quadratic", "dataset-best", K=4, trials=1, output_path=str(out)), workers=1)
    assert load_results(out).config.K == 4


def test_truncated_results(record):
    text = harness.dumps_results(record)
    with pytest.raises(MalformedContentError):
        loads_results(text[: len(text) // 2])
    with pytest.raises(MalformedContentError):
        loads_results(json.dumps({"version": 1, "config": {}}))


def test_results_version_mismatch(record):
    d = json.loads(harness.dumps_results(record))
    d["version"] = 2
    with pytest.raises(VersionError):
        loads_results(json.dumps(d))
    del d["version"]
    with pytest.raises(MalformedContentError):
        loads_results(json.dumps(d))

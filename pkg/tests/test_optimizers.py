import inspect
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.spatial import ConvexHull, Delaunay

from mbo import tasks
from mbo.density import fit_weighted, sample
from mbo.errors import InitializationError, NumericalError
from mbo.harness import apply_options
from mbo.optimizers import METHODS, BoQeiConfig, CbasConfig, CmaEsConfig, ComsConfig, GradConfig, MinsConfig
from mbo.optimizers import ReinforceConfig, prepare
from mbo.optimizers.bo import (GaussianProcess, bo_qei_propose, cholesky_jitter, greedy_qei_batch,
                               q_expected_improvement)
from mbo.optimizers.cbas import (_refit, autofocus_weights, cbas_propose, cbas_weights, clamped_ratio,
                                 exceedance)
from mbo.optimizers.cmaes import CMA, cma_es_propose, default_population, run_cma
from mbo.optimizers.coms import coms_propose, coms_settings
from mbo.optimizers.grad import grad_ascent_propose
from mbo.optimizers.mins import mins_propose
from mbo.optimizers.reinforce import advantages, filter_ensemble, reinforce_propose
from mbo.space import Continuous, Discrete, denormalize
from mbo.surrogate import MlpModel, SurrogateEnsemble, TrainConfig, fit_reweighted, fit_surrogate, predict
from mbo.tasks import (Dataset, DatasetSpec, Task, build_dataset, make_discrete_lookup, oracle_evaluate_batch)

TINY = TrainConfig(hidden=(16,), epochs=10)
SMALL = TrainConfig(hidden=(32, 32), epochs=20)


def linear_ensemble(w):
    return SurrogateEnsemble((MlpModel((np.asarray(w, float)[:, None],), (np.zeros(1),)),), np.zeros(1))


@pytest.fixture(scope="module")
def small_lookup():
    t = make_discrete_lookup(4, 3)
    return t, build_dataset(t, 0)


def quick_config(name):
    cfg = METHODS[name].default_config()
    opts = []
    if hasattr(cfg, "train"):
        opts.append("train.hidden=[16]")
        opts.append("train.epochs=5")
    extra = {
        "grad": ["steps=20"], "grad-min": ["steps=20", "ensemble=2"], "grad-mean": ["steps=20", "ensemble=2"],
        "cma-es": ["iterations=5"], "reinforce": ["iterations=10", "ensemble=2"],
        "cbas": ["iterations=3", "samples=64", "ensemble=2"],
        "autofocused-cbas": ["iterations=3", "samples=64", "ensemble=2", "refit_epochs=2"],
        "bo-qei": ["rounds=2", "pool=64", "gp_subsample=64"], "coms": ["ascent_steps=5"],
    }
    return apply_options(cfg, opts + extra.get(name, []))


# -- contracts shared by every method --------------------------------------------

@pytest.mark.parametrize("name", sorted(METHODS))
@pytest.mark.parametrize("which", ["toy", "lookup"])
def test_propose_contract(name, which, toy_task, toy_dataset, small_lookup, monkeypatch):
    task, ds = (toy_task, toy_dataset) if which == "toy" else small_lookup
    k = 16
    method = METHODS[name]

    def forbidden(*a, **kw):
        raise AssertionError("the oracle was reached during propose")

    monkeypatch.setattr(tasks, "_score", forbidden)
    a = method.propose(ds, task.space, quick_config(name), k, 3)
    b = method.propose(ds, task.space, quick_config(name), k, 3)
    monkeypatch.undo()
    assert len(a) == k
    task.space.validate(a.designs)
    assert np.array_equal(a.designs, b.designs)
    assert np.array_equal(a.surrogate_scores, b.surrogate_scores, equal_nan=True)


def test_propose_never_sees_the_task():
    for m in METHODS.values():
        params = list(inspect.signature(m.propose).parameters)
        assert params[:5] == ["dataset", "space", "cfg", "k", "seed"]
        assert "task" not in params


def test_too_few_rows_for_k(small_lookup):
    task, ds = small_lookup
    with pytest.raises(InitializationError):
        grad_ascent_propose(ds, task.space, GradConfig(steps=0, train=TINY), len(ds) + 1, 0)


# -- gradient ascent -------------------------------------------------------------

def test_grad_beats_the_dataset(toy_task, toy_dataset):
    c = grad_ascent_propose(toy_dataset, toy_task.space, GradConfig(), 128, 0)
    assert oracle_evaluate_batch(toy_task, c.designs).max() > toy_dataset.scores.max()


@pytest.mark.parametrize("which", ["toy", "lookup"])
def test_zero_steps_returns_top_k(which, toy_task, toy_dataset, small_lookup):
    task, ds = (toy_task, toy_dataset) if which == "toy" else small_lookup
    c = grad_ascent_propose(ds, task.space, GradConfig(steps=0, train=TINY), 16, 0)
    assert np.array_equal(c.designs, ds.designs[ds.top_k(16)])


def test_steps_on_a_linear_surrogate(toy_task, toy_dataset):
    w = np.array([0.01, -0.02])
    rows = toy_dataset.top_k(8)
    prep = prepare(toy_dataset, toy_task.space)
    c = grad_ascent_propose(toy_dataset, toy_task.space, GradConfig(steps=3, lr=0.05), 8, 0,
                            ensemble=linear_ensemble(w))
    moved = (c.designs - toy_dataset.designs[rows]) / prep.x_norm.std
    assert np.allclose(moved, 3 * 0.05 * math.sqrt(2) * w, rtol=0, atol=1e-12)


def test_affine_score_rescaling_keeps_candidates(toy_task, toy_dataset):
    shifted = Dataset(toy_dataset.designs, 3.0 * toy_dataset.scores + 11.0, toy_dataset.task_name)
    cfg = GradConfig(steps=50, train=TINY)
    a = grad_ascent_propose(toy_dataset, toy_task.space, cfg, 16, 1)
    b = grad_ascent_propose(shifted, toy_task.space, cfg, 16, 1)
    assert np.allclose(a.designs, b.designs, rtol=0, atol=1e-8)


def test_grad_mode_names(toy_task, toy_dataset):
    c = grad_ascent_propose(toy_dataset, toy_task.space, GradConfig(mode="min", steps=1, ensemble=2, train=TINY),
                            4, 0)
    assert c.method_name == "grad-min"


# -- CMA-ES ------------------------------------------------------------------------

@pytest.mark.parametrize("popsize", [None, 256])
def test_cma_converges_on_a_bowl(popsize):
    lam = popsize or default_population(2, 1)
    es, _, _ = run_cma(lambda x: -np.sum(x**2, axis=1), [0.6, 0.8], 0.5, lam, lam // 4 if popsize else lam // 2,
                       200, 0)
    assert np.linalg.norm(es.mean) <= 1e-2


def test_cma_with_exact_oracle_hook(toy_task, toy_dataset):
    prep = prepare(toy_dataset, toy_task.space)
    exact = lambda z: -np.sum(denormalize(prep.x_norm, z) ** 2, axis=1)  # noqa: E731
    c = cma_es_propose(toy_dataset, toy_task.space, CmaEsConfig(iterations=60), 32, 0, objective=exact)
    assert np.all(np.linalg.norm(c.designs, axis=1) < 0.05)
    assert np.all(np.diff(c.surrogate_scores) <= 0)


def test_cma_zero_iterations_draws_from_the_start(toy_task, toy_dataset):
    prep = prepare(toy_dataset, toy_task.space)
    cfg = CmaEsConfig(iterations=0, population=32, train=TINY)
    c = cma_es_propose(toy_dataset, toy_task.space, cfg, 8, 4)
    mean0 = prep.x[toy_dataset.top_k(8)].mean(axis=0)
    first = CMA(mean0, 0.5, 32, 8, np.random.default_rng(np.random.SeedSequence([4, 1]))).ask()
    decoded = prep.decode(prep.project(first))
    for d in c.designs:
        assert np.any(np.all(np.abs(decoded - d) <= 1e-12, axis=1))


def test_cma_default_population():
    assert default_population(2, 1) == 4 + math.floor(3 * math.log(2))
    assert default_population(2, 128) == 256


# -- REINFORCE --------------------------------------------------------------------

def test_constant_objective_leaves_the_policy(toy_task, toy_dataset):
    prep = prepare(toy_dataset, toy_task.space)
    c = reinforce_propose(toy_dataset, toy_task.space, ReinforceConfig(iterations=15, batch=16), 8, 0,
                          objective=lambda z: np.full(len(z), 2.5))
    start = np.concatenate([prep.x[toy_dataset.top_k(8)].mean(axis=0), np.log(prep.x.std(axis=0))])
    for theta in c.info["policy_history"]:
        assert np.array_equal(theta, start)


def test_advantages_of_constant_values_are_zero():
    assert np.array_equal(advantages(np.full(7, 0.1)), np.zeros(7))
    assert np.allclose(advantages(np.array([1.0, 2.0, 3.0])), [-1, 0, 1])


def test_linear_objective_pushes_the_mean_up():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (200, 1))
    ds = Dataset(x, x[:, 0].copy(), "line")
    space = Continuous.box(1, -100, 100)
    c = reinforce_propose(ds, space, ReinforceConfig(iterations=25, batch=32), 8, 0, objective=lambda z: z[:, 0])
    means = [theta[0] for theta in c.info["policy_history"]]
    start = prepare(ds, space).x[ds.top_k(8)].mean()
    assert np.all(np.diff([start] + means) > 0)


def test_filtering_by_validation_loss():
    models = tuple(MlpModel((np.zeros((1, 1)),), (np.array([float(i)]),)) for i in range(3))
    e = SurrogateEnsemble(models, np.array([0.5, 2.0, 0.1]))
    kept, fallback = filter_ensemble(e, math.inf)
    assert len(kept) == 3 and not fallback
    kept, fallback = filter_ensemble(e, 1.0)
    assert kept.val_losses.tolist() == [0.5, 0.1] and not fallback
    kept, fallback = filter_ensemble(e, 0.01)
    assert kept.val_losses.tolist() == [0.1] and fallback


def test_threshold_fallback_warns(toy_task, toy_dataset):
    with pytest.warns(UserWarning):
        c = reinforce_propose(toy_dataset, toy_task.space,
                              ReinforceConfig(iterations=1, batch=8, val_threshold=-1.0, ensemble=2, train=TINY), 4, 0)
    assert c.info["threshold_fallback"] and c.info["members"] == 1


# -- CbAS ------------------------------------------------------------------------------

def test_ratio_is_one_when_densities_match():
    rng = np.random.default_rng(1)
    p0 = fit_weighted(rng.normal(size=(40, 2)), np.ones(40))
    batch = sample(p0, 30, 2)
    w = cbas_weights(batch, p0, p0, np.zeros(30), np.ones(30), -np.inf)
    assert np.array_equal(w, np.ones(30))
    assert np.array_equal(clamped_ratio(np.zeros(3)), np.ones(3))


def test_unit_weights_refit_is_plain_mle():
    rng = np.random.default_rng(2)
    p0 = fit_weighted(rng.normal(size=(40, 3)), np.ones(40))
    batch = sample(p0, 200, 3)
    w = cbas_weights(batch, p0, p0, rng.normal(size=200), rng.uniform(0.1, 1, 200), -np.inf)
    refit = fit_weighted(batch, w)
    assert np.abs(refit.mean - batch.mean(axis=0)).max() <= 1e-10
    mle = np.cov(batch.T, bias=True) + 1e-4 * np.eye(3)
    assert np.abs(refit.covariance - mle).max() <= 1e-10


def test_exceedance_is_gaussian_tail():
    assert exceedance(np.array([0.0]), np.array([1.0]), 0.0)[0] == pytest.approx(0.5)
    assert exceedance(np.array([0.0]), np.array([1.0]), -np.inf)[0] == 1.0
    assert exceedance(np.array([0.0]), np.array([0.0]), 1.0)[0] < 1e-12


def test_cbas_trend_on_the_toy_bowl(toy_task, toy_dataset):
    # non-decreasing read as a trend: sampled means plateau once the density settles
    up = 0
    for seed in range(20):
        c = cbas_propose(toy_dataset, toy_task.space, CbasConfig(train=SMALL), 128, seed, history=True)
        means = np.array([oracle_evaluate_batch(toy_task, b).mean() for b in c.info["batches"]])
        slope = np.polyfit(np.arange(len(means)), means, 1)[0]
        up += slope >= 0 and means[-1] >= means[0]
    assert up >= 16


def test_cbas_records_early_stop(toy_task, toy_dataset):
    # a threshold far above every prediction leaves almost no weight mass
    c = cbas_propose(toy_dataset, toy_task.space, CbasConfig(iterations=5, samples=64, threshold=1e6, ensemble=2,
                                                             train=TINY), 8, 0)
    assert c.info["early_stop"] == 0
    assert len(c) == 8


# -- autofocus --------------------------------------------------------------------

def test_autofocus_weights_start_at_one(toy_task, toy_dataset):
    prep = prepare(toy_dataset, toy_task.space)
    p0 = fit_weighted(prep.x, np.ones(len(prep.x)))
    w = autofocus_weights(prep.x, p0, p0)
    assert np.array_equal(w, np.ones(len(prep.x)))
    base = SurrogateEnsemble((fit_surrogate((prep.x, prep.y), TINY)[0],), np.zeros(1))
    assert _refit(prep, base, w, CbasConfig(train=TINY), 0) is base


def test_autofocus_weights_are_clamped():
    far = fit_weighted(np.array([[50.0, 50.0], [51.0, 49.0]]), np.ones(2))
    near = fit_weighted(np.random.default_rng(3).normal(size=(30, 2)), np.ones(30))
    x = np.vstack([np.random.default_rng(4).normal(size=(20, 2)), [[50.0, 50.0]]])
    w = autofocus_weights(x, near, far)
    assert np.all(w >= 1 / 20 - 1e-15) and np.all(w <= 20 + 1e-12)
    assert w.min() == pytest.approx(1 / 20) and w.max() == pytest.approx(20)


def test_reweighting_lowers_the_weighted_error():
    # two clusters with conflicting trends and a net too small to fit both
    for seed in range(3):
        rng = np.random.default_rng(seed)
        xa, xb = rng.normal(-1, 0.3, (60, 1)), rng.normal(1, 0.3, (300, 1))
        x = np.vstack([xa, xb])
        y = np.concatenate([xa[:, 0] ** 2, -xb[:, 0]])
        w = autofocus_weights(x, fit_weighted(x, np.ones(len(x))), fit_weighted(xa, np.ones(60)))
        cfg = TrainConfig(hidden=(2,), epochs=60, batch=32)
        plain, _ = fit_surrogate((x, y), cfg)
        weighted = fit_reweighted((x, y), w, cfg)
        err = lambda m: np.sum(w * (predict(m, x) - y) ** 2) / w.sum()  # noqa: E731
        assert err(weighted) < err(plain)


# -- MINs -------------------------------------------------------------------------------

def test_mins_concentrates_on_the_best_design(toy_task, toy_dataset):
    c = mins_propose(toy_dataset, toy_task.space, MinsConfig(y_margin=0.0, bandwidth=1e-6), 32, 0,
                     report_scores=False)
    best = toy_dataset.designs[toy_dataset.top_k(1)[0]]
    assert np.all(np.linalg.norm(c.designs - best, axis=1) < 0.1)


def test_mins_discrete_designs_are_valid(small_lookup):
    task, ds = small_lookup
    c = mins_propose(ds, task.space, MinsConfig(train=TINY), 16, 0)
    task.space.validate(c.designs)
    assert c.designs.dtype.kind == "i"


def test_mins_improves_on_the_dataset_mean(toy_task, toy_dataset):
    c = mins_propose(toy_dataset, toy_task.space, MinsConfig(), 128, 0, report_scores=False)
    assert oracle_evaluate_batch(toy_task, c.designs).mean() > toy_dataset.scores.mean()


# -- BO-qEI -----------------------------------------------------------------------------

def test_qei_without_uncertainty_at_the_incumbent():
    rng = np.random.default_rng(6)
    assert q_expected_improvement(np.full(4, 1.5), np.zeros((4, 4)), 1.5, 64, rng) == 0.0


def test_gp_interpolates_separated_labels():
    # points three lengthscales apart keep the kernel matrix well conditioned
    g = np.arange(5) * 3.0
    x = np.array([[a, b] for a in g for b in g])
    y = np.random.default_rng(7).normal(size=len(x))
    mean, _ = GaussianProcess(x, y, 1.0, 1e-6).posterior(x)
    assert np.all(np.abs(mean - y) <= 10 * 1e-6 * max(1.0, np.abs(y).max()))


def test_gp_residual_is_noise_times_weights():
    rng = np.random.default_rng(8)
    x, y = rng.normal(size=(30, 2)), rng.normal(size=30)
    k = np.exp(-np.sum((x[:, None] - x[None]) ** 2, axis=2) / 2) * y.var() + 1e-3 * np.eye(30)
    alpha = np.linalg.solve(k, y - y.mean())
    mean, _ = GaussianProcess(x, y, 1.0, 1e-3).posterior(x)
    assert np.allclose(y - mean, 1e-3 * alpha, rtol=1e-8, atol=1e-10)


def test_zero_rounds_keeps_best_labelled_rows():
    task = Task("toy-small", Continuous.box(2, -2, 2), "quadratic", {}, -8.0, 0.0, DatasetSpec(300, 50.0, "uniform"))
    ds = build_dataset(task, 0)
    prep = prepare(ds, task.space)
    label = lambda z: -np.sum(z**2, axis=1) + z[:, 0]  # noqa: E731
    c = bo_qei_propose(ds, task.space, BoQeiConfig(rounds=0), 16, 0, label=label)
    order = np.argsort(-label(prep.x), kind="stable")[:16]
    assert np.allclose(c.designs, ds.designs[order], rtol=0, atol=1e-12)


def test_greedy_batch_is_distinct():
    draws = np.random.default_rng(8).normal(size=(64, 10))
    picked = greedy_qei_batch(draws, 0.0, 5)
    assert len(set(picked)) == 5


def test_cholesky_jitter():
    singular = np.ones((3, 3))
    l = cholesky_jitter(singular)
    assert np.allclose(l @ l.T, singular, atol=1e-6)
    with pytest.raises(NumericalError):
        cholesky_jitter(-np.eye(2))


# -- COMs ------------------------------------------------------------------------------

def test_coms_defaults():
    discrete, cont = Discrete(8, 4), Continuous.box(2, -1, 1)
    assert coms_settings(ComsConfig(), discrete, 32) == (2.0, 2.0 * math.sqrt(32))
    assert coms_settings(ComsConfig(), cont, 2) == (0.5, 0.05 * math.sqrt(2))
    assert ComsConfig().ascent_steps == 50


@pytest.mark.parametrize("which", ["toy", "lookup"])
def test_coms_without_penalty_is_gradient_ascent(which, toy_task, toy_dataset, small_lookup):
    task, ds = (toy_task, toy_dataset) if which == "toy" else small_lookup
    d = prepare(ds, task.space).dim
    _, lr = coms_settings(ComsConfig(), task.space, d)
    a = coms_propose(ds, task.space, ComsConfig(alpha=0.0, train=TINY), 16, 2)
    b = grad_ascent_propose(ds, task.space, GradConfig(steps=50, lr=lr / math.sqrt(d), train=TINY), 16, 2)
    assert np.array_equal(a.designs, b.designs)


def hull_distance(hull_points, x):
    tri = Delaunay(hull_points)
    hull = ConvexHull(hull_points)
    out = []
    for p in x:
        if tri.find_simplex(p) >= 0:
            out.append(0.0)
            continue
        best = math.inf
        for i, j in hull.simplices:
            a, b = hull_points[i], hull_points[j]
            t = np.clip(np.dot(p - a, b - a) / np.dot(b - a, b - a), 0, 1)
            best = min(best, float(np.linalg.norm(p - (a + t * (b - a)))))
        out.append(best)
    return float(np.mean(out))


def test_coms_stays_nearer_the_data():
    # data confined to a corner of the box so the hull is informative
    task = Task("corner", Continuous.box(2, -2, 2), "quadratic", {}, -8.0, 0.0, DatasetSpec(400, 100.0, "uniform"))
    cfg = TrainConfig(hidden=(32, 32), epochs=10)
    cons, free = [], []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = rng.uniform([0.5, 0.5], [2.0, 2.0], (300, 2))
        ds = Dataset(x, oracle_evaluate_batch(task, x), "corner")
        cons.append(hull_distance(x, coms_propose(ds, task.space, ComsConfig(train=cfg), 32, seed).designs))
        free.append(hull_distance(x, coms_propose(ds, task.space, ComsConfig(alpha=0.0, train=cfg), 32, seed).designs))
    assert np.mean(cons) <= np.mean(free)

import numpy as np
import pytest

from l2ral.alsim import (
    ConfigError, ExperimentConfig, PoolError, PoolState, TrainedModels, evaluate, make_target, rank_agreement,
    run_cycle, run_experiment, run_single, train_cycle,
)
from l2ral.datasets import Dataset, DatasetSpec, build_dataset, standardize
from l2ral.models import LossPredictor, LossPredictorConfig, target_forward
from l2ral.reporting import rows_from_results, summarize


def small_config(**kw):
    base = dict(
        dataset=DatasetSpec(size=400, test_size=200, seed=1),
        initial_size=40, budget=20, cycles=3, subset_size=100, batch_size=4, epochs=3, seeds=(0, 1),
    )
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def data():
    return build_dataset(small_config().dataset)


def test_pool_partition_and_label():
    pool = PoolState.initial(np.arange(20) % 3, 5, seed=0)
    assert pool.check() and len(pool.labeled) == 5
    new = pool.unlabeled[:3]
    labels = pool.label(new)
    assert pool.check() and len(pool.labeled) == 8
    np.testing.assert_array_equal(labels, new % 3)
    with pytest.raises(PoolError):
        pool.label(new[:1])
    with pytest.raises(PoolError):
        pool.label([pool.unlabeled[0]] * 2)


@pytest.mark.parametrize("strategy", ["pairwise", "listwise"])
def test_gradient_stop_every_epoch(strategy, data, sorter_d4):
    config = small_config(epochs=4)
    snapshots = {}
    for attach in (True, False):
        pool = PoolState.initial(data.y_train, config.initial_size, seed=0)
        states = []
        train_cycle(pool, data, config, strategy, 0, 0, sorter=sorter_d4, attach_lpm=attach,
                    epoch_callback=lambda e, target, lpm: states.append(target.state_dict()))
        snapshots[attach] = states
    assert len(snapshots[True]) == config.epochs
    for a, b in zip(snapshots[True], snapshots[False]):
        assert all(a[k].tobytes() == b[k].tobytes() for k in a)


@pytest.mark.parametrize("strategy", ["random", "entropy", "coreset"])
def test_unlearned_strategies_have_no_lpm(strategy, data):
    pool = PoolState.initial(data.y_train, 40, seed=0)
    models = train_cycle(pool, data, small_config(), strategy, 0, 0)
    assert models.lpm is None
    assert evaluate(models, data.x_test, data.y_test)[2] is None


def test_lpm_skips_partial_batches(data, sorter_d4):
    config = small_config(batch_size=8, initial_size=6)
    pool = PoolState.initial(data.y_train, 6, seed=0)
    models = train_cycle(pool, data, config, "pairwise", 0, 0)
    fresh = LossPredictor(LossPredictorConfig(feature_dim=models.target.feature_dim, hidden=config.lpm_hidden),
                          seed=np.random.SeedSequence([0, 4, 0, 3]))
    state = models.lpm.state_dict()
    assert all(state[k].tobytes() == v.tobytes() for k, v in fresh.state_dict().items())


def test_overfit_small_labeled_set(data):
    config = small_config(batch_size=32, epochs=60)
    pool = PoolState.initial(data.y_train, 64, seed=0)
    models = train_cycle(pool, data, config, "random", 0, 0)
    batch = target_forward(models.target, data.x_train[pool.labeled])
    assert np.mean(batch.predictions.argmax(axis=1) == data.y_train[pool.labeled]) >= 0.99


def test_run_cycle_grows_labeled_set(data):
    config = small_config()
    pool = PoolState.initial(data.y_train, 40, seed=0)
    before = pool.unlabeled.copy()
    models = train_cycle(pool, data, config, "entropy", 0, 0)
    selection, pool = run_cycle(pool, data, config, models, "entropy", 0, 0)
    assert len(pool.labeled) == 40 + config.budget
    assert np.all(np.isin(selection.indices, before)) and np.all(np.isin(selection.indices, pool.labeled))
    assert pool.check()


def test_run_cycle_budget_exceeds_remainder(data):
    config = small_config(budget=500)
    pool = PoolState.initial(data.y_train, 40, seed=0)
    models = train_cycle(pool, data, small_config(), "random", 0, 0)
    with pytest.raises(PoolError):
        run_cycle(pool, data, config, models, "random", 0, 0)


def test_evaluate_perfect_and_degenerate(data):
    target = make_target(small_config(), data, 0)
    # A zero network with output bias on the true class of a single-class test set is perfect.
    for p in target.parameters():
        p.data[:] = 0.0
    target.out_b.data[:] = [5.0, 0.0, 0.0, 0.0]
    y = np.zeros(len(data.y_test), dtype=np.int64)
    lpm = LossPredictor(LossPredictorConfig(feature_dim=target.feature_dim, init="zeros"))
    metric, value, rho, degenerate = evaluate(TrainedModels(target, lpm), data.x_test, y)
    assert (metric, value) == ("accuracy", 1.0)
    assert rho == 0.0 and degenerate


def test_rank_agreement_exact():
    l = np.random.default_rng(0).exponential(size=50)
    assert rank_agreement(l, l.copy()) == (1.0, False)
    assert rank_agreement(l, np.zeros(50)) == (0.0, True)


def test_run_experiment_shares_initial_sets_and_reruns(data, sorter_d4):
    config = small_config(strategies=("random", "entropy", "listwise"))
    res = run_experiment(config, sorter=sorter_d4, dataset=data)
    again = run_experiment(config, sorter=sorter_d4, dataset=data)
    def table(results):
        return [[(c.cycle, c.labeled, c.value, c.spearman) for c in r.records] for r in results]

    assert table(res) == table(again)
    for run in res:
        assert run.error is None
        assert [c.labeled for c in run.records] == [40, 60, 80]
    pools = [PoolState.initial(data.y_train, 40, np.random.SeedSequence([s, 0])).labeled for s in (0, 1)]
    assert not np.array_equal(pools[0], pools[1])


def test_summary_matches_hand_calculation(data):
    res = run_experiment(small_config(cycles=2, seeds=(0, 1, 2)), dataset=data)
    rows = rows_from_results(res)
    summary = {(s.metric, s.cycle): s for s in summarize(rows)}
    values = [r.value for r in rows if r.cycle == 1]
    s = summary[("accuracy", 1)]
    assert s.mean == pytest.approx(sum(values) / 3, abs=1e-15)
    assert s.std == pytest.approx(np.sqrt(sum((v - s.mean) ** 2 for v in values) / 2), abs=1e-15)


def test_entropy_on_regression_raises_documented_error():
    config = small_config(dataset=DatasetSpec(kind="hard-regression", size=300, test_size=100), cycles=2)
    (run,) = run_experiment(config.__class__(**{**config.__dict__, "strategies": ("entropy",)}), seeds=(0,))
    assert "entropy strategy requires class posteriors" in run.error
    assert len(run.records) == 1  # partial results up to the failing query are kept


def test_config_validation(sorter_d4):
    with pytest.raises(ConfigError, match="train-sorter"):
        small_config(strategies=("listwise",)).validate()
    with pytest.raises(ConfigError, match="length"):
        small_config(strategies=("listwise",), batch_size=8).validate(sorter=sorter_d4)
    with pytest.raises(ConfigError, match="even"):
        small_config(strategies=("pairwise",), batch_size=5).validate()
    with pytest.raises(ConfigError, match="exceeds pool"):
        small_config(budget=200).validate()
    with pytest.raises(ConfigError, match="unknown strategy"):
        small_config(strategies=("vaal",)).validate()


def planted_dataset(seed):
    """Four clean, well separated clusters plus one cluster with random labels."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0, 4.0, size=(5, 8))
    n = 1000
    comp = rng.integers(0, 5, size=n)
    x = centers[comp] + rng.normal(0, 0.5, size=(n, 8))
    y = np.where(comp < 4, comp, rng.integers(0, 4, size=n))
    return standardize(Dataset(x[:800], y[:800], x[800:], y[800:], "classification", 4)), comp[:800] == 4


def test_listwise_oversamples_noisy_cluster(sorter_d4):
    config = small_config(initial_size=100, budget=50, cycles=2, subset_size=400, epochs=20, batch_size=4)
    shares, base = [], []
    for seed in range(5):
        data, noisy = planted_dataset(seed)
        pool = PoolState.initial(data.y_train, config.initial_size, np.random.SeedSequence([seed, 0]))
        models = train_cycle(pool, data, config, "listwise", seed, 0, sorter=sorter_d4)
        selection, _ = run_cycle(pool, data, config, models, "listwise", seed, 0)
        shares.append(noisy[selection.indices].mean())
        base.append(noisy.mean())
    assert np.mean(shares) >= 1.5 * np.mean(base)

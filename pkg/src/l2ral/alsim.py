"""Pool-based active-learning simulation.

Each cycle retrains the target model on the labeled set, trains the loss
predictor (for learned strategies) on detached features and losses of the
same mini-batches, evaluates on the test split, then queries the oracle for
``budget`` new labels drawn from a random candidate subset.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .datasets import DatasetSpec, build_dataset
from .models import (
    LossPredictor, LossPredictorConfig, TargetConfig, TargetModel, per_sample_loss,
    predict_losses, target_forward,
)
from .ranking import listwise_ranking_loss, pairwise_ranking_loss, spearman
from .strategies import LEARNED, STRATEGY_NAMES, QueryContext, draw_subset, select

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class PoolError(ValueError):
    pass


# Fixed codes keep per-strategy seed streams stable across runs.
_STRATEGY_CODE = {name: i for i, name in enumerate(STRATEGY_NAMES)}


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    strategies: tuple = ("random",)
    model: str = ""
    hidden: tuple = (64, 64)
    channels: tuple = (8, 16)
    initial_size: int = 100
    budget: int = 100
    cycles: int = 10
    subset_size: int = 1000
    batch_size: int = 32
    epochs: int = 60
    target_optimizer: str = "sgd"
    target_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_drop_at: float = 0.8
    lpm_lr: float = 1e-3
    lpm_hidden: int = 128
    margin: float = 1.0
    retrain: str = "fresh"
    seeds: tuple = (0, 1, 2, 3, 4)
    sorter_path: str = ""

    def target_kind(self):
        if self.model:
            return self.model
        return {
            "hard-regression": "mlp-regressor",
            "grid-image": "tiny-cnn-classifier",
        }.get(self.dataset.kind, "mlp-classifier")

    def validate(self, pool_size=None, sorter=None):
        for s in self.strategies:
            if s not in STRATEGY_NAMES:
                raise ConfigError(f"unknown strategy {s!r}; choose from {', '.join(STRATEGY_NAMES)}")
        if self.retrain not in ("fresh", "warm"):
            raise ConfigError("retrain must be 'fresh' or 'warm'")
        if min(self.initial_size, self.budget, self.cycles, self.batch_size, self.epochs) < 1:
            raise ConfigError("sizes, cycles and epochs must be positive")
        pool_size = self.dataset.size if pool_size is None else pool_size
        if self.initial_size + self.budget * self.cycles > pool_size:
            raise ConfigError(
                f"initial {self.initial_size} + {self.cycles} x budget {self.budget} exceeds pool {pool_size}"
            )
        if "pairwise" in self.strategies and self.batch_size % 2:
            raise ConfigError("pairwise strategy needs an even batch size")
        if "listwise" in self.strategies:
            if sorter is None:
                raise ConfigError(
                    "listwise strategy needs a trained sorter: run "
                    f"`l2ral train-sorter --d {self.batch_size} --out sorter.bin` and pass --sorter"
                )
            if sorter.seq_len != self.batch_size:
                raise ConfigError(
                    f"sorter was trained for length {sorter.seq_len} but batch size is {self.batch_size}"
                )


@dataclass
class PoolState:
    """Disjoint labeled / unlabeled index sets over a pool with hidden labels."""

    labeled: np.ndarray
    unlabeled: np.ndarray
    oracle_labels: np.ndarray
    cycle: int = 0

    @classmethod
    def initial(cls, labels, initial_size, seed):
        n = len(labels)
        rng = np.random.default_rng(seed)
        labeled = np.sort(rng.choice(n, size=initial_size, replace=False))
        unlabeled = np.setdiff1d(np.arange(n), labeled)
        return cls(labeled, unlabeled, np.asarray(labels))

    def label(self, indices):
        """Reveal oracle labels for ``indices`` and move them to the labeled set."""
        indices = np.asarray(indices, dtype=np.int64)
        if len(np.unique(indices)) != len(indices):
            raise PoolError("duplicate indices in query")
        if not np.all(np.isin(indices, self.unlabeled)):
            raise PoolError("queried indices must be unlabeled")
        self.labeled = np.sort(np.concatenate([self.labeled, indices]))
        self.unlabeled = np.setdiff1d(self.unlabeled, indices)
        self.cycle += 1
        return self.oracle_labels[indices]

    def check(self):
        n = len(self.oracle_labels)
        union = np.union1d(self.labeled, self.unlabeled)
        return len(np.intersect1d(self.labeled, self.unlabeled)) == 0 and np.array_equal(union, np.arange(n))


@dataclass
class CycleRecord:
    cycle: int
    labeled: int
    metric: str
    value: float
    spearman: float = None
    degenerate: bool = False
    wall_time: float = 0.0


@dataclass
class RunResult:
    strategy: str
    seed: int
    records: list
    error: str = None


@dataclass
class TrainedModels:
    target: TargetModel
    lpm: LossPredictor = None


def _seed(*parts):
    return np.random.SeedSequence([int(p) for p in parts])


def make_target(config, dataset, seed):
    kind = config.target_kind()
    tcfg = TargetConfig(
        kind=kind,
        input_dim=dataset.input_dim,
        hidden=tuple(config.hidden),
        n_classes=max(dataset.n_classes, 2),
        grid=dataset.x_train.shape[-1],
        channels=tuple(config.channels),
    )
    return TargetModel(tcfg, seed=seed)


def _target_optimizer(config, model):
    if config.target_optimizer == "adam":
        state = ad.adam_state(lr=config.target_lr, weight_decay=config.weight_decay)
    else:
        state = ad.sgd_state(lr=config.target_lr, momentum=config.momentum, weight_decay=config.weight_decay)
    return ad.Optimizer(model.parameters(), state)


def train_cycle(
    pool, dataset, config, strategy, seed, cycle, sorter=None, attach_lpm=True,
    models=None, epoch_callback=None,
):
    """Train the target on the labeled set and, for learned strategies, the loss predictor.

    The loss predictor only ever sees copies of the target's features and
    per-sample losses, so its updates cannot reach the target parameters.
    Partial final batches train the target but are skipped by the predictor.
    """
    if len(pool.labeled) == 0:
        raise PoolError("labeled set is empty")
    code = _STRATEGY_CODE[strategy]
    warm = config.retrain == "warm" and models is not None
    if warm:
        target = models.target
    else:
        target = make_target(config, dataset, _seed(seed, 3, cycle, code))
    lpm = None
    if strategy in LEARNED and attach_lpm:
        if warm and models.lpm is not None:
            lpm = models.lpm
        else:
            lpm = LossPredictor(
                LossPredictorConfig(feature_dim=target.feature_dim, hidden=config.lpm_hidden),
                seed=_seed(seed, 4, cycle, code),
            )
        if strategy == "listwise" and sorter is None:
            raise ConfigError("listwise strategy needs a trained sorter")
    opt = _target_optimizer(config, target)
    lpm_opt = ad.Optimizer(lpm.parameters(), ad.adam_state(lr=config.lpm_lr)) if lpm else None
    rng = np.random.default_rng(_seed(seed, 5, cycle, code))
    x_all, y_all = dataset.x_train, pool.oracle_labels
    d = config.batch_size
    drop_epoch = int(round(config.lr_drop_at * config.epochs))
    for epoch in range(config.epochs):
        if epoch == drop_epoch and epoch > 0:
            opt.set_lr(config.target_lr * 0.1)
        order = rng.permutation(pool.labeled)
        for start in range(0, len(order), d):
            idx = order[start:start + d]
            opt.zero_grad()
            with Tape() as tape:
                out, features = target(Tensor(x_all[idx]))
                losses = per_sample_loss(out, y_all[idx], target.task)
                loss = ad.mean(losses)
            tape.backward(loss)
            opt.step()
            if lpm is not None and len(idx) == d:
                feats = features.data.copy()
                true_losses = losses.data.copy()
                lpm_opt.zero_grad()
                with Tape() as lpm_tape:
                    predicted = lpm(Tensor(feats))
                    if strategy == "listwise":
                        rank_loss = listwise_ranking_loss(true_losses, predicted, sorter)
                    else:
                        rank_loss = pairwise_ranking_loss(true_losses, predicted, config.margin)
                if rank_loss.requires_grad:
                    lpm_tape.backward(rank_loss)
                    lpm_opt.step()
        if epoch_callback is not None:
            epoch_callback(epoch, target, lpm)
    return TrainedModels(target, lpm)


def evaluate(models, x_test, y_test):
    """Test accuracy or MAE, plus rho between predicted and true test losses."""
    target = models.target
    batch = target_forward(target, x_test, labels=y_test)
    if target.task == "classification":
        metric, value = "accuracy", float(np.mean(batch.predictions.argmax(axis=1) == y_test))
    else:
        metric, value = "mae", float(np.mean(np.abs(batch.predictions - y_test)))
    rho, degenerate = None, False
    if models.lpm is not None:
        predicted = predict_losses(models.lpm, batch.features)
        rho, degenerate = rank_agreement(batch.losses, predicted)
    return metric, value, rho, degenerate


def rank_agreement(true_losses, predicted):
    """Rho over the whole list; a constant list reports 0 with a degeneracy flag."""
    if np.ptp(true_losses) == 0 or np.ptp(predicted) == 0:
        return 0.0, True
    return float(spearman(true_losses, predicted)), False


def build_context(pool, dataset, models, strategy, candidates, budget):
    target = models.target
    batch = target_forward(target, dataset.x_train[candidates], indices=candidates)
    ctx = QueryContext(
        candidates=candidates,
        budget=budget,
        features=batch.features,
        probabilities=batch.probabilities,
        predictions=batch.predictions,
    )
    if models.lpm is not None:
        ctx.predicted_losses = predict_losses(models.lpm, batch.features)
    if strategy == "coreset":
        ctx.labeled_features = target_forward(target, dataset.x_train[pool.labeled]).features
    return ctx


def run_cycle(pool, dataset, config, models, strategy, seed, cycle):
    """Draw a candidate subset, score it, and label the chosen indices."""
    if len(pool.unlabeled) < config.budget:
        raise PoolError(
            f"budget {config.budget} exceeds the {len(pool.unlabeled)} remaining unlabeled samples"
        )
    candidates = draw_subset(pool.unlabeled, config.subset_size, _seed(seed, 1, cycle))
    ctx = build_context(pool, dataset, models, strategy, candidates, config.budget)
    selection = select(strategy, ctx, seed=_seed(seed, 2, cycle))
    pool.label(selection.indices)
    return selection, pool


def run_single(config, dataset, strategy, seed, sorter=None):
    """All cycles of one (strategy, seed) pair; returns a RunResult."""
    pool = PoolState.initial(dataset.y_train, config.initial_size, _seed(seed, 0))
    records = []
    models = None
    try:
        for cycle in range(config.cycles):
            start = time.perf_counter()
            models = train_cycle(pool, dataset, config, strategy, seed, cycle, sorter=sorter, models=models)
            metric, value, rho, degenerate = evaluate(models, dataset.x_test, dataset.y_test)
            records.append(CycleRecord(
                cycle, len(pool.labeled), metric, value, rho, degenerate, time.perf_counter() - start,
            ))
            log.info("%s seed=%s cycle=%d labeled=%d %s=%.4f rho=%s",
                     strategy, seed, cycle, len(pool.labeled), metric, value, rho)
            if cycle + 1 < config.cycles:
                run_cycle(pool, dataset, config, models, strategy, seed, cycle)
    except Exception as exc:  # noqa: BLE001 - partial results are kept per seed
        log.error("%s seed=%s aborted: %s", strategy, seed, exc)
        return RunResult(strategy, seed, records, error=f"{type(exc).__name__}: {exc}")
    return RunResult(strategy, seed, records)


def run_experiment(config, seeds=None, sorter=None, dataset=None):
    """Every configured strategy on every seed.

    Seeds drive the initial labeled set and the per-cycle subsets, which are
    therefore shared by all strategies within one seed.
    """
    seeds = tuple(config.seeds if seeds is None else seeds)
    dataset = build_dataset(config.dataset) if dataset is None else dataset
    config.validate(pool_size=len(dataset.y_train), sorter=sorter)
    results = []
    for strategy in config.strategies:
        for seed in seeds:
            results.append(run_single(config, dataset, strategy, seed, sorter=sorter))
    return results


def with_overrides(config, **changes):
    return replace(config, **changes)

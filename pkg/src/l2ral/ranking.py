"""Exact ranks, Spearman's rho, listwise and pairwise ranking losses, sorter training."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .models import Sorter, SorterConfig

log = logging.getLogger(__name__)

MIXTURE = (("uniform", 0.5), ("gaussian", 0.3), ("steps", 0.2))


class RankingError(ValueError):
    pass


class SorterDivergence(FloatingPointError):
    pass


def integer_ranks(values):
    """0-based ascending ranks along the last axis, ties broken by position."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, axis=-1, kind="stable")
    ranks = np.empty(values.shape, dtype=np.int64)
    np.put_along_axis(ranks, order, np.arange(values.shape[-1]) + np.zeros_like(order), axis=-1)
    return ranks


def true_ranks(values):
    """Normalized ascending ranks ``rank / (d - 1)`` in [0, 1]."""
    values = np.asarray(values, dtype=np.float64)
    d = values.shape[-1] if values.ndim else 0
    if d < 2:
        raise RankingError(f"ranking needs at least 2 values, got {d}")
    return integer_ranks(values) / (d - 1)


@dataclass(frozen=True)
class RankVector:
    ranks: np.ndarray
    exact: bool = True


@dataclass
class LossList:
    ground_truth: np.ndarray
    predicted: np.ndarray

    def __post_init__(self):
        self.ground_truth = np.asarray(self.ground_truth, dtype=np.float64)
        self.predicted = np.asarray(self.predicted, dtype=np.float64)
        if self.ground_truth.shape != self.predicted.shape:
            raise RankingError("ground-truth and predicted lists differ in length")
        if not (np.all(np.isfinite(self.ground_truth)) and np.all(np.isfinite(self.predicted))):
            raise RankingError("loss lists must be finite")
        if np.any(self.ground_truth < 0):
            raise RankingError("ground-truth losses must be non-negative")


def spearman(a, b):
    """Spearman's rho from integer ranks: ``1 - 6 * sum(diff**2) / (d (d**2 - 1))``.

    Works on the last axis, so stacked lists give one value per row.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise RankingError(f"length mismatch: {a.shape} vs {b.shape}")
    d = a.shape[-1]
    if d < 2:
        raise RankingError("spearman needs at least 2 values")
    diff = integer_ranks(a) - integer_ranks(b)
    ssd = (diff * diff).sum(axis=-1)
    return 1.0 - 6.0 * ssd / (d * (d * d - 1.0))


def spearman_objective_equivalence_check(losses, tol=1e-12):
    """Rho computed directly agrees with the normalized squared-rank-distance form.

    The second route goes through the [0, 1]-normalized ranks used by the
    ranking loss and rescales their squared distance back to integer units.
    """
    gt, pred = losses.ground_truth, losses.predicted
    d = gt.shape[-1]
    direct = spearman(gt, pred)
    mse = np.mean((true_ranks(gt) - true_ranks(pred)) ** 2)
    via_mse = 1.0 - 6.0 * (mse * d * (d - 1) ** 2) / (d * (d * d - 1.0))
    return bool(abs(direct - via_mse) <= tol)


# -- losses ---------------------------------------------------------------------

def minmax_normalize(x, eps=1e-12):
    """Differentiable per-row min-max scaling of a (d,) or (B, d) tensor to [0, 1]."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim == 1:
        lo = x[int(np.argmin(x.data))]
        hi = x[int(np.argmax(x.data))]
    else:
        rows = np.arange(x.shape[0])
        lo = x[rows, np.argmin(x.data, axis=1)][:, None]
        hi = x[rows, np.argmax(x.data, axis=1)][:, None]
    return (x - lo) / (hi - lo + eps)


def listwise_ranking_loss(ground_truth, predicted, sorter=None):
    """Mean squared distance between exact ranks of ``ground_truth`` and sorter ranks.

    ``predicted`` is a (d,) tensor of predicted losses. With ``sorter=None``
    the exact rank function stands in for the sorter (no gradient flows).
    """
    predicted = predicted if isinstance(predicted, Tensor) else Tensor(predicted)
    gt = np.asarray(ground_truth, dtype=np.float64)
    if gt.shape != predicted.shape:
        raise RankingError(f"length mismatch: {gt.shape} vs {predicted.shape}")
    target = true_ranks(gt)
    if sorter is None:
        approx = Tensor(true_ranks(predicted.data))
    else:
        if predicted.shape[-1] != sorter.seq_len:
            raise RankingError(
                f"batch of {predicted.shape[-1]} losses does not match sorter length {sorter.seq_len}"
            )
        approx = sorter(minmax_normalize(predicted))
    return ad.mean(ad.squared_error(approx, target))


def pairwise_ranking_loss(ground_truth, predicted, margin=1.0):
    """Hinge loss over consecutive pairs (0,1), (2,3), ...

    Per pair: ``max(0, -sign(l_i - l_j) * (p_i - p_j) + margin)``; the mean is
    taken over the d/2 pairs.
    """
    predicted = predicted if isinstance(predicted, Tensor) else Tensor(predicted)
    gt = np.asarray(ground_truth, dtype=np.float64)
    if gt.shape != predicted.shape or gt.ndim != 1:
        raise RankingError(f"length mismatch: {gt.shape} vs {predicted.shape}")
    d = gt.shape[0]
    if d % 2:
        raise RankingError(f"pairwise loss needs an even batch size, got {d}")
    if not margin > 0:
        raise RankingError("margin must be positive")
    sign = np.sign(gt[0::2] - gt[1::2])
    diff = predicted[0::2] - predicted[1::2]
    return ad.mean(ad.relu(margin - sign * diff))


# -- synthetic corpus -----------------------------------------------------------

@dataclass
class SyntheticSequences:
    values: np.ndarray
    true_ranks: np.ndarray
    kinds: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.values)


def _draw(rng, kind, d):
    if kind == "uniform":
        return rng.uniform(0.0, 1.0, d)
    if kind == "gaussian":
        mu, sigma = rng.uniform(0.0, 1.0), rng.uniform(0.05, 0.5)
        return np.clip(rng.normal(mu, sigma, d), mu - 3 * sigma, mu + 3 * sigma)
    levels = rng.uniform(0.0, 1.0, rng.integers(2, 6))
    cuts = np.sort(rng.choice(np.arange(1, d), size=min(len(levels) - 1, d - 1), replace=False))
    seg = np.searchsorted(cuts, np.arange(d), side="right")
    return levels[seg] + rng.normal(0.0, 0.02, d)


def generate_synthetic_sequences(count, d, seed=0):
    """Random sequences from a uniform / clipped-Gaussian / step-plus-noise mixture.

    Each row is min-max normalized to [0, 1]; constant rows are redrawn.
    """
    if d < 2:
        raise RankingError("sequence length must be at least 2")
    rng = np.random.default_rng(seed)
    names = [m[0] for m in MIXTURE]
    probs = [m[1] for m in MIXTURE]
    kinds = rng.choice(len(names), size=count, p=probs)
    values = np.empty((count, d))
    for i, k in enumerate(kinds):
        while True:
            row = _draw(rng, names[k], d)
            span = row.max() - row.min()
            if span > 1e-12:
                break
        values[i] = (row - row.min()) / span
    ranks = true_ranks(values) if count else np.zeros((0, d))
    return SyntheticSequences(values, ranks, kinds)


# -- sorter training ------------------------------------------------------------

@dataclass
class SorterReport:
    sorter: Sorter
    heldout_spearman: float
    epochs_run: int
    history: list = field(default_factory=list)


def sorter_predictions(sorter, values, batch_size=1024):
    values = np.asarray(values, dtype=np.float64)
    out = [sorter(Tensor(values[i:i + batch_size])).data for i in range(0, len(values), batch_size)]
    return np.concatenate(out)


def heldout_spearman(sorter, corpus):
    """Mean rho between the ordering of sorter outputs and the true ordering."""
    preds = sorter_predictions(sorter, corpus.values)
    return float(np.mean(spearman(preds, corpus.values)))


def train_sorter(
    d,
    epochs=400,
    corpus_size=100_000,
    seed=0,
    hidden=128,
    batch_size=256,
    lr=1e-3,
    heldout_size=2000,
    patience=None,
    min_delta=1e-4,
    time_budget=None,
    callback=None,
):
    """Fit a sorter by MSE against exact normalized ranks on a synthetic corpus.

    Training stops after ``epochs`` passes, or earlier when the held-out MSE
    has not improved by ``min_delta`` for ``patience`` epochs, or when
    ``time_budget`` seconds have elapsed. The best held-out-MSE weights are
    returned.
    """
    rng = np.random.default_rng([seed, 1])
    sorter = Sorter(SorterConfig(seq_len=d, hidden=hidden), seed=seed)
    corpus = generate_synthetic_sequences(corpus_size, d, seed=[seed, 2]) if epochs else None
    heldout = generate_synthetic_sequences(heldout_size, d, seed=[seed, 3])
    opt = ad.Optimizer(sorter.parameters(), ad.adam_state(lr=lr))

    def heldout_mse():
        preds = sorter_predictions(sorter, heldout.values)
        return float(np.mean((preds - heldout.true_ranks) ** 2))

    best_mse, best_state, stale = np.inf, sorter.state_dict(), 0
    history = []
    start = time.monotonic()
    epoch = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(corpus_size)
        total = 0.0
        for b, i in enumerate(range(0, corpus_size, batch_size)):
            idx = order[i:i + batch_size]
            opt.zero_grad()
            with Tape() as tape:
                out = sorter(Tensor(corpus.values[idx]))
                loss = ad.mean(ad.squared_error(out, corpus.true_ranks[idx]))
            value = float(loss.data)
            if not np.isfinite(value):
                raise SorterDivergence(
                    f"sorter loss became {value} at epoch {epoch}, batch {b}; "
                    f"last finite epoch mean {history[-1]['train_mse'] if history else 'n/a'}"
                )
            tape.backward(loss)
            opt.step()
            total += value * len(idx)
        mse = heldout_mse()
        record = {"epoch": epoch, "train_mse": total / corpus_size, "heldout_mse": mse}
        history.append(record)
        log.info("sorter d=%d epoch %d train %.5f heldout %.5f", d, epoch, record["train_mse"], mse)
        if callback is not None:
            callback(record)
        if mse < best_mse - min_delta:
            best_mse, best_state, stale = mse, sorter.state_dict(), 0
        else:
            stale += 1
            if mse < best_mse:
                best_mse, best_state = mse, sorter.state_dict()
        if patience is not None and stale >= patience:
            break
        if time_budget is not None and time.monotonic() - start > time_budget:
            break
    if epochs:
        sorter.load_state_dict(best_state)
    rho = heldout_spearman(sorter, heldout)
    return SorterReport(sorter, rho, epoch if epochs else 0, history)

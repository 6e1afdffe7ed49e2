"""Gradient and oracle self-tests behind ``l2ral check``."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import oracles
from .autodiff import Tensor, finite_difference_check
from .models import LossPredictor, LossPredictorConfig, Sorter, SorterConfig, gru_cell_composed
from .ranking import LossList, listwise_ranking_loss, pairwise_ranking_loss, spearman
from .strategies import QueryContext, select_kcenter_greedy

GRAD_TOL = 1e-4


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, x + np.sign(x + 1e-300) * margin, x)


def primitive_cases(rng):
    """(name, scalar function, input arrays) for every differentiable primitive.

    Outputs are contracted with fixed random weights so no gradient entry is
    trivially tiny.
    """
    w4 = rng.normal(size=(3, 4))
    w3 = rng.normal(size=(3,))
    labels = rng.integers(0, 4, size=3)
    target = rng.normal(size=3)
    conv_w = rng.normal(size=(2, 3, 4, 4))

    def dot(out, w):
        return ad.sum_(ad.mul(out, w))

    return [
        ("matmul", lambda a, b: dot(ad.matmul(a, b), w4), [rng.normal(size=(3, 5)), rng.normal(size=(5, 4))]),
        ("add", lambda a, b: dot(ad.add(a, b), w4), [rng.normal(size=(3, 4)), rng.normal(size=(4,))]),
        ("sub", lambda a, b: dot(ad.sub(a, b), w4), [rng.normal(size=(3, 4)), rng.normal(size=(3, 1))]),
        ("mul", lambda a, b: dot(ad.mul(a, b), w4), [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))]),
        ("div", lambda a, b: dot(ad.div(a, b), w4), [rng.normal(size=(3, 4)), rng.uniform(0.5, 2.0, size=(4,))]),
        ("leaky_relu", lambda a: dot(ad.leaky_relu(a, 0.01), w4), [_away_from_zero(rng, (3, 4))]),
        ("sigmoid", lambda a: dot(ad.sigmoid(a), w4), [rng.normal(size=(3, 4))]),
        ("tanh", lambda a: dot(ad.tanh(a), w4), [rng.normal(size=(3, 4))]),
        ("softmax", lambda a: dot(ad.softmax(a, axis=1), w4), [rng.normal(size=(3, 4))]),
        ("log", lambda a: dot(ad.log(a), w4), [rng.uniform(0.5, 3.0, size=(3, 4))]),
        ("mean", lambda a: dot(ad.mean(a, axis=1), w3), [rng.normal(size=(3, 4))]),
        ("sum", lambda a: dot(ad.sum_(a, axis=1), w3), [rng.normal(size=(3, 4))]),
        ("concat", lambda a, b: dot(ad.concat([a, b], axis=1), w4), [rng.normal(size=(3, 1)), rng.normal(size=(3, 3))]),
        ("stack", lambda a, b: dot(ad.stack([a, b], axis=1)[:, :, :2], w4.reshape(3, 2, 2)),
         [rng.normal(size=(3, 3)), rng.normal(size=(3, 3))]),
        ("slice", lambda a: dot(a[:, 1:5], w4), [rng.normal(size=(3, 6))]),
        ("conv2d", lambda x, w, b: ad.sum_(ad.mul(ad.conv2d(x, w, b, stride=2, padding=1), conv_w)),
         [rng.normal(size=(2, 3, 8, 8)), rng.normal(size=(3, 3, 3, 3)), rng.normal(size=(3,))]),
        ("global_avg_pool", lambda x: dot(ad.global_avg_pool(x), w4), [rng.normal(size=(3, 4, 2, 2))]),
        ("squared_error", lambda a: dot(ad.squared_error(a, target), w3), [rng.normal(size=(3,))]),
        ("cross_entropy", lambda a: dot(ad.cross_entropy(a, labels), w3), [rng.normal(size=(3, 4))]),
        ("gru_cell", lambda x, h, wi, bi, wh, bh: dot(ad.gru_cell(x, h, wi, bi, wh, bh), w4),
         [rng.normal(size=(3, 2)), rng.normal(size=(3, 4)) * 0.5, rng.normal(size=(2, 12)) * 0.5,
          rng.normal(size=(12,)) * 0.5, rng.normal(size=(4, 12)) * 0.5, rng.normal(size=(12,)) * 0.5]),
    ]


def gradient_report(points=10, seed=0):
    """Worst finite-difference error per primitive over ``points`` random draws."""
    rng = np.random.default_rng(seed)
    worst = {}
    for _ in range(points):
        for name, fn, arrays in primitive_cases(rng):
            err = finite_difference_check(fn, [Tensor(a, requires_grad=True) for a in arrays])
            worst[name] = max(worst.get(name, 0.0), err)
    return worst


def lpm_head_error(seed=0, spatial=True):
    rng = np.random.default_rng(seed)
    lpm = LossPredictor(LossPredictorConfig(feature_dim=4, hidden=6), seed=seed)
    feats = rng.normal(size=(5, 4, 3, 3)) if spatial else rng.normal(size=(5, 4))
    w = rng.normal(size=5)

    def fn(x, *params):
        return ad.sum_(ad.mul(lpm(x), w))

    return finite_difference_check(fn, [Tensor(feats, requires_grad=True)] + lpm.parameters())


def bidirectional_cell_error(seed=0, hidden=5):
    """One step of each direction of a sorter, fused kernel and composed primitives."""
    rng = np.random.default_rng(seed)
    sorter = Sorter(SorterConfig(seq_len=2, hidden=hidden), seed=seed)
    x = rng.uniform(size=(3, 2))
    w = rng.normal(size=(3, 2 * hidden))
    errors = []
    for cell in (ad.gru_cell, gru_cell_composed):
        def fn(x_, *params):
            states = []
            for tag, t in (("fwd", 0), ("bwd", 1)):
                w_in, b_in, w_h, b_h = sorter.directions[tag]
                h0 = Tensor(np.full((3, hidden), 0.1))
                states.append(cell(x_[:, t:t + 1], h0, w_in, b_in, w_h, b_h))
            return ad.sum_(ad.mul(ad.concat(states, axis=1), w))
        errors.append(finite_difference_check(fn, [Tensor(x, requires_grad=True)] + sorter.parameters()))
    return max(errors)


def listwise_gradient_error(sorter=None, seed=0, d=6):
    """Gradient of the listwise loss w.r.t. predicted losses, sorter frozen."""
    rng = np.random.default_rng(seed)
    if sorter is None:
        sorter = Sorter(SorterConfig(seq_len=d, hidden=8), seed=seed)
        sorter.freeze()
    d = sorter.seq_len
    gt = rng.uniform(size=d)
    pred = rng.uniform(size=d)
    return finite_difference_check(
        lambda p: listwise_ranking_loss(gt, p, sorter), [Tensor(pred, requires_grad=True)]
    )


def spearman_oracle_error(trials=1000, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        d = int(rng.integers(2, 65))
        a, b = rng.normal(size=d), rng.normal(size=d)
        worst = max(worst, abs(spearman(a, b) - oracles.spearman_bruteforce(list(a), list(b))))
    return worst


def pairwise_oracle_error(trials=1000, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        d = 2 * int(rng.integers(1, 33))
        gt = rng.exponential(size=d)
        pred = rng.normal(size=d)
        fast = float(pairwise_ranking_loss(gt, pred).data)
        worst = max(worst, abs(fast - oracles.pairwise_hinge_bruteforce(list(gt), list(pred))))
    return worst


def kcenter_mismatches(trials=200, seed=0):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(trials):
        n = int(rng.integers(1, 9))
        m = int(rng.integers(0, 4))
        dim = int(rng.integers(1, 4))
        budget = int(rng.integers(1, n + 1))
        cands = np.sort(rng.choice(1000, size=n, replace=False))
        feats = rng.normal(size=(n, dim))
        labeled = rng.normal(size=(m, dim))
        ctx = QueryContext(cands, budget, features=feats, labeled_features=labeled)
        got = list(select_kcenter_greedy(ctx).indices)
        ref = oracles.kcenter_greedy_reference([tuple(f) for f in feats], [tuple(f) for f in labeled], budget)
        if got != [cands[i] for i in ref]:
            bad += 1
    return bad


def equivalence_failures(trials=200, seed=0):
    from .ranking import spearman_objective_equivalence_check
    rng = np.random.default_rng(seed)
    return sum(
        not spearman_objective_equivalence_check(LossList(rng.exponential(size=16), rng.normal(size=16)))
        for _ in range(trials)
    )


def run_checks(points=3):
    """Returns a list of (name, passed, detail)."""
    results = []
    for name, err in sorted(gradient_report(points=points).items()):
        results.append((f"grad {name}", bool(err < GRAD_TOL), f"max rel err {err:.2e}"))
    for label, err in (
        ("grad loss-prediction head (spatial)", lpm_head_error(spatial=True)),
        ("grad loss-prediction head (flat)", lpm_head_error(spatial=False)),
        ("grad bidirectional recurrent cell", bidirectional_cell_error()),
        ("grad listwise ranking loss", listwise_gradient_error()),
    ):
        results.append((label, bool(err < GRAD_TOL), f"max rel err {err:.2e}"))
    err = spearman_oracle_error(trials=200)
    results.append(("spearman vs brute force", bool(err <= 1e-12), f"max abs err {err:.1e}"))
    err = pairwise_oracle_error(trials=200)
    results.append(("pairwise hinge vs brute force", bool(err <= 1e-12), f"max abs err {err:.1e}"))
    bad = kcenter_mismatches(trials=100)
    results.append(("k-center greedy vs reference", bad == 0, f"{bad} mismatches"))
    bad = equivalence_failures(trials=100)
    results.append(("rho / rank-MSE identity", bad == 0, f"{bad} failures"))
    return results

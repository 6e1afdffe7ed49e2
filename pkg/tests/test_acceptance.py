"""Headline acceptance checks, one test and one PASS/FAIL line per criterion.

The sorter-training and benchmark checks are slow (tens of minutes in total
on one CPU core); everything else finishes in seconds.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from l2ral import oracles
from l2ral.alsim import PoolState, train_cycle
from l2ral.cli import main
from l2ral.config import apply_settings, default_config, load_config_file
from l2ral.datasets import build_dataset
from l2ral.models import load_sorter
from l2ral.ranking import RankingError, generate_synthetic_sequences, heldout_spearman, pairwise_ranking_loss, spearman
from l2ral.autodiff import Tensor
from l2ral.reporting import read_metrics_csv, summarize
from l2ral.selfcheck import GRAD_TOL, gradient_report, kcenter_mismatches, lpm_head_error, listwise_gradient_error

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def _train(workdir, d, hidden, budget, patience):
    out = workdir / f"sorter_d{d}.bin"
    start = time.monotonic()
    code = main(["train-sorter", "--d", str(d), "--epochs", "400", "--corpus", "100000", "--hidden", str(hidden),
                 "--patience", str(patience), "--time-budget", str(budget), "--out", str(out)])
    assert code == 0
    return out, time.monotonic() - start


@pytest.fixture(scope="module")
def fidelity_sorters(workdir):
    """d=4 and d=64 sorters trained through the CLI, with wall-clock times."""
    d4 = _train(workdir, 4, 128, budget=240, patience=3)
    d64 = _train(workdir, 64, 64, budget=1080, patience=2)
    return {4: d4, 64: d64}


@pytest.fixture(scope="module")
def benchmark_sorter(workdir):
    return _train(workdir, 32, 128, budget=600, patience=2)


def test_spearman_oracle(acceptance):
    rng = np.random.default_rng(2024)
    pairs = []
    for _ in range(1000):
        d = int(rng.integers(2, 65))
        pairs.append((rng.normal(size=d), rng.normal(size=d)))
    refs = [oracles.spearman_bruteforce(list(a), list(b)) for a, b in pairs]
    start = time.perf_counter()
    got = [spearman(a, b) for a, b in pairs]
    exact = all(spearman(np.arange(d), np.arange(d)[::-1]) == -1.0 and spearman(np.arange(d), np.arange(d)) == 1.0
                for d in range(2, 65))
    elapsed = time.perf_counter() - start
    err = max(abs(g - r) for g, r in zip(got, refs))
    ok = err <= 1e-12 and exact and elapsed < 1.0
    assert acceptance("spearman oracle", ok, f"max |err| {err:.1e} over 1000 pairs, reversal/identity exact={exact}, "
                                             f"{elapsed:.2f}s")


def test_gradient_suite(acceptance):
    start = time.perf_counter()
    worst = gradient_report(points=10, seed=0)
    extra = {
        "lpm head (spatial)": lpm_head_error(spatial=True),
        "lpm head (flat)": lpm_head_error(spatial=False),
        "listwise loss wrt predicted losses": listwise_gradient_error(),
    }
    elapsed = time.perf_counter() - start
    everything = {**worst, **extra}
    name, err = max(everything.items(), key=lambda kv: kv[1])
    ok = err < GRAD_TOL and elapsed < 60
    assert acceptance("gradient suite", ok, f"{len(everything)} checks, worst {name} {err:.2e} (< {GRAD_TOL:g}), "
                                            f"{elapsed:.1f}s")


def test_kcenter_oracle(acceptance):
    start = time.perf_counter()
    bad = kcenter_mismatches(trials=200, seed=2024)
    elapsed = time.perf_counter() - start
    assert acceptance("k-center greedy oracle", bad == 0 and elapsed < 10,
                      f"{bad} mismatches in 200 instances, {elapsed:.2f}s")


def test_pairwise_parity(acceptance):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        d = 2 * int(rng.integers(1, 33))
        gt, pred = rng.exponential(size=d), rng.normal(size=d)
        fast = pairwise_ranking_loss(gt, Tensor(pred)).item()
        worst = max(worst, abs(fast - oracles.pairwise_hinge_bruteforce(list(gt), list(pred))))
    rejected = 0
    for d in (1, 3, 5, 33, 63):
        try:
            pairwise_ranking_loss(np.ones(d), Tensor(np.zeros(d)))
        except RankingError:
            rejected += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and rejected == 5 and elapsed < 10
    assert acceptance("pairwise parity", ok, f"max |err| {worst:.1e} over 1000 batches, odd d rejected {rejected}/5, "
                                             f"{elapsed:.2f}s")


def test_sorter_fidelity(fidelity_sorters, acceptance):
    heldout = {}
    for d, (path, _) in fidelity_sorters.items():
        sorter = load_sorter(path).sorter
        heldout[d] = heldout_spearman(sorter, generate_synthetic_sequences(2000, d, seed=777))
    total = sum(t for _, t in fidelity_sorters.values())
    ok = heldout[4] >= 0.95 and heldout[64] >= 0.90 and total <= 1800
    assert acceptance("sorter fidelity", ok, f"held-out rho d=4 {heldout[4]:.4f} (>= 0.95), d=64 {heldout[64]:.4f} "
                                             f"(>= 0.90), {total / 60:.1f} min")


def test_gradient_stop(benchmark_sorter, acceptance):
    sorter = load_sorter(benchmark_sorter[0]).sorter
    config = default_config()
    data = build_dataset(config.dataset)
    start = time.perf_counter()
    identical = True
    for strategy in ("listwise", "pairwise"):
        finals = []
        for attach in (True, False):
            pool = PoolState.initial(data.y_train, 1000, np.random.SeedSequence([0, 0]))
            models = train_cycle(pool, data, config, strategy, 0, 0, sorter=sorter, attach_lpm=attach)
            finals.append(models.target.state_dict())
        identical &= all(finals[0][k].tobytes() == finals[1][k].tobytes() for k in finals[0])
    elapsed = time.perf_counter() - start
    assert acceptance("gradient-stop isolation", identical and elapsed < 300,
                      f"target parameters bit-identical with/without predictor: {identical}, {elapsed:.0f}s")


def test_classification_benchmark(benchmark_sorter, workdir, acceptance):
    path, sorter_time = benchmark_sorter
    out = workdir / "blobs"
    start = time.monotonic()
    code = main(["run", "--config", str(CONFIGS / "blobs.cfg"), "--strategy", "random,listwise",
                 "--sorter", str(path), "--out", str(out)])
    elapsed = time.monotonic() - start + sorter_time
    summary = summarize(read_metrics_csv(out / "metrics.csv"))
    last = max(s.cycle for s in summary)

    def mean(strategy, metric, cycle):
        return next(s.mean for s in summary if (s.strategy, s.metric, s.cycle) == (strategy, metric, cycle))

    acc_l, acc_r = mean("listwise", "accuracy", last), mean("random", "accuracy", last)
    rho0, rho = mean("listwise", "spearman", 0), mean("listwise", "spearman", last)
    ok = code == 0 and acc_l >= acc_r and rho >= 0.4 and rho >= rho0 and elapsed <= 3600
    assert acceptance("classification benchmark", ok,
                      f"final accuracy listwise {acc_l:.4f} vs random {acc_r:.4f}; listwise rho {rho:.3f} "
                      f"(cycle 0: {rho0:.3f}); {elapsed / 60:.1f} min incl. sorter")


def test_regression_benchmark(fidelity_sorters, workdir, acceptance):
    path = fidelity_sorters[4][0]
    out = workdir / "regression"
    start = time.monotonic()
    code = main(["run", "--config", str(CONFIGS / "regression.cfg"), "--sorter", str(path), "--out", str(out)])
    elapsed = time.monotonic() - start
    summary = summarize(read_metrics_csv(out / "metrics.csv"))
    last = max(s.cycle for s in summary)
    mae = {s.strategy: s.mean for s in summary if s.metric == "mae" and s.cycle == last}

    config = apply_settings(default_config(), load_config_file(CONFIGS / "regression.cfg"))
    entropy_cfg = apply_settings(config, {"strategy": "entropy", "seeds": "0", "cycles": "2", "epochs": "1"})
    from l2ral.alsim import run_experiment
    (run,) = run_experiment(entropy_cfg)
    entropy_raises = run.error is not None and "entropy strategy requires class posteriors" in run.error
    ok = code == 0 and mae["listwise"] <= mae["random"] and entropy_raises and elapsed <= 1800
    assert acceptance("regression benchmark", ok,
                      f"final MAE listwise {mae['listwise']:.4f} vs random {mae['random']:.4f}; "
                      f"entropy raises documented error: {entropy_raises}; {elapsed / 60:.1f} min")


def test_reproducible_run(benchmark_sorter, workdir, acceptance):
    args = ["--config", str(CONFIGS / "blobs.cfg"), "--cycles", "3", "--seeds", "0,1", "--sorter",
            str(benchmark_sorter[0])]
    for name in ("first", "second"):
        assert main(["run", *args, "--out", str(workdir / name)]) == 0
    a = (workdir / "first" / "metrics.csv").read_bytes()
    b = (workdir / "second" / "metrics.csv").read_bytes()
    assert acceptance("reproducible run", a == b,
                      f"two full runs (5 strategies, 2 seeds) byte-identical: {a == b}, {len(a)} bytes")

import xml.etree.ElementTree as ET

import pytest

from l2ral.alsim import ConfigError
from l2ral.cli import main
from l2ral.config import apply_settings, default_config, dump_config, load_config_file, parse_config_text
from l2ral.plotting import curve_data
from l2ral.models import Sorter, SorterConfig, save_sorter
from l2ral.reporting import read_metrics_csv

FAST = ["--cycles", "2", "--budget", "10", "--init-size", "20", "--subset-size", "50", "--epochs", "2",
        "--seeds", "0", "--set", "pool_size=200", "--set", "test_size=50"]


def test_parse_config_text():
    values = parse_config_text("# comment\ninit-size = 50  # trailing\n\nstrategy = random,entropy\n")
    assert values == {"init_size": "50", "strategy": "random,entropy"}
    with pytest.raises(ConfigError, match=":2:"):
        parse_config_text("budget = 3\nnonsense\n")


def test_apply_settings_and_dump_roundtrip():
    cfg = apply_settings(default_config(), {"budget": "7", "seeds": "3,4", "dataset": "hard-regression",
                                            "cluster-std": "1.5"})
    assert cfg.budget == 7 and cfg.seeds == (3, 4) and cfg.dataset.kind == "hard-regression"
    assert cfg.dataset.cluster_std == 1.5
    again = apply_settings(default_config(), parse_config_text(dump_config(cfg)))
    assert again == cfg


def test_unknown_and_bad_keys():
    with pytest.raises(ConfigError, match="unknown"):
        apply_settings(default_config(), {"colour": "red"})
    with pytest.raises(ConfigError, match="budget"):
        apply_settings(default_config(), {"budget": "lots"})


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "nope.cfg")


def test_check_exits_zero(capsys):
    assert main(["check", "--points", "1"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 20


def test_unknown_flag_prints_usage(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--out", "x", "--frobnicate"])
    assert exc.value.code != 0
    assert "usage:" in capsys.readouterr().err


def test_listwise_without_sorter_names_train_sorter(tmp_path, capsys):
    assert main(["run", "--strategy", "listwise", "--out", str(tmp_path)] + FAST) != 0
    assert "train-sorter" in capsys.readouterr().err


def test_missing_sorter_file_names_train_sorter(tmp_path, capsys):
    code = main(["run", "--strategy", "listwise", "--sorter", str(tmp_path / "s.bin"), "--out", str(tmp_path)] + FAST)
    assert code != 0 and "train-sorter" in capsys.readouterr().err


def test_run_then_report_one_curve(tmp_path):
    assert main(["run", "--strategy", "random", "--out", str(tmp_path)] + FAST) == 0
    rows = read_metrics_csv(tmp_path / "metrics.csv")
    assert {r.strategy for r in rows} == {"random"} and len(rows) == 2
    assert main(["report", str(tmp_path / "metrics.csv")]) == 0
    assert ET.parse(tmp_path / "curves.svg").getroot().tag.endswith("svg")
    curves = curve_data(rows)["accuracy"]
    assert list(curves) == ["random"] and len(curves["random"][0]) == 2
    assert (tmp_path / "summary.csv").read_text().startswith("strategy,metric,cycle")


def test_run_with_config_file_and_sorter(tmp_path):
    sorter = Sorter(SorterConfig(seq_len=4, hidden=4))
    save_sorter(sorter, tmp_path / "s.bin")
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("strategy = listwise,pairwise\nbatch_size = 4\nsorter = %s\n" % (tmp_path / "s.bin"))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")] + FAST) == 0
    rows = read_metrics_csv(tmp_path / "out" / "metrics.csv")
    assert {r.metric for r in rows} == {"accuracy", "spearman"}


def test_train_sorter_command(tmp_path, capsys):
    out = tmp_path / "s.bin"
    assert main(["train-sorter", "--d", "4", "--epochs", "1", "--corpus", "500", "--hidden", "4", "--out", str(out)]) == 0
    assert out.exists() and "heldout_spearman" in (tmp_path / "s.bin.meta").read_text()


def test_run_is_byte_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--strategy", "random,coreset", "--out", str(tmp_path / name)] + FAST) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()

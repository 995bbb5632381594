import csv
import math

import numpy as np
import pytest

from pulsefront import cli
from pulsefront import experiment as ex
from pulsefront.errors import BlowupError, ConfigError
from pulsefront.reaction import LogisticReaction

BASE = """
period = 1.0
d = {d}
alpha = {alpha}
k_schedule = {ks}
horizon = 12.0
seeds = [{{width = 0.2}}]
d_exis_check = true

[grid]
nodes_per_period = 64
periods = 20

[reactions.species1]
mean = {m1}

[reactions.species2]
mean = {m2}

[prediction]
resolution = 8
"""


def cfg_text(d="[1.0]", alpha="[2.0]", ks="[50, 100]", m1=1.0, m2=1.0):
    return BASE.format(d=d, alpha=alpha, ks=ks, m1=m1, m2=m2)


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_and_hash():
    a = ex.parse_config(cfg_text())
    b = ex.parse_config(cfg_text())
    c = ex.parse_config(cfg_text(alpha="[2.5]"))
    assert a.config_hash == b.config_hash != c.config_hash
    assert a.d == [1.0] and a.k_schedule == [50.0, 100.0]
    assert a.nodes_per_period == 64


def test_overrides():
    cfg = ex.parse_config(cfg_text(), {"nodes_per_period": 128, "horizon": 3.0})
    assert cfg.nodes_per_period == 128 and cfg.horizon == 3.0


@pytest.mark.parametrize("bad", [
    cfg_text(ks="[100, 50]"),
    cfg_text(ks="[0.9, 50]"),
    cfg_text(d="[-1.0]"),
    cfg_text(alpha='"x"'),
    "not toml [",
    "d = 1.0",
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ex.parse_config(bad)


def test_bistability_threshold():
    r1, r2 = LogisticReaction(2.0), LogisticReaction(3.0)
    assert ex.bistability_threshold(r1, r2, 0.5) == pytest.approx(max(2.0, 3.0 / 0.5))


def test_d_exis_and_h_freq():
    r1, r2 = LogisticReaction(1.0), LogisticReaction(2.0)
    assert ex.d_exis(r1, r2, 1.0) == 0.0
    assert ex.d_exis(r1, r2, 4.0) == pytest.approx(2.0 * (4 / math.pi - 1) ** 2)
    assert ex.h_freq(r1, r2, 1.0, 1.0)
    assert not ex.h_freq(r1, r2, 10.0, 1.0)


def test_extrapolation_fit():
    ks = np.array([50.0, 100.0, 200.0, 400.0])
    a, b, res = ex._extrapolate(ks, 0.3 + 2.0 / ks)
    assert a == pytest.approx(0.3) and b == pytest.approx(2.0) and res < 1e-12


def test_run_point_records_errors(monkeypatch):
    cfg = ex.parse_config(cfg_text())

    def explode(*args, **kwargs):
        raise BlowupError("non-finite values in the solution", 1.25)

    monkeypatch.setattr(ex, "run_until_front", explode)
    rec = ex.run_point(cfg, 1.0, 2.0, 50.0)
    assert rec["status"].startswith("BlowupError")
    assert rec["config_hash"] == cfg.config_hash


def test_single_run_report(tmp_path):
    cfg = ex.parse_config(cfg_text(ks="[50]"))
    records, preds = ex.run_sweep(cfg)
    verdicts = ex.sweep_verdicts(cfg, records, preds)
    ex.emit_report(tmp_path, records, preds, verdicts, cfg)
    for name in ("summary.csv", "predictions.csv", "verdicts.csv"):
        assert (tmp_path / name).exists()
    assert len(rows(tmp_path / "summary.csv")) == 1
    assert len(rows(tmp_path / "predictions.csv")) == 1
    for name in ("speed_vs_inverse_k.svg", "phase_diagram.svg", "xi_traces.svg"):
        text = (tmp_path / name).read_text()
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    summary = rows(tmp_path / "summary.csv")[0]
    assert summary["config_hash"] == cfg.config_hash
    assert float(summary["c"]) > 0


def test_phase_grid_cardinality(tmp_path):
    text = cfg_text(d="[0.5, 1.0, 2.0, 3.0, 4.0]", alpha="[0.5, 1.0, 1.5, 2.0, 2.5]", ks="[50]")
    cfg = ex.parse_config(text)
    preds = ex.predictions(cfg)
    ex.emit_report(tmp_path, [], preds, ex.prediction_verdicts(preds), cfg)
    table = rows(tmp_path / "predictions.csv")
    assert len(table) == 25
    assert all(r["predicted"] in ("positive", "negative", "zero-interval", "boundary-ambiguous") for r in table)
    for r in table:
        expected = float(r["alpha"]) ** 2 - float(r["d"])
        if abs(expected) > 1e-2:
            assert int(r["predicted_sign"]) == np.sign(expected)


def test_cli_exit_codes_and_env(tmp_path, monkeypatch):
    cfg = tmp_path / "c.toml"
    cfg.write_text(cfg_text())
    out = tmp_path / "env_out"
    monkeypatch.setenv("PULSEFRONT_OUT", str(out))
    assert cli.main(["check", str(cfg)]) == 0
    assert (out / "verdicts.csv").exists()
    assert cli.main(["predict", str(cfg), "--out", str(tmp_path / "p")]) == 0
    bad = tmp_path / "bad.toml"
    bad.write_text(cfg_text(ks="[1.0]"))
    assert cli.main(["check", str(bad)]) == 2


def test_cli_check_fails_on_existence(tmp_path):
    text = cfg_text().replace("period = 1.0", "period = 5.0").replace("d = [1.0]", "d = [0.1]")
    cfg = tmp_path / "c.toml"
    cfg.write_text(text)
    assert cli.main(["check", str(cfg), "--out", str(tmp_path / "o")]) == 1
    v = {r["criterion"]: r["passed"] for r in rows(tmp_path / "o" / "verdicts.csv")}
    assert v["d_exis"] == "false"


def test_deterministic_rerun(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(cfg_text(alpha="[0.5, 2.0]", ks="[50]"))
    for name in ("a", "b"):
        cli.main(["run", str(cfg), "--out", str(tmp_path / name)])
    for f in ("summary.csv", "predictions.csv", "verdicts.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

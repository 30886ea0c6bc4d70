import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from powtime import config as cfgmod
from powtime.cli import main
from powtime.errors import ValidationError
from powtime.ingest_io import read_arrivals, read_forks, to_intervals
from powtime.netsim import FixedDelay, PairwiseDelay, RandomExponentialDelay, ZeroDelay

MINIMAL = """\
# single miner
miners = solo:1.0
hashrate_trajectory = constant(7158278.826666667)
initial_difficulty = 1
run_length_blocks = 1000
seed = 7
"""

TWO = """\
miners = a:0.5, b:0.5
hashrate_trajectory = constant(7158278.826666667)
delay_model = fixed(10)
policy = blocks_per_epoch:100, target_block_interval:600, clamp_factor:4
initial_difficulty = 1
run_length_blocks = 3000
seed = 3
"""


def read_csv(path):
    with open(path, newline="") as fh:
        r = list(csv.reader(fh))
    return r[0], r[1:]


@pytest.fixture
def conf(tmp_path):
    def write(text, name="sim.conf"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def test_config_parsing_and_canonical_form():
    camp = cfgmod.build_campaign(cfgmod.read_pairs(TWO))
    assert camp.sim.miner_ids == ["a", "b"]
    assert camp.sim.delay_model == FixedDelay(10.0)
    assert camp.sim.policy.blocks_per_epoch == 100
    again = cfgmod.build_campaign(cfgmod.read_pairs(cfgmod.format_config(camp)))
    assert again == camp
    assert cfgmod.config_hash(again) == cfgmod.config_hash(camp)


@pytest.mark.parametrize("text,expected", [
    ("zero", ZeroDelay()),
    ("fixed(2.5)", FixedDelay(2.5)),
    ("random_exponential(3)", RandomExponentialDelay(3.0)),
    ("pairwise_matrix(0,1;1,0)", PairwiseDelay(((0.0, 1.0), (1.0, 0.0)))),
])
def test_delay_parsing(text, expected):
    assert cfgmod.parse_delay(text) == expected


def test_policy_clamp_none():
    assert cfgmod.parse_policy("clamp_factor:none").clamp_factor is None


def test_config_hash_sensitivity():
    base = cfgmod.build_campaign(cfgmod.read_pairs(TWO))
    h0 = cfgmod.config_hash(base)
    for key, value in [("seed", "4"), ("run_length_blocks", "3001"), ("delay_model", "fixed(10.5)"),
                       ("miners", "a:0.6, b:0.4"), ("initial_difficulty", "2"), ("replications", "2"),
                       ("policy", "blocks_per_epoch:100, target_block_interval:600, clamp_factor:none")]:
        pairs = cfgmod.read_pairs(TWO)
        pairs[key] = value
        assert cfgmod.config_hash(cfgmod.build_campaign(pairs)) != h0, key


@pytest.mark.parametrize("text,field", [
    (MINIMAL.replace("seed = 7\n", ""), "seed"),
    (MINIMAL + "colour = blue\n", "colour"),
    (MINIMAL.replace("solo:1.0", "solo:0.9"), "miners"),
    (MINIMAL.replace("constant(", "linear("), "hashrate_trajectory"),
])
def test_config_errors(text, field):
    with pytest.raises(ValidationError) as e:
        cfgmod.build_campaign(cfgmod.read_pairs(text))
    assert e.value.field == field


def test_simulate_minimal(tmp_path, conf):
    out = tmp_path / "o"
    assert main(["simulate", "--config", conf(MINIMAL), "--out", str(out)]) == 0
    header, rows = read_csv(out / "intervals.csv")
    assert header == ["replication", "height", "interval_s"] and len(rows) == 1000
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7 and len(manifest["config_hash"]) == 64
    d = read_arrivals(out / "rep_000" / "arrivals.csv")
    np.testing.assert_allclose(to_intervals(d).values, [float(r[2]) for r in rows], rtol=0, atol=1e-6)


def test_simulate_deterministic(tmp_path, conf):
    c = conf(MINIMAL)
    main(["simulate", "--config", c, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", c, "--out", str(tmp_path / "b")])
    for name in ("intervals.csv", "blocks.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_missing_seed(tmp_path, conf, capsys):
    rc = main(["simulate", "--config", conf(MINIMAL.replace("seed = 7\n", "")), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "seed" in capsys.readouterr().err


def test_seed_flag_overrides_and_supplies(tmp_path, conf):
    c = conf(MINIMAL.replace("seed = 7\n", ""))
    assert main(["simulate", "--config", c, "--out", str(tmp_path / "o"), "--seed", "9"]) == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["seed"] == 9


def test_simulate_missing_config_is_io_error(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 3


def test_replications_and_merge(tmp_path, conf):
    out = tmp_path / "o"
    assert main(["simulate", "--config", conf(TWO), "--out", str(out), "--replications", "2"]) == 0
    _, merged = read_csv(out / "forks.csv")
    _, r0 = read_csv(out / "rep_000" / "forks.csv")
    _, r1 = read_csv(out / "rep_001" / "forks.csv")
    assert merged == r0 + r1
    for row in merged:
        assert 0 <= float(row[2]) <= 10.0
    fd = read_forks(out / "rep_000" / "forks.csv")
    assert len(fd) == len(r0)


def test_analyze_intervals_histogram_normalised(tmp_path, conf):
    out = tmp_path / "o"
    main(["simulate", "--config", conf(MINIMAL.replace("1000", "5000")), "--out", str(out)])
    rc = main(["analyze", str(out / "intervals.csv"), "--out", str(out), "--analyses", "hist,acf,entropy"])
    assert rc == 0
    header, rows = read_csv(out / "histogram.csv")
    assert header == ["bin_left", "bin_right", "count", "density", "fitted_density"]
    area = sum((float(r[1]) - float(r[0])) * float(r[3]) for r in rows)
    assert area == pytest.approx(1.0, abs=1e-6)
    assert float(rows[-1][1]) == 3000.0
    header, rows = read_csv(out / "acf.csv")
    assert header == ["lag", "rho"] and [int(r[0]) for r in rows] == list(range(1, 21))
    header, rows = read_csv(out / "entropy_hist.csv")
    assert len(rows) == 50
    assert sum(int(r[2]) for r in rows) == 5000


def test_analyze_fork_survival_fixture(tmp_path):
    f = tmp_path / "forks.csv"
    f.write_text("height,duration\n10,1\n20,2\n30,2\n40,5\n")
    out = tmp_path / "o"
    assert main(["analyze", str(f), "--out", str(out), "--analyses", "survival,forks"]) == 0
    _, rows = read_csv(out / "survival.csv")
    assert (2.0, 0.75) in [(float(a), float(b)) for a, b in rows]
    _, seg = read_csv(out / "fork_segments.csv")
    assert [int(r[1]) for r in seg] == [2, 1, 1]
    _, srows = read_csv(out / "survival_segments.csv")
    assert {int(r[0]) for r in srows} == {0, 1, 2}


def test_analyze_constant_acf_is_degenerate(tmp_path):
    f = tmp_path / "iv.csv"
    f.write_text("interval_s\n" + "600\n" * 100)
    assert main(["analyze", str(f), "--out", str(tmp_path / "o"), "--analyses", "acf"]) == 4


def test_analyze_exit_codes(tmp_path):
    f = tmp_path / "iv.csv"
    f.write_text("interval_s\n1\n2\n3\n")
    assert main(["analyze", str(f), "--out", str(tmp_path / "o"), "--analyses", "hist,bogus"]) == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("height,arrival_time\n")
    assert main(["analyze", str(empty), "--out", str(tmp_path / "o")]) == 4
    assert main(["analyze", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("height,arrival_time\n1,x\n")
    assert main(["analyze", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["analyze", str(f), "--out", str(tmp_path / "o"), "--analyses", "survival"]) == 4


def test_analyze_strict_flag(tmp_path, capsys):
    f = tmp_path / "arr.csv"
    f.write_text("height,arrival_time\n1,0\n2,600\n4,1800\n5,2400\n")
    assert main(["analyze", str(f), "--out", str(tmp_path / "o"), "--analyses", "hist"]) == 0
    assert "WARN line=4 code=gap detail=gap at height 4" in capsys.readouterr().err
    assert main(["analyze", str(f), "--out", str(tmp_path / "o"), "--analyses", "hist", "--strict"]) == 2


def test_report(tmp_path, conf, capsys):
    out = tmp_path / "o"
    main(["simulate", "--config", conf(TWO), "--out", str(out)])
    main(["analyze", str(out / "rep_000" / "arrivals.csv"), str(out / "forks.csv"), "--out", str(out),
          "--epoch-blocks", "100"])
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    first = capsys.readouterr().out
    assert main(["report", str(out)]) == 0
    assert capsys.readouterr().out == first
    keys = [line.split("=")[0] for line in first.splitlines()]
    assert keys == ["kind", "config_hash", "mean_interval_s", "implied_rate_per_s", "epoch_count",
                    "halfsplit_p_value", "fork_count", "max_fork_duration_s"]
    assert "mean_interval_s=" in first and "halfsplit_p_value=NA" not in first


def test_report_without_manifest(tmp_path):
    assert main(["report", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "powtime", "report", str(tmp_path)], capture_output=True)
    assert r.returncode == 2


def test_emitted_csvs_reingest(tmp_path, conf):
    out = tmp_path / "o"
    main(["simulate", "--config", conf(TWO), "--out", str(out)])
    d = read_arrivals(out / "rep_000" / "arrivals.csv")
    assert d.diagnostics == [] and len(d) == 3001
    main(["analyze", str(out / "rep_000" / "arrivals.csv"), "--out", str(tmp_path / "b"),
          "--epoch-blocks", "100"])
    assert main(["analyze", str(out / "intervals.csv"), "--out", str(tmp_path / "c"), "--analyses", "hist"]) == 0
    for name in ("histogram.csv", "epochs.csv", "halfsplit.csv", "acf.csv", "entropy_hist.csv"):
        header, rows = read_csv(tmp_path / "b" / name)
        assert header and rows

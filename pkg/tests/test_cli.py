import subprocess
import sys

import pytest

from seqbps.bench import estimate_mcmc_time
from seqbps.cli import main
from seqbps.evaluation import read_traces

SMALL = """
[data]
path = "builtin:synthetic"
learn1_end = 65
learn2_end = 68
eval_end = 74

[smc]
particles = 200
chain = 100
ess_threshold = 60
burn_in = 10

[gibbs]
chain = 50
every = 2

[ldf]
grid = [[0.99, 0.95]]
gamma1 = [0.9, 1.0]
two_layer = ["s,a", "a,s"]

[run]
seed = 11
"""


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def _run(config, out, command, *flags):
    return main([command, "--config", str(config), "--out", str(out), *flags])


def test_filter_rerun_is_byte_identical(small_config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(small_config, a, "filter") == 0
    assert _run(small_config, b, "filter") == 0
    for name in ("filter_traces.csv", "filter_interventions.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    recs = read_traces(a / "filter_traces.csv")
    assert [r.t for r in recs] == list(range(66, 75))
    assert all(r.q05 < r.q50 < r.q95 for r in recs)


def test_threshold_one_gives_empty_log(small_config, tmp_path):
    assert _run(small_config, tmp_path, "filter", "--ess-threshold", "1") == 0
    lines = (tmp_path / "filter_interventions.csv").read_text().splitlines()
    assert lines == ["t,date,ess,chain_size"]


def test_singleton_ldf_matches_filter(small_config, tmp_path):
    assert _run(small_config, tmp_path / "f", "filter") == 0
    assert _run(small_config, tmp_path / "l", "ldf") == 0
    f = read_traces(tmp_path / "f" / "filter_traces.csv")
    for w in ("a", "s"):
        g = read_traces(tmp_path / "l" / f"ldf_B_{w}_traces.csv")
        assert [r.logscores[f"ldf_B_{w}"] for r in g] == [r.logscores["dbps"] for r in f]
        assert [r.logscores["dbps_fixed"] for r in g] == [r.logscores["dbps"] for r in f]
    assert (tmp_path / "l" / "ldf_s_a_traces.csv").exists()
    assert (tmp_path / "l" / "ldf_selected.csv").read_text().splitlines()[0] == (
        "t,date,beta_ldf_B_a,delta_ldf_B_a,beta_ldf_B_s,delta_ldf_B_s,gamma1_ldf_s_a,gamma1_ldf_a_s")


def test_gibbs_rerun_identical(small_config, tmp_path):
    assert _run(small_config, tmp_path / "a", "gibbs", "--seed", "4") == 0
    assert _run(small_config, tmp_path / "b", "gibbs", "--seed", "4") == 0
    a = (tmp_path / "a" / "gibbs_traces.csv").read_bytes()
    assert a == (tmp_path / "b" / "gibbs_traces.csv").read_bytes()
    assert [r.t for r in read_traces(tmp_path / "a" / "gibbs_traces.csv")] == [66, 68, 70, 72, 74]


def test_grid_flag(small_config, tmp_path):
    assert _run(small_config, tmp_path, "ldf", "--grid", "0.99:0.95,0.9:0.9") == 0
    sel = (tmp_path / "ldf_selected.csv").read_text().splitlines()
    assert len(sel) == 1 + 9


def test_errors_exit_nonzero(small_config, tmp_path, capsys):
    assert _run(small_config, tmp_path, "filter", "--particles", "1") == 2
    assert "error: M" in capsys.readouterr().err
    assert _run(small_config, tmp_path, "filter", "--data", str(tmp_path / "missing.csv")) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("date,y,u,r\n1961Q1,1,2,3\n1961Q3,1,2,3\n")
    assert _run(small_config, tmp_path, "filter", "--data", str(bad)) == 2
    assert "1961Q2 is missing" in capsys.readouterr().err


def test_short_series_rejected(small_config, tmp_path, capsys):
    short = tmp_path / "short.csv"
    short.write_text("date,y,u,r\n" + "".join(f"{1961 + i // 4}Q{i % 4 + 1},1,2,3\n" for i in range(70)))
    assert _run(small_config, tmp_path, "filter", "--data", str(short)) == 2
    assert "eval_end" in capsys.readouterr().err


def test_estimate_time_examples(capsys):
    assert estimate_mcmc_time(248, 66, 10000, 10000, 0.53) == pytest.approx(3 * 183 * 0.53)
    assert estimate_mcmc_time(248, 66, 0, 10000, 0.53) == 0.0
    assert estimate_mcmc_time(248, 66, 20000, 10000, 0.53) == pytest.approx(2 * 3 * 183 * 0.53)
    assert main(["estimate-time", "--step", "0.53"]) == 0
    assert capsys.readouterr().out.strip() == "290.97"


def test_console_entry_point_runs():
    out = subprocess.run([sys.executable, "-m", "seqbps.cli", "estimate-time", "--step", "1"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "549.00"

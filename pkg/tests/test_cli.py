import json
import subprocess
import sys

import numpy as np
import pytest

from cegmon.cli import main
from cegmon.dirichlet import model_prior
from cegmon.modelio import dump_model, load_model
from conftest import MODELS

AHC = str(MODELS / "chds_ceg_ahc.json")
CEG_BN = str(MODELS / "chds_ceg_bn.json")
BN = str(MODELS / "chds_bn.json")


@pytest.fixture
def workdir(tmp_path):
    st = load_model(AHC)
    rng = np.random.default_rng(61)
    theta = [rng.dirichlet(np.full(len(a), 2.0)) for a in model_prior(st).alpha]
    dump_model(st.with_probabilities(theta), tmp_path / "truth.json")
    assert main(["sample", "--model", str(tmp_path / "truth.json"), "--n", "300", "--seed", "4",
                 "--out", str(tmp_path / "d.csv")]) == 0
    return tmp_path


def test_fit_writes_model_and_history(workdir, capsys):
    out = workdir / "m.json"
    assert main(["fit", "--data", str(workdir / "d.csv"), "--ess", "3", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert load_model(out).tree.cards == (2, 2, 3, 2)
    lines = (workdir / "m.json.history.csv").read_text().splitlines()
    assert len(lines) == 1 + summary["merges"]


def test_fit_column_order(workdir):
    assert main(["fit", "--data", str(workdir / "d.csv"), "--columns", "X_e,X_s,X_l,X_h",
                 "--out", str(workdir / "m2.json")]) == 0
    assert [v.name for v in load_model(workdir / "m2.json").tree.variables] == ["X_e", "X_s", "X_l", "X_h"]


def test_score_two_models(workdir):
    out = workdir / "s"
    assert main(["score", "--model-a", AHC, "--model-b", BN, "--data", str(workdir / "d.csv"),
                 "--out-dir", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    a, b = summary["model_a"], summary["model_b"]
    assert summary["delta_log_ml"] == pytest.approx(a["log_marginal_likelihood"] - b["log_marginal_likelihood"])
    assert a["global_monitor"] == pytest.approx(-a["log_marginal_likelihood"])
    assert summary["bayes_factor_a_vs_b"] == pytest.approx(np.exp(summary["delta_log_ml"]))
    assert (out / "global_a.csv").read_text().startswith("m,target,S,E,V,Z_cum\n")


@pytest.mark.parametrize("args,files", [
    (["node", "--model", BN], ["node.csv"]),
    (["parent-child", "--model", BN, "--node", "X_l", "--config", "X_s=Low,X_e=Low"], ["parent_child.csv"]),
    (["parent-child", "--model", BN, "--node", "X_h"], ["parent_child.csv"]),
    (["staging", "--model", AHC, "--cut", "X_l"], ["staging.csv", "staging_candidates.json"]),
    (["position", "--model", CEG_BN, "--position", "3"], ["position.csv"]),
    (["situation-loo", "--model", AHC, "--stage", "u3", "--level", "High"], ["situation_loo.csv"]),
    (["situation-order", "--model", AHC, "--stage", "u6", "--level", "No",
      "--ordering", "High/High/Average,High/Low/Average,Low/High/Average,Low/High/Low,Low/Low/Low"],
     ["situation_order.csv"]),
])
def test_monitor_commands(workdir, args, files):
    out = workdir / "o"
    assert main(["monitor", *args, "--data", str(workdir / "d.csv"), "--out-dir", str(out)]) == 0
    json.loads((out / "summary.json").read_text())
    for f in files:
        assert (out / f).stat().st_size > 0


def test_traces_byte_identical_across_runs(workdir):
    for run in ("r1", "r2"):
        assert main(["monitor", "node", "--model", BN, "--data", str(workdir / "d.csv"),
                     "--shuffle-seed", "8", "--out-dir", str(workdir / run)]) == 0
    assert (workdir / "r1" / "node.csv").read_bytes() == (workdir / "r2" / "node.csv").read_bytes()
    assert (workdir / "r1" / "summary.json").read_bytes() == (workdir / "r2" / "summary.json").read_bytes()


def test_input_errors_exit_2(workdir, capsys):
    bad = workdir / "bad.csv"
    bad.write_text("X_s,X_e,X_l,X_h\nHigh,High,Med,No\n")
    assert main(["monitor", "node", "--model", BN, "--data", str(bad), "--out-dir", str(workdir)]) == 2
    assert "Med" in capsys.readouterr().err
    assert main(["monitor", "node", "--model", AHC, "--data", str(workdir / "d.csv")]) == 2
    assert main(["monitor", "staging", "--model", AHC, "--cut", "X_q", "--data", str(workdir / "d.csv"),
                 "--out-dir", str(workdir)]) == 2
    assert main(["score", "--model-a", str(workdir / "missing.json"), "--model-b", BN,
                 "--data", str(workdir / "d.csv")]) == 2
    with pytest.raises(SystemExit) as err:
        main(["fit", "--data", "x.csv", "--out", "m.json", "--bogus"])
    assert err.value.code == 2


def test_infinite_surprise_exit_3(tmp_path):
    (tmp_path / "z.json").write_text(json.dumps({
        "variables": [{"name": "A", "levels": ["x", "y"]}], "staging": [[[""]]], "priors": [[[1.0, 0.0]]]}))
    (tmp_path / "z.csv").write_text("A\nx\ny\n")
    code = main(["score", "--model-a", str(tmp_path / "z.json"), "--model-b", str(tmp_path / "z.json"),
                 "--data", str(tmp_path / "z.csv"), "--out-dir", str(tmp_path)])
    assert code == 3
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["model_a"]["global_monitor"] == "inf"


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "cegmon.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("cegmon ")

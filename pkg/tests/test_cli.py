import json
import os
import subprocess
import sys

import pytest

from rhclust.cli import main

PENGUINS = os.path.join(os.path.dirname(__file__), "data", "penguins.csv")
PENGUIN_ARGS = ["--csv", PENGUINS, "--features", "bill_length_mm,flipper_length_mm",
                "--filter", "sex=female", "--filter", "year=2007", "--filter", "year=2008"]
GEN = ["--generate", "two_cluster", "--param", "n=16", "--param", "delta=5"]


def run(capsys, tmp_path, *argv):
    code = main(["--out-dir", str(tmp_path), *argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == 0 else out)


def test_cluster_and_pvalue_from_trace(capsys, tmp_path):
    code, doc = run(capsys, tmp_path, "cluster", *GEN, "--K", "1")
    assert code == 0
    assert doc["n"] == 16 and len(doc["labels"]) == 16
    code, res = run(capsys, tmp_path, "pvalue", *GEN, "--trace", doc["trace"], "--K", "2")
    assert code == 0
    assert 0 <= res["p_value"] <= 1 and res["step"] == 15


def test_pvalue_variants(capsys, tmp_path):
    code, naive = run(capsys, tmp_path, "pvalue", *GEN, "--naive")
    assert code == 0 and naive["naive"]
    code, chi = run(capsys, tmp_path, "pvalue", *GEN, "--variant", "chi", "--sigma", "1.0",
                    "--quad-panels", "32")
    assert code == 0 and chi["variant"] == "chi"
    code, plug = run(capsys, tmp_path, "pvalue", *GEN, "--variant", "chi")
    assert code == 0 and 0 <= plug["p_value"] <= 1


def test_choose_k_penguins(capsys, tmp_path):
    code, doc = run(capsys, tmp_path, "choose-k", *PENGUIN_ARGS)
    assert code == 0
    assert doc["estimate"]["k_hat"] >= 1
    assert doc["trace"]["n"] == 107
    assert os.path.exists(tmp_path / "choose_k_trace.json")


def test_choose_k_runs(capsys, tmp_path):
    gen = ["--generate", "three_cluster", "--param", "n=30", "--param", "delta=14"]
    code, doc = run(capsys, tmp_path, "choose-k", *gen, "--runs", "3", "--n-min", "3",
                    "--n-star", "0.4")
    assert code == 0
    assert doc["runs"] == 3 and doc["mode"] == 3
    assert (tmp_path / "choose_k_counts.csv").read_text().startswith("k,count")


def test_stability_and_gap(capsys, tmp_path):
    gen = ["--generate", "three_cluster", "--param", "n=30", "--param", "delta=10"]
    code, doc = run(capsys, tmp_path, "stability", *gen, "--K", "3", "--runs", "10")
    assert code == 0
    assert doc["runs"] == 10 and len(doc["blocks"]) == 30
    assert doc["within_mean"] > doc["between_mean"]
    code, doc = run(capsys, tmp_path, "gap", *gen, "--k-max", "5", "--b-refs", "5")
    assert code == 0 and len(doc["gap"]) == 5
    assert (tmp_path / "gap.csv").exists()


def test_simulate(capsys, tmp_path):
    code, doc = run(capsys, tmp_path, "--scale", "100", "simulate", "fwer", "--gen", "n=14",
                    "--method", "taus=[0.1,0.5]")
    assert code == 0
    assert doc["replications"] == 20
    assert set(doc["summary"]) == {"randomized_0.1", "randomized_0.5", "naive_0"}
    assert (tmp_path / "fwer_manifest.json").exists()


def test_errors(capsys, tmp_path):
    assert main(["--out-dir", str(tmp_path), "cluster"]) == 2
    assert "give --csv or --generate" in capsys.readouterr().err
    assert main(["--out-dir", str(tmp_path), "cluster", "--csv", PENGUINS,
                 "--features", "bill_length_mm,nope"]) == 2
    assert "nope" in capsys.readouterr().err
    assert main(["--out-dir", str(tmp_path), "cluster", "--csv", "missing.csv",
                 "--features", "a"]) == 2
    with pytest.raises(SystemExit):
        main(["cluster", "--linkage", "ward"])


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "rhclust", "--out-dir", str(tmp_path), "cluster",
                          *GEN, "--K", "2"], capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["K"] == 2

import json
import subprocess
import sys

import pytest

from gvlab.cli import main

SMALL_CHECKS = ["--set", "occupation_paths=3000", "--set", "fk_paths=4000", "--set", "fk_tol=0.5"]


def read(path):
    return path.read_text(encoding="utf-8")


def body(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")]


def test_phi_table_drifted_brownian(tmp_path):
    assert main(["--out-dir", str(tmp_path), "--set", "spec=bmdrift", "--set", "m=1",
                 "--set", "lambdas=0.5,2", "phi-table"]) == 0
    text = read(tmp_path / "phi_table.csv")
    assert text.startswith("# schema: gvlab-output/1\n# command: phi-table\n")
    assert "# config: m=1" in text
    rows = body(text)
    assert rows[0].startswith("lambda,phi_extension")
    for row in rows[1:]:
        lam, ext, alt, closed, *_ = map(float, row.split(","))
        assert ext == pytest.approx(0.25 * (1 - 1 / (lam + 1) ** 0.5), rel=1e-8)
        assert abs(ext - alt) < 1e-6 and abs(ext - closed) < 1e-8


def test_phi_table_bessel_constant(tmp_path):
    assert main(["--out-dir", str(tmp_path), "--set", "spec=bessel", "--set", "s=0.75", "phi-table"]) == 0
    vals = [float(r.split(",")[1]) for r in body(read(tmp_path / "phi_table.csv"))[1:]]
    assert len(vals) == 4 and all(v == pytest.approx(0.2, rel=1e-5) for v in vals)


def test_phi_table_empty_grid(tmp_path):
    assert main(["--out-dir", str(tmp_path), "--set", "lambdas=", "phi-table"]) == 0
    assert len(body(read(tmp_path / "phi_table.csv"))) == 1


def test_gv_verify_zero_function(tmp_path):
    assert main(["--out-dir", str(tmp_path), "--set", "modes=", "--set", "n_paths=500",
                 "--set", "n_bins=8", "--set", "y0=2", "gv-verify"]) == 0
    for k in "WTS":
        for row in body(read(tmp_path / f"gv_{k}.csv"))[1:]:
            cols = row.split(",")
            assert float(cols[1]) == 0.0 and float(cols[2]) == 0.0
    doc = json.loads(read(tmp_path / "gv_summary.json"))
    assert doc["schema"] == "gvlab-output/1" and doc["result"]["passed"]


def test_gv_verify_is_thread_independent(tmp_path):
    args = ["--set", "spec=bessel", "--set", "s=0.75", "--set", "n_paths=4000", "--set", "n_bins=8",
            "--set", "y0=2", "--seed", "3", "gv-verify"]
    main(["--out-dir", str(tmp_path / "a"), "--threads", "1"] + args)
    main(["--out-dir", str(tmp_path / "b"), "--threads", "4"] + args)
    for name in ("gv_W.csv", "gv_T.csv", "gv_S.csv", "gv_summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_norm_probe_single_op_and_dedup(tmp_path):
    assert main(["--out-dir", str(tmp_path), "--set", "ops=beurling_ahlfors", "--set", "p_list=4,4,2",
                 "--set", "trials=4", "norm-probe"]) == 0
    doc = json.loads(read(tmp_path / "norm_probe.json"))
    rows = doc["result"]
    assert [r["p"] for r in rows] == [2.0, 4.0]
    assert all(r["operator"] == "beurling_ahlfors" and r["passed"] for r in rows)


def test_checks_pass_and_echo_seed(tmp_path):
    assert main(["--out-dir", str(tmp_path), "--seed", "5"] + SMALL_CHECKS + ["checks"]) == 0
    doc = json.loads(read(tmp_path / "checks.json"))
    assert doc["result"]["seed"] == 5 and doc["config"]["seed"] == "5"
    assert doc["result"]["all_passed"]
    assert {c["name"] for c in doc["result"]["checks"]} == {"mcd2", "stinga", "occupation", "fk"}


def test_checks_forced_failure(tmp_path):
    assert main(["--out-dir", str(tmp_path), "--set", "mcd2_tol=-1"] + SMALL_CHECKS + ["checks"]) == 1
    assert not json.loads(read(tmp_path / "checks.json"))["result"]["all_passed"]


def test_config_file_and_overrides(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# comment\nspec = bmdrift\nm = 2\nlambdas = 1\n")
    assert main(["--config", str(conf), "--set", "m=1", "--out-dir", str(tmp_path), "phi-table"]) == 0
    text = read(tmp_path / "phi_table.csv")
    assert "# config: m=1" in text and "# config: lambdas=1" in text


@pytest.mark.parametrize("argv", [["--set", "bogus=1", "phi-table"], ["--set", "spec=nope", "phi-table"],
                                  ["--set", "n_bins=12", "gv-verify"], ["frobnicate"],
                                  ["--set", "sigma=x", "phi-table"], ["--set", "dim=3", "gv-verify"]])
def test_usage_errors(tmp_path, argv):
    assert main(["--out-dir", str(tmp_path)] + argv) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gvlab", "--out-dir", str(tmp_path), "--set", "lambdas=1",
                           "phi-table"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "phi_table.csv").exists()

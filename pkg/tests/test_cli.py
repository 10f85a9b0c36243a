import csv

import numpy as np
import pytest

from snrlab.cli import main


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def run(args):
    return main([str(a) for a in args])


def test_generate_report(tmp_path):
    out = tmp_path / "gen"
    code = run(["generate", "--seed", 1, "--out", out, "--n-chains", 400,
                "--n-steps", 200, "--no-figures"])
    assert code == 0
    summary = read_csv(out / "summary.csv")[0]
    assert float(summary["tv_to_exact"]) <= 0.1
    assert float(summary["valid_fraction"]) >= 0.99
    rows = read_csv(out / "samples.csv")
    assert sum(int(r["count"]) for r in rows) == 400
    assert (out / "config.txt").read_text().startswith("version ")


def test_generate_rejects_zero_chains(tmp_path, capsys):
    code = run(["generate", "--seed", 1, "--out", tmp_path / "x", "--n-chains", 0])
    assert code == 1
    assert "usage error" in capsys.readouterr().err


def test_nll_report_both_contours(tmp_path):
    out = tmp_path / "nll"
    code = run(["nll", "--seed", 1, "--out", out, "--n-grid", 40, "--n-mc", 1500,
                "--no-figures"])
    assert code == 0
    rows = {r["contour"]: r for r in read_csv(out / "summary.csv")}
    assert abs(float(rows["diagonal"]["estimate"]) - np.log(5)) <= 0.05
    per_token = read_csv(out / "per_token.csv")
    assert len(per_token) == 5
    agree = read_csv(out / "agreement.csv")[0]
    assert agree["within_2_sigma"] == "True"


def test_nll_unknown_contour(tmp_path):
    code = run(["nll", "--seed", 1, "--out", tmp_path / "x", "--contour", "spiral"])
    assert code == 1


def test_refine_fig5_preset(tmp_path):
    out = tmp_path / "ref"
    code = run(["refine", "--preset", "fig5", "--seed", 0, "--out", out, "--no-figures"])
    assert code == 0
    summary = {r["key"]: r["value"] for r in read_csv(out / "summary.csv")}
    assert summary["final_draft"] == "0 1 2 3 4 5 6"
    assert summary["success"] == "True"
    assert len((out / "trace.jsonl").read_text().splitlines()) == 10


def test_refine_bad_preset(tmp_path):
    code = run(["refine", "--preset", "nope", "--seed", 0, "--out", tmp_path / "x"])
    assert code == 1


def test_refine_T128_last_t(tmp_path):
    out = tmp_path / "t128"
    code = run(["refine", "--seed", 3, "--T", 128, "--out", out, "--no-figures"])
    assert code == 0
    diags = read_csv(out / "diagnostics.csv")
    assert len(diags) == 128
    assert float(diags[-1]["t"]) == pytest.approx(1 / 128)


def test_corrupt_stats_roar_fraction(tmp_path):
    out = tmp_path / "cor"
    code = run(["corrupt-stats", "--seed", 2, "--out", out, "--n", 100000, "--no-figures"])
    assert code == 0
    summary = read_csv(out / "summary.csv")[0]
    assert float(summary["roar_target"]) == pytest.approx(0.1)
    hist = read_csv(out / "gamma_hist.csv")
    assert sum(int(r["count"]) for r in hist) == 100000


def test_train_converter_kl_row(tmp_path):
    out = tmp_path / "conv"
    code = run(["train-converter", "--seed", 2, "--out", out, "--n", 8000,
                "--n-iters", 200, "--n-eval", 8000, "--no-figures"])
    assert code == 0
    for row in read_csv(out / "kl.csv"):
        assert float(row["kl_to_bayes"]) <= 0.01
    assert (out / "params.txt").exists()


def test_calibration_reliability_tables(tmp_path):
    out = tmp_path / "cal"
    code = run(["calibration", "--seed", 2, "--out", out, "--n-draws", 3000,
                "--no-figures"])
    assert code == 0
    rows = read_csv(out / "reliability.csv")
    assert {r["posterior"] for r in rows} == {"exact", "mis-tempered"}
    assert sum(1 for r in rows if r["posterior"] == "exact") == 15
    ece = {r["posterior"]: float(r["ece"]) for r in read_csv(out / "ece.csv")}
    assert ece["exact"] <= 0.02


def test_diagnose_outputs(tmp_path):
    out = tmp_path / "diag"
    code = run(["diagnose", "--seed", 2, "--T", 64, "--gamma-vis", 2, "--out", out,
                "--no-figures"])
    assert code == 0
    rewrites = read_csv(out / "rewrites.csv")
    assert len(rewrites) == 7
    summary = {r["key"]: r["value"] for r in read_csv(out / "summary.csv")}
    assert "mean_rewrites" in summary


def test_config_file_overrides(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("n-chains 300\nn-steps 150\n")
    out = tmp_path / "gen"
    code = run(["generate", "--seed", 1, "--out", out, "--config", cfg, "--no-figures"])
    assert code == 0
    rows = read_csv(out / "samples.csv")
    assert sum(int(r["count"]) for r in rows) == 300


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("bogus 1\n")
    code = run(["generate", "--seed", 1, "--out", tmp_path / "x", "--config", cfg])
    assert code == 1


def test_byte_reproducibility(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["refine", "--preset", "fig5", "--seed", 0, "--out", out]) == 0
    for name in ("trace.jsonl", "diagnostics.csv", "summary.csv", "refine.png"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_figures_rendered_by_default(tmp_path):
    out = tmp_path / "fig"
    code = run(["corrupt-stats", "--seed", 1, "--out", out, "--n", 5000])
    assert code == 0
    png = (out / "gamma_hist.png").read_bytes()
    assert png[:8] == b"\x89PNG\r\n\x1a\n"

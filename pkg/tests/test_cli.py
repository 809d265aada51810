"""Batch CLI: exit codes, file outputs, reproducibility, config precedence."""

import json

import numpy as np
import pytest

from cirbridge import (
    BridgeModel,
    SimConfig,
    ensemble_to_day_files,
    mean_closed,
    simulate_ensemble,
    variance_closed,
)
from cirbridge.cli import main

M2325 = ["--a", "3.673e-2", "--r", "0.71", "--mu", "1.634",
         "--omega", "-143.9", "--alpha", "0.5482"]


def _read_csv(path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


def test_check_well_posed_model_exits_zero(tmp_path, capsys):
    code = main(["check", *M2325, "--out-dir", str(tmp_path)])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["assumption"]["overall"] is True
    assert doc["feller"]["violated_everywhere"] is True
    assert doc["feller"]["satisfied_intervals"] == []
    assert (tmp_path / "check_manifest.json").exists()


def test_check_violated_model_exits_two(tmp_path, capsys):
    args = ["check", "--a", "3.673e-2", "--r", "0.71", "--mu", "1.634",
            "--omega", "-143.9", "--alpha", "2.0", "--out-dir", str(tmp_path)]
    code = main(args)
    assert code == 2
    doc = json.loads(capsys.readouterr().out)
    assert doc["assumption"]["alpha_ok"] is False


def test_missing_flag_is_usage_error(tmp_path, capsys):
    code = main(["check", "--r", "0.71", "--mu", "1.6", "--omega", "0",
                 "--alpha", "0.5", "--out-dir", str(tmp_path)])
    assert code == 1
    assert "--a" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 1


def test_moments_csv_matches_closed_forms(tmp_path):
    code = main(["moments", *M2325, "--grid-points", "1001",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    header, rows = _read_csv(tmp_path / "moments.csv")
    assert header == ["s", "mean", "std", "variance"]
    assert len(rows) == 1001
    model = BridgeModel(a=3.673e-2, r=0.71, mu=1.634, omega=-143.9, alpha=0.5482)
    row = rows[500]
    assert float(row[0]) == 0.5
    assert float(row[1]) == pytest.approx(mean_closed(0.5, model), rel=1e-15)
    assert float(row[3]) == pytest.approx(variance_closed(0.5, model), rel=1e-15)


def test_simulate_outputs_and_bit_reproducibility(tmp_path):
    base = ["simulate", *M2325, "--steps", "400", "--paths", "200",
            "--stride", "20", "--seed", "99", "--save-paths", "bin"]
    out1, out2 = tmp_path / "one", tmp_path / "two"
    assert main([*base, "--out-dir", str(out1)]) == 0
    assert main([*base, "--out-dir", str(out2), "--threads", "3"]) == 0
    for name in ("simulate_moments.csv", "simulate_paths.bin"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    manifest = json.loads((out1 / "simulate_manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["master_seed"] == 99
    assert set(manifest["outputs"]) == {"simulate_moments.csv", "simulate_paths.bin"}


def test_superpose_runs(tmp_path):
    code = main(["superpose", *M2325, "--steps", "400", "--paths", "200",
                 "--stride", "20", "--seed", "7", "--n-sources", "2",
                 "--weights", "0.3,0.7", "--out-dir", str(tmp_path)])
    assert code == 0
    header, rows = _read_csv(tmp_path / "superpose_moments.csv")
    assert header == ["s", "mean", "std"]
    assert len(rows) == 21


def test_pdf_concentration_at_origin_vs_interior_mode(tmp_path):
    common = ["--steps", "1000", "--paths", "3000", "--stride", "20",
              "--seed", "5", "--times", "0.1,0.3,0.5,0.7,0.9", "--pdf-bins", "40"]
    out_v = tmp_path / "violated"
    assert main(["pdf", *M2325, *common, "--out-dir", str(out_v)]) == 0
    header, rows = _read_csv(out_v / "logpdf.csv")
    assert header == ["time", "bin_left", "bin_right", "log_density"]

    def modal_bin_left(rows, t):
        best, arg = -np.inf, None
        for row in rows:
            if float(row[0]) == t and float(row[3]) > best:
                best, arg = float(row[3]), float(row[1])
        return arg

    for t in (0.1, 0.3, 0.5, 0.7, 0.9):
        assert modal_bin_left(rows, t) == 0.0  # mass concentrated at the origin

    scaled = ["--a", "3.673e-2", "--r", "0.71", "--mu", str(1.634 * 0.2),
              "--omega", str(-143.9 * 0.04), "--alpha", "0.5482"]
    out_s = tmp_path / "scaled"
    assert main(["pdf", *scaled, *common, "--out-dir", str(out_s)]) == 0
    _, rows_s = _read_csv(out_s / "logpdf.csv")
    interior_modes = [t for t in (0.3, 0.5, 0.7) if modal_bin_left(rows_s, t) > 0.0]
    assert interior_modes  # low-volatility regime: unimodal away from zero


def _two_day_files(tmp_path):
    counts = tmp_path / "counts.csv"
    table = tmp_path / "days.csv"
    counts.write_text(
        "day_id,t_seconds,count\n"
        "d1,0,0\nd1,600,10\nd1,1200,30\nd1,1800,60\nd1,2400,0\n"
        "d2,0,0\nd2,600,0\nd2,1200,0\nd2,1800,0\nd2,2400,0\n"
    )
    table.write_text("day_id,day_length_seconds\nd1,3000\nd2,3000\n")
    return counts, table


def test_normalize_two_day_fixture(tmp_path, capsys):
    counts, table = _two_day_files(tmp_path)
    code = main(["normalize", "--counts", str(counts), "--day-table", str(table),
                 "--out-dir", str(tmp_path)])
    assert code == 0
    summary = json.loads((tmp_path / "normalize_summary.json").read_text())
    assert summary["retained_days"] == ["d1"]
    assert summary["excluded_days"] == ["d2"]
    _, rows = _read_csv(tmp_path / "normalized.csv")
    z = [float(r[2]) for r in rows if r[0] == "d1"]
    assert abs(sum(z) - 1.0) <= 1e-9
    manifest = json.loads((tmp_path / "normalize_manifest.json").read_text())
    assert str(counts) in manifest["inputs"]


def test_normalize_missing_file_exits_three(tmp_path):
    code = main(["normalize", "--counts", str(tmp_path / "nope.csv"),
                 "--day-table", str(tmp_path / "alsono.csv"),
                 "--out-dir", str(tmp_path)])
    assert code == 3


def test_normalize_bad_data_exits_three(tmp_path):
    counts = tmp_path / "counts.csv"
    table = tmp_path / "days.csv"
    counts.write_text("day_id,t_seconds,count\nd1,0,-5\n")
    table.write_text("day_id,day_length_seconds\nd1,3000\n")
    code = main(["normalize", "--counts", str(counts), "--day-table", str(table),
                 "--out-dir", str(tmp_path)])
    assert code == 3


def test_fit_round_trip_through_files(tmp_path, capsys):
    # fast-reverting, weakly intermittent generator: dividing each day by its
    # total then barely perturbs the shape, so the fit can see the truth
    truth = BridgeModel(a=0.8, r=3.0, mu=1.0, omega=-3.0, alpha=0.5)
    cfg = SimConfig(n_steps=4000, n_paths=200, master_seed=0, record_stride=200)
    ens = simulate_ensemble(truth, cfg)
    counts = tmp_path / "counts.csv"
    table = tmp_path / "days.csv"
    ensemble_to_day_files(ens.grid, ens.paths, counts, table, bins_per_day=10,
                          count_scale=1e7)
    code = main(["fit", "--counts", str(counts), "--day-table", str(table),
                 "--grid-bins", "10", "--out-dir", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "fit_result.json").read_text())
    assert abs(doc["a"] / truth.a - 1.0) <= 0.10
    assert abs(doc["r"] / truth.r - 1.0) <= 0.10
    assert abs(doc["mu"] / truth.mu - 1.0) <= 0.25
    assert abs(doc["omega"] / truth.omega - 1.0) <= 0.40
    assert abs(doc["alpha"] - truth.alpha) <= 0.2
    assert doc["assumption_ok"] is True
    header, rows = _read_csv(tmp_path / "fit_curves.csv")
    assert header == ["s", "mean_empirical", "std_empirical", "mean_fitted", "std_fitted"]
    assert len(rows) == 10
    stdout_doc = json.loads(capsys.readouterr().out)
    assert stdout_doc == doc


def test_blowup_tail_table(tmp_path):
    code = main(["blowup", *M2325[:-2], "--alpha", "0.5482",
                 "--alphas", "0.5482,2.0", "--steps", "1000", "--paths", "2000",
                 "--stride", "20", "--seed", "3", "--tail-lo", "0.9",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    header, rows = _read_csv(tmp_path / "blowup.csv")
    assert header == ["alpha", "t", "std_theory", "std_mc"]
    by_alpha = {}
    for row in rows:
        by_alpha.setdefault(float(row[0]), []).append(
            (float(row[1]), float(row[2]), float(row[3]))
        )
    assert set(by_alpha) == {0.5482, 2.0}
    tail_ok = by_alpha[0.5482]
    tail_bad = by_alpha[2.0]
    # well-posed theory decays toward the pinned end; alpha=2 theory grows
    theory_ok = [row[1] for row in tail_ok]
    theory_bad = [row[1] for row in tail_bad]
    assert all(b < a for a, b in zip(theory_ok, theory_ok[1:]))
    assert all(b > a for a, b in zip(theory_bad, theory_bad[1:]))
    for t, _, std_mc in tail_bad:
        assert np.isfinite(std_mc) and std_mc >= 0.0


def test_config_file_precedence(tmp_path, capsys):
    config = tmp_path / "run.cfg"
    config.write_text(
        "# model\n"
        "a=0.9\nr=0.71\nmu=1.634\nomega=-143.9\nalpha=0.5482\n"
        f"out-dir={tmp_path}\n"
    )
    code = main(["check", "--config", str(config), "--a", "3.673e-2"])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["model"]["a"] == pytest.approx(3.673e-2)  # flag beats file
    assert doc["model"]["r"] == pytest.approx(0.71)      # file beats default

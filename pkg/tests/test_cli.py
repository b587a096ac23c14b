import json

import numpy as np
import pytest

from netpanel.cli import main
from netpanel.dataio import read_json


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


DGP = {
    "N": 25,
    "T": 6,
    "theta0": [0.4, 0.15, 0.1, 1.0, 1.0, 1.0],
    "target_up": 0.3,
    "burn_in": 20,
}


def test_simulate_is_deterministic(tmp_path):
    cfg = write_config(tmp_path, {"dgp": DGP})
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--seed", "5", "--out", str(out1)]) == 0
    assert main(["simulate", "--config", cfg, "--seed", "5", "--out", str(out2)]) == 0
    assert (out1 / "panel.csv").read_bytes() == (out2 / "panel.csv").read_bytes()
    manifest = read_json(out1 / "manifest.json")
    assert manifest["seed"] == 5
    assert "config_sha256" in manifest


def test_simulate_then_estimate_recovers_truth(tmp_path):
    sim_cfg = write_config(
        tmp_path,
        {"dgp": {**DGP, "N": 64, "T": 10, "rook_dims": [8, 8]}},
    )
    sim_out = tmp_path / "sim"
    assert main(["simulate", "--config", sim_cfg, "--seed", "9", "--out", str(sim_out)]) == 0
    truth = read_json(sim_out / "truth.json")

    est_out = tmp_path / "est"
    rc = main(
        [
            "estimate",
            "--data", str(sim_out / "panel.csv"),
            "--covariates", "x1",
            "--rook", "8x8",
            "--out", str(est_out),
        ]
    )
    assert rc == 0
    result = read_json(est_out / "result.json")
    est = np.array(result["theta_bc"])
    se = np.array(result["se_raw"])
    theta0 = np.array(truth["theta0"])
    assert np.all(np.abs(est - theta0) <= 4.0 * se)
    report = (est_out / "report.txt").read_text()
    assert "significance" in report and "rho" in report


def test_estimate_report_has_stars_for_strong_effects(tmp_path):
    sim_cfg = write_config(tmp_path, {"dgp": {**DGP, "N": 64, "T": 10, "rook_dims": [8, 8]}})
    sim_out = tmp_path / "sim2"
    main(["simulate", "--config", sim_cfg, "--seed", "10", "--out", str(sim_out)])
    est_out = tmp_path / "est2"
    main(
        [
            "estimate",
            "--data", str(sim_out / "panel.csv"),
            "--covariates", "x1",
            "--rook", "8x8",
            "--out", str(est_out),
        ]
    )
    report = (est_out / "report.txt").read_text()
    beta_line = next(line for line in report.splitlines() if line.startswith("beta"))
    assert "***" in beta_line  # beta0 = 1 with a tiny SE


def test_montecarlo_mode_emits_table(tmp_path):
    cfg = write_config(tmp_path, {"dgp": DGP, "reps": 3})
    out = tmp_path / "mc"
    assert main(["montecarlo", "--config", cfg, "--seed", "3", "--out", str(out)]) == 0
    table = (out / "report.txt").read_text()
    assert "Before bias correction" in table and "BIAS" in table
    result = read_json(out / "result.json")
    assert result["replications"] == 3
    std = (out / "standardized.csv").read_text().strip().splitlines()
    assert len(std) == 1 + 3


def test_weights_mode_rook(tmp_path):
    out = tmp_path / "w"
    assert main(["weights", "--rook", "3x4", "--out", str(out)]) == 0
    rep = read_json(out / "weights_report.json")
    assert rep["n_nodes"] == 12
    assert rep["n_edges"] == 17  # 3*3 horizontal + 2*4 vertical
    edges = (out / "edge_list.txt").read_text().splitlines()
    assert edges[0].startswith("# nodes 12")


def test_weights_mode_distance(tmp_path):
    coords = tmp_path / "coords.csv"
    coords.write_text("lat,lon\n0.0,0.0\n0.0,0.005\n0.2,0.2\n")
    out = tmp_path / "wd"
    assert main(["weights", "--coords", str(coords), "--distance-km", "1.0", "--out", str(out)]) == 0
    rep = read_json(out / "weights_report.json")
    assert rep["n_nodes"] == 3 and rep["n_edges"] == 1 and rep["isolated"] == 1


def test_invalid_config_fails_cleanly(tmp_path):
    out = tmp_path / "x"
    rc = main(["estimate", "--out", str(out)])  # missing data path
    assert rc == 1


def test_rho_bounds_flag(tmp_path):
    sim_cfg = write_config(tmp_path, {"dgp": DGP})
    sim_out = tmp_path / "sim3"
    main(["simulate", "--config", sim_cfg, "--seed", "4", "--out", str(sim_out)])
    est_out = tmp_path / "est3"
    rc = main(
        [
            "estimate",
            "--data", str(sim_out / "panel.csv"),
            "--covariates", "x1",
            "--rook", "5x5",
            "--rho-bounds=-0.1,0.1",
            "--out", str(est_out),
        ]
    )
    assert rc == 0
    result = read_json(est_out / "result.json")
    assert -0.1 <= result["theta_hat"][0] <= 0.1
    assert result["diagnostics"]["boundary"] in (True, False)

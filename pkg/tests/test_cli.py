"""End-to-end CLI: simulate/verify/sweep/inspect with real artifacts."""

import numpy as np
import pytest

from ferrosim.cli import main

CONFIG = """
[physics]
nu = 1.5
lambda1 = 1.2
lambda2 = 0.5
lambda = 0.4
tau = 1.0
chi0 = 0.3
sigma = 1.0
mu0 = 1.0
alpha = 0.2

[basis]
k_max = 1

[run]
T = 0.05
dt = 1e-3
seed = 42
ensemble_size = 48
snapshot_stride = 5

[initial]
kind = random
seed = 3
energy_u = 1.0
energy_w = 1.0
energy_m = 1.0
energy_h = 1.0

[noise.velocity]
members =
    (1,0,0) (1,0,0) 0.3 sin

[noise.magnetization]
members =
    (1,0,0) (0,0,1) 0.3

[admissibility]
c0 = 1.0
ell_star = 0.5
mode = remark_relaxed

[sweep]
lambdas = 0.3, 1.7, 2.5
ensemble_size = 8
"""


@pytest.fixture
def config_path(tmp_path):
    p = tmp_path / "exp.ini"
    p.write_text(CONFIG)
    return str(p)


class TestSimulate:
    def test_artifacts_and_determinism(self, config_path, tmp_path):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["simulate", "--config", config_path, "--out", str(out1)]) == 0
        assert main(["simulate", "--config", config_path, "--out", str(out2)]) == 0
        t1 = (out1 / "trajectory_000.bin").read_bytes()
        t2 = (out2 / "trajectory_000.bin").read_bytes()
        assert t1 == t2
        assert (out1 / "ledger.csv").read_bytes() == (out2 / "ledger.csv").read_bytes()
        # figures rendered next to the delimited outputs
        assert (out1 / "energy.png").stat().st_size > 0
        assert (out1 / "ledger_balance.png").stat().st_size > 0

    def test_seed_override_changes_bytes(self, config_path, tmp_path):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        main(["simulate", "--config", config_path, "--out", str(out1)])
        main(["simulate", "--config", config_path, "--out", str(out2), "--seed", "43"])
        assert (out1 / "trajectory_000.bin").read_bytes() != (out2 / "trajectory_000.bin").read_bytes()

    def test_bad_config_exit_code(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text(CONFIG.replace("nu = 1.5", "nu = -2"))
        assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


class TestVerify:
    def test_default_config_passes(self, config_path, tmp_path):
        out = tmp_path / "verify"
        assert main(["verify", "--config", config_path, "--out", str(out)]) == 0
        report = (out / "verify_report.csv").read_text().splitlines()
        assert report[0].startswith("check,")
        assert all(line.rsplit(",", 1)[-1] == "pass" for line in report[1:])
        assert (out / "verify_report.png").stat().st_size > 0

    def test_failing_audit_nonzero_exit(self, config_path, tmp_path):
        # nu below (2 - c1)/2 breaks the first energy bracket
        p = tmp_path / "weak.ini"
        p.write_text(CONFIG.replace("nu = 1.5", "nu = 0.02"))
        out = tmp_path / "verify"
        assert main(["verify", "--config", str(p), "--out", str(out)]) == 1
        assert (out / "failures.csv").exists()


class TestSweep:
    def test_table_brackets_and_window(self, config_path, tmp_path):
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", config_path, "--out", str(out)]) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        header = lines[0].split(",")
        rows = [line.split(",") for line in lines[1:]]
        i_lam = header.index("lambda")
        i_in = header.index("in_window")
        i_br = header.index("br_curl_m")
        i_pos = header.index("all_brackets_positive")
        by_lam = {float(r[i_lam]): r for r in rows}
        assert by_lam[0.3][i_in] == "1"
        assert by_lam[2.5][i_in] == "0"
        # outside the window the magnetization bracket goes nonpositive
        assert float(by_lam[2.5][i_br]) <= 0.0
        assert by_lam[2.5][i_pos] == "0"
        assert (out / "sweep.png").stat().st_size > 0

    def test_threaded_sweep_same_table(self, config_path, tmp_path):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        main(["sweep", "--config", config_path, "--out", str(out1)])
        main(["sweep", "--config", config_path, "--out", str(out2), "--threads", "2"])
        assert (out1 / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()


class TestLedgerOracle:
    def test_decoupled_w_mode_pure_exponential(self, tmp_path):
        # zero noise, constant rotation mode: curl w = 0, so no other field
        # ever moves and the ledger's total energy is exp(-8 alpha t)
        config = """
[physics]
nu = 1.0
lambda1 = 1.0
lambda2 = 0.5
lambda = 0.3
tau = 0.8
chi0 = 0.4
sigma = 1.0
mu0 = 1.0
alpha = 0.25

[basis]
k_max = 1

[run]
T = 0.2
dt = 1e-3
seed = 1
ensemble_size = 1
snapshot_stride = 20

[initial]
kind = modes
w =
    (0,0,0) (0,1,0) 1.0
"""
        p = tmp_path / "mode.ini"
        p.write_text(config)
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(p), "--out", str(out)]) == 0
        from ferrosim.io import read_ledger_csv

        cols = read_ledger_csv(out / "ledger.csv")
        rate = 8.0 * 0.25  # energy decay rate 2 * 4 alpha
        expect = cols["e_tot"][0] * np.exp(-rate * cols["time"])
        rel = np.max(np.abs(cols["e_tot"] - expect) / np.abs(expect))
        assert rel < 3.0 * rate**2 * 0.2 * 1e-3


class TestInspect:
    def test_prints_header_and_checks_digest(self, config_path, tmp_path, capsys):
        out = tmp_path / "o"
        main(["simulate", "--config", config_path, "--out", str(out)])
        assert main(["inspect", str(out / "trajectory_000.bin")]) == 0
        text = capsys.readouterr().out
        assert "config_hash" in text
        assert "snapshots" in text

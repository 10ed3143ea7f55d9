import json
import math

import numpy as np
import pytest

from berrydd import cli


def run_cli(args):
    return cli.main([str(a) for a in args])


def grab_rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    return header, [dict(zip(header, l.split(","))) for l in lines[1:]]


@pytest.fixture()
def tiny_config(tmp_path):
    cfg = {
        "scheme": "cpmg",
        "theta_a": 5 * math.pi / 12,
        "beta": 0.001,
        "eta": 0.4,
        "kappa": 12.0,
        "realizations": 32,
        "master_seed": 99,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestSingle:
    def test_runs_and_writes_outputs(self, tmp_path, tiny_config):
        out = tmp_path / "out"
        assert run_cli(["single", "--config", tiny_config, "--out-dir", out]) == 0
        header, rows = grab_rows(out / "single_result.csv")
        assert len(rows) == 1
        row = rows[0]
        assert row["scheme"] == "cpmg"
        assert int(row["realizations"]) == 32
        assert 0.0 <= float(row["W"]) <= 1.1
        man = json.loads((out / "single_manifest.json").read_text())
        assert man["config"]["master_seed"] == 99

    def test_canonical_columns_present(self, tmp_path, tiny_config):
        out = tmp_path / "out"
        run_cli(["single", "--config", tiny_config, "--out-dir", out])
        header, _ = grab_rows(out / "single_result.csv")
        required = ["scheme", "theta_a", "theta_c", "beta", "eta", "kappa",
                    "realizations", "seed", "gamma_mean", "gamma_theory",
                    "gamma_stderr", "W", "W_theory", "W_stderr", "chi_theory",
                    "lambda_theory"]
        assert header[:16] == required

    def test_header_names_units_and_formulas(self, tmp_path, tiny_config):
        out = tmp_path / "out"
        run_cli(["single", "--config", tiny_config, "--out-dir", out])
        text = (out / "single_result.csv").read_text()
        assert "# units: angles in rad" in text
        assert "exp(-chi_theory)" in text
        assert "eta/(2*beta)" in text  # formula provenance for the theory columns

    def test_missing_field_is_named(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"scheme": "cpmg", "beta": 0.001, "eta": 0.4}))
        code = run_cli(["single", "--config", path, "--out-dir", tmp_path / "o"])
        assert code == 2
        assert "theta_a" in capsys.readouterr().err

    def test_unknown_field_is_named(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "scheme": "cpmg", "theta_a": 1.0, "beta": 0.001, "eta": 0.4,
            "bogus": 3}))
        assert run_cli(["single", "--config", path, "--out-dir", tmp_path / "o"]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_low_kappa_warns(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "scheme": "cpmg", "theta_a": 1.0, "beta": 0.001, "eta": 0.01,
            "kappa": 4.0, "realizations": 8, "dt_divisor": 10}))
        with pytest.warns(UserWarning):
            code = run_cli(["single", "--config", path, "--out-dir", tmp_path / "o"])
        assert code == 0
        assert "adiabatic" in capsys.readouterr().err

    def test_transverse_mirror_warns(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "scheme": "mirror", "theta_a": 1.0, "beta": 0.001, "eta": 0.01,
            "noise_axis": "transverse", "realizations": 8}))
        assert run_cli(["single", "--config", path, "--out-dir", tmp_path / "o"]) == 0
        assert "does not suppress transverse" in capsys.readouterr().err

    def test_requires_config_or_manifest(self, capsys):
        assert run_cli(["single"]) == 2

    def test_zero_noise_phase_equals_reference(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "scheme": "se", "theta_a": 1.0, "beta": 0.001, "eta": 0.0,
            "realizations": 8}))
        out = tmp_path / "o"
        run_cli(["single", "--config", path, "--out-dir", out])
        _, rows = grab_rows(out / "single_result.csv")
        assert float(rows[0]["gamma_mean"]) == pytest.approx(
            float(rows[0]["gamma_ref"]), abs=1e-12)
        assert float(rows[0]["W_stderr"]) < 1e-12


class TestManifestRoundTrip:
    def test_rerun_reproduces_csv_bytes(self, tmp_path, tiny_config):
        out1 = tmp_path / "a"
        run_cli(["single", "--config", tiny_config, "--out-dir", out1])
        out2 = tmp_path / "b"
        code = run_cli(["single", "--manifest", out1 / "single_manifest.json",
                        "--out-dir", out2])
        assert code == 0
        assert (out1 / "single_result.csv").read_bytes() == \
            (out2 / "single_result.csv").read_bytes()


class TestThetaSweep:
    def test_small_sweep(self, tmp_path):
        out = tmp_path / "o"
        code = run_cli([
            "theta-sweep", "--theta-grid", "0.6,1.2", "--realizations", 16,
            "--seed", 5, "--out-dir", out,
        ])
        assert code == 0
        header, rows = grab_rows(out / "theta_sweep_results.csv")
        assert len(rows) == 8  # 2 angles x 4 schemes
        schemes = {r["scheme"] for r in rows}
        assert schemes == {"fid", "cpmg", "cpmg_balanced", "mirror"}
        # view files: one row per angle
        _, phase_rows = grab_rows(out / "theta_sweep_phase.csv")
        _, w_rows = grab_rows(out / "theta_sweep_coherence.csv")
        assert len(phase_rows) == 2 and len(w_rows) == 2
        assert (out / "theta_sweep_manifest.json").exists()

    def test_seeded_rerun_bit_identical(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            run_cli(["theta-sweep", "--theta-grid", "0.9", "--realizations", 16,
                     "--seed", 3, "--out-dir", out])
            outs.append((out / "theta_sweep_results.csv").read_bytes())
        assert outs[0] == outs[1]


class TestBetaSweep:
    def test_endpoints_exact(self, tmp_path):
        out = tmp_path / "o"
        code = run_cli([
            "beta-sweep", "--beta-points", 2, "--realizations", 8,
            "--out-dir", out,
        ])
        assert code == 0
        _, rows = grab_rows(out / "beta_sweep_results.csv")
        betas = sorted({float(r["beta"]) for r in rows})
        assert betas == [0.005, 5.0]
        # eta rule recorded and applied
        for r in rows:
            assert float(r["eta"]) == pytest.approx(400.0 * float(r["beta"]))
        assert "eta = 400.0*beta" in (out / "beta_sweep_results.csv").read_text()


class TestFilters:
    def test_tables(self, tmp_path):
        out = tmp_path / "o"
        assert run_cli(["filters", "--z-points", 200, "--out-dir", out]) == 0
        header, rows = grab_rows(out / "filter_functions.csv")
        assert header == ["z", "fid", "se", "cpmg2"]
        z = np.array([float(r["z"]) for r in rows])
        cols = {s: np.array([float(r[s]) for r in rows]) for s in ("fid", "se", "cpmg2")}
        # peak of F/z^2 moves to higher z with more switching
        peaks = [z[np.argmax(cols[s])] for s in ("fid", "se", "cpmg2")]
        assert peaks[0] < peaks[1] < peaks[2]
        # z -> 0 limits: {1/2, 0, 0}
        assert cols["fid"][0] == pytest.approx(0.5, rel=1e-6)
        assert cols["se"][0] < 1e-8
        assert cols["cpmg2"][0] < 1e-8

    def test_chi_table_lowfreq_factors(self, tmp_path):
        out = tmp_path / "o"
        run_cli(["filters", "--chi-beta-min", 1e-4, "--chi-beta-max", 1.0,
                 "--out-dir", out])
        _, rows = grab_rows(out / "chi_vs_beta.csv")
        first = rows[0]  # beta = 1e-4: normalized chi matches the limits
        assert float(first["fid"]) == pytest.approx(float(first["fid_lowfreq"]), rel=1e-3)
        assert float(first["se"]) == pytest.approx(float(first["se_lowfreq"]), rel=1e-3)
        assert float(first["cpmg2"]) == pytest.approx(
            float(first["cpmg2_lowfreq"]), rel=1e-3)


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0

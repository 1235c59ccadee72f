import csv
import json
import math

import numpy as np
import pytest

from cqedtomo.cli import main
from cqedtomo.config import ExperimentConfig, load_config, parse_number, parse_state, phase_seed, preset


def run(args, capsys=None):
    code = main([str(a) for a in args])
    return code


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=object)


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


# -- configuration --------------------------------------------------------------

def test_number_and_state_parsing():
    assert parse_number("-3*pi/4") == -3 * math.pi / 4
    assert parse_number("17*pi/32") == 17 * math.pi / 32
    with pytest.raises(ValueError):
        parse_number("__import__('os')")
    spec = parse_state("coherent(3, pi/4)")
    assert (spec.kind, spec.beta_abs, spec.Phi) == ("coherent", 3.0, math.pi / 4)
    assert parse_state("fock(1)").needed_dim() == 2
    mixed = parse_state("mixed(0.5: fock(1); 0.5: coherent(1, 0))")
    assert len(mixed.parts) == 2
    mixed.build(16).check()
    for bad in ("fock(1.5)", "coherent(-1)", "squeezed(1)", "mixed()"):
        with pytest.raises(ValueError):
            parse_state(bad)


def test_config_file_and_overrides(tmp_path):
    cfg_file = tmp_path / "run.ini"
    cfg_file.write_text(
        "[state]\nstate = fock(1)  # single photon\n\n"
        "[experiment]\nn = 1000\nphases = 0, pi/2\nmu = 0.36\nmaster_seed = 7\n"
    )
    cfg = load_config(cfg_file)
    assert cfg.state == "fock(1)" and cfg.n == 1000 and cfg.mu == 0.36
    assert cfg.phases == (0.0, math.pi / 2)
    assert cfg.updated(n=300, mu=None).n == 300
    assert cfg.updated(n=300, mu=None).mu == 0.36
    (tmp_path / "bad.ini").write_text("[x]\nbogus = 1\n")
    with pytest.raises(ValueError):
        load_config(tmp_path / "bad.ini")


def test_defaults_are_the_paper_parameter_sets():
    cfg = ExperimentConfig()
    assert (cfg.lambda_tau, cfg.n, cfg.N, cfg.alpha, cfg.beta_max) == (0.04, 300, 1000, 0.95, 3.0)
    assert cfg.resolved_dim() == 40
    fig8 = preset("fig8")
    assert (fig8.state, fig8.n, fig8.mu) == ("fock(1)", 1000, 0.36)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    assert phase_seed(5, 0) == 5 and phase_seed(5, 1) != phase_seed(5, 2)


# -- commands -------------------------------------------------------------------

def test_first_click_columns(tmp_path):
    out = tmp_path / "fc"
    assert run(["first-click", "--out", out]) == 0
    header, rows = read_csv(out / "first_click.csv")
    assert header == ["beta_abs", "Phi_minus_phi", "p1_closed_form", "p1_matrix"]
    data = rows.astype(float)
    quarter = np.isclose(data[:, 1], math.pi / 2)
    assert np.abs(data[quarter, 2:] - 0.5).max() < 1e-10
    in_phase_end = data[(data[:, 1] == 0) & (data[:, 0] == 3.0)][0]
    assert in_phase_end[3] == pytest.approx(0.6188, abs=5e-5)
    assert np.abs(data[:, 2] - data[:, 3]).max() < 2e-4
    m = manifest(out)
    assert m["flags"] == {"closed_form_matches_matrix": True}
    assert m["resolved"]["beta_max_lambda_tau"] == pytest.approx(0.12)


def test_csv_format_is_seventeen_digits(tmp_path):
    out = tmp_path / "fc"
    run(["first-click", "--out", out])
    raw = (out / "first_click.csv").read_bytes().decode("utf-8")
    lines = raw.splitlines()
    value = lines[5].split(",")[2]
    assert float(value) == float(format(float(value), ".17g"))
    assert value == format(float(value), ".17g")
    assert "\r" not in raw and ";" not in raw


def test_trajectories_reference_line(tmp_path):
    out = tmp_path / "tr"
    assert run(["trajectories", "--out", out, "--n", 40, "--mu", 0.76]) == 0
    header, rows = read_csv(out / "trajectories.csv")
    assert header[:3] == ["Phi_minus_phi", "phi", "trajectory_id"]
    data = rows.astype(float)
    in_phase = data[data[:, 0] == 0]
    assert np.all(in_phase[:, 6] == in_phase[0, 6])
    assert in_phase[0, 6] == pytest.approx(0.5 * (1 + 0.04 * 1.76 * 3), rel=1e-12)
    assert len(np.unique(data[:, 2])) == 5


def test_calibrate_writes_result(tmp_path, capsys):
    out = tmp_path / "cal"
    assert run(["calibrate", "--out", out, "--seed", 3]) == 0
    cal = json.loads((out / "calibration.json").read_text())
    assert cal["accepted"] is True
    assert cal["sigma_s"] == pytest.approx(0.845, abs=0.1)
    for key in ("mu", "nu", "sigma", "sigma_s", "ks_statistic", "ks_bound"):
        assert key in cal
    header, _ = read_csv(out / "calibration_cdf.csv")
    assert header[:3] == ["x", "sample_cdf", "theory_cdf"] and "ks_bound" in header


def test_calibrate_reports_failure(tmp_path, capsys):
    out = tmp_path / "cal"
    assert run(["calibrate", "--out", out, "--lambda-tau", 0.3]) == 1
    err = capsys.readouterr().err
    assert "no acceptable mu" in err
    assert "not small" in err
    assert manifest(out)["flags"]["kolmogorov_accepted"] is False


def test_calibrate_requires_coherent_state(tmp_path):
    assert run(["calibrate", "--out", tmp_path, "--state", "fock(1)"]) == 2


def test_tomogram_needs_calibration(tmp_path, capsys):
    assert run(["tomogram", "--out", tmp_path]) == 2
    assert "calibration" in capsys.readouterr().err
    assert run(["tomogram", "--out", tmp_path, "--calibration", tmp_path / "missing.json"]) == 2


def test_tomogram_rejects_nonpositive_instrument(tmp_path):
    assert run(["tomogram", "--out", tmp_path, "--n", 1000, "--mu", 1.0]) == 2


def test_tomogram_from_calibration_manifest(tmp_path):
    cal = tmp_path / "cal"
    run(["calibrate", "--out", cal, "--N", 400])
    out = tmp_path / "tomo"
    code = run(["tomogram", "--out", out, "--N", 400, "--calibration", cal / "manifest.json",
                "--phases", "-3*pi/4, -pi/4"])
    m = manifest(out)
    assert m["calibration"]["mu"] == json.loads((cal / "calibration.json").read_text())["mu"]
    assert set(m["outputs"]) >= {"tomogram.json", "tomogram_0_samples.csv", "tomogram_1_density.csv"}
    assert code == (0 if all(m["flags"].values()) else 1)
    summary = json.loads((out / "tomogram.json").read_text())
    assert summary["phases"][1]["chi_mean"] == pytest.approx(0.0, abs=0.3)
    header, _ = read_csv(out / "tomogram_0_density.csv")
    assert header == ["chi", "theory_density", "theory_convolved", "sample_density", "deconvolved"]


def test_tomogram_calibration_must_match_run(tmp_path):
    cal = tmp_path / "cal"
    run(["calibrate", "--out", cal, "--N", 200])
    assert run(["tomogram", "--out", tmp_path / "t", "--n", 500, "--calibration", cal / "calibration.json"]) == 2


def test_vacuum_tomogram_is_centred(tmp_path):
    out = tmp_path / "vac"
    run(["tomogram", "--out", out, "--state", "vacuum", "--mu", 0.76, "--phases", "0, 1.1"])
    summary = json.loads((out / "tomogram.json").read_text())
    sigma = 1 / (300 * (0.04 * 1.76 / math.sqrt(2)) ** 2)
    for ph in summary["phases"]:
        assert abs(ph["chi_mean"]) < 3 * math.sqrt(sigma / 1000)


def test_sweep_table(tmp_path):
    out = tmp_path / "sw"
    ini = tmp_path / "sweep.ini"
    ini.write_text("[sweep]\nsweep_n = 300, 600\nsweep_seeds = 2\nN = 300\n")
    assert run(["sweep", "--out", out, "--config", ini]) == 0
    header, rows = read_csv(out / "sweep.csv")
    assert header == ["n", "seed", "mu", "sigma_s", "accepted", "flagged"]
    assert len(rows) == 4
    assert set(rows[:, 5]) <= {"true", "false"}


def test_oracle_check(tmp_path):
    out = tmp_path / "or"
    assert run(["oracle-check", "--preset", "oracle", "--out", out, "--N", 20000]) == 0
    rep = json.loads((out / "oracle_check.json").read_text())
    assert abs(sum(rep["enumeration"]) - 1) < 1e-9
    assert "max_binomial_deviation" in rep
    assert run(["oracle-check", "--out", tmp_path / "big", "--n", 20, "--state", "vacuum"]) == 2


# -- reproducibility --------------------------------------------------------------

@pytest.mark.parametrize("command,extra", [
    ("calibrate", ["--N", 300]),
    ("tomogram", ["--N", 300, "--mu", 0.76, "--phases", "-3*pi/4, 0"]),
    ("trajectories", ["--n", 30]),
    ("oracle-check", ["--preset", "oracle", "--N", 5000]),
])
def test_rerun_is_byte_identical_across_thread_counts(tmp_path, capsys, command, extra):
    first = tmp_path / "a"
    run([command, "--out", first, "--workers", 1] + extra)
    assert run(["rerun", first / "manifest.json", "--out", tmp_path / "b", "--workers", 3]) == 0
    old, new = manifest(first), manifest(tmp_path / "b")
    assert old["outputs"] == new["outputs"]
    for name in old["outputs"]:
        assert (first / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "MISMATCH" not in capsys.readouterr().out


def test_rerun_detects_changed_output(tmp_path, capsys):
    first = tmp_path / "a"
    run(["first-click", "--out", first, "--beta-max", 1])
    m = manifest(first)
    m["outputs"]["first_click.csv"] = "0" * 64
    (first / "manifest.json").write_text(json.dumps(m))
    assert run(["rerun", first / "manifest.json", "--out", tmp_path / "b"]) == 1
    assert "MISMATCH" in capsys.readouterr().out


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CQEDTOMO_OUT", str(tmp_path / "env"))
    assert run(["first-click", "--beta-max", 1]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()

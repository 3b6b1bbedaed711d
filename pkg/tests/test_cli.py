"""Command-line interface: inventories, exit codes, and output formats."""

import subprocess
import sys

import numpy as np
import pytest

from derloop.cli import main
from derloop.simloop import load_sim_config, run, with_overrides

from conftest import preset

BUS3 = str(preset("bus3.toml"))


def read_csv_column(path, name):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    idx = header.index(name)
    return np.array([float(row.split(",")[idx]) for row in lines[1:]])


# --------------------------------------------------------------------------
# case tools
# --------------------------------------------------------------------------


def test_case_info_serial(capsys):
    assert main(["case", "info", str(preset("serial.case"))]) == 0
    out = capsys.readouterr().out
    assert "12 buses, 11 branches, 120 DERs" in out
    assert "slack bus: 1" in out


def test_case_info_118_with_sidecar(capsys):
    rc = main(
        [
            "case",
            "info",
            str(preset("case118.m")),
            "--der",
            str(preset("case118_der.toml")),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "118 buses, 186 branches, 12 DERs" in out


def test_case_validate_ok(capsys):
    assert main(["case", "validate", str(preset("bus3.case"))]) == 0
    assert "OK" in capsys.readouterr().out


def test_case_validate_malformed(tmp_path, capsys):
    bad = tmp_path / "broken.m"
    bad.write_text("function mpc = broken\nmpc.bus = [ 1 3 ];\n")
    assert main(["case", "validate", str(bad)]) == 2
    assert "invalid:" in capsys.readouterr().err


def test_case_missing_file_exit_2(capsys):
    assert main(["case", "info", "/nonexistent/case.m"]) == 2
    assert "error:" in capsys.readouterr().err


def test_case_convert_round_trip(tmp_path, capsys):
    native = tmp_path / "c118.case"
    rc = main(
        ["case", "convert", str(preset("case118.m")), "--to", "native", "-o", str(native)]
    )
    assert rc == 0
    from derloop.casefmt import parse_matpower_case, parse_native_case

    original = parse_matpower_case(preset("case118.m").read_text())
    assert parse_native_case(native.read_text()) == original
    capsys.readouterr()


def test_case_convert_to_stdout(capsys):
    assert main(["case", "convert", str(preset("bus3.case")), "--to", "matpower"]) == 0
    out = capsys.readouterr().out
    assert "mpc.baseMVA" in out


# --------------------------------------------------------------------------
# powerflow
# --------------------------------------------------------------------------


def test_powerflow_prints_solution(capsys):
    assert main(["powerflow", str(preset("bus3.case"))]) == 0
    out = capsys.readouterr().out
    assert out.startswith("bus,vm,va_deg,p_inj,q_inj")
    assert "# losses_mw=" in out and "converged=true" in out
    assert "np.float64" not in out  # cells must be plain reprs


def test_powerflow_commit_bits(capsys):
    assert main(["powerflow", str(preset("bus3.case")), "--commit", "1111100000"]) == 0
    out = capsys.readouterr().out
    losses = float(out.split("losses_mw=")[1].split()[0])
    assert losses == pytest.approx(6.648772648935841, abs=1e-9)


def test_powerflow_bad_commit_string(capsys):
    assert main(["powerflow", str(preset("bus3.case")), "--commit", "10x"]) == 2
    assert "error:" in capsys.readouterr().err


def test_powerflow_nonconverged_exit_1(tmp_path, capsys):
    case = tmp_path / "hopeless.case"
    case.write_text(
        "[system]\nbase_mva = 100.0\n"
        '\n[[bus]]\nid = 1\nkind = "SLACK"\n'
        '\n[[bus]]\nid = 2\nkind = "PQ"\np_load = 5000.0\n'
        "\n[[branch]]\nfrom = 1\nto = 2\nr = 0.0\nx = 0.1\n"
        "\n[[gen]]\nbus = 1\np_out = 0.0\nq_min = -9999.0\nq_max = 9999.0\n"
    )
    assert main(["powerflow", str(case)]) == 1
    assert "converged=false" in capsys.readouterr().out


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim") / "arm"
    rc = main([
        "simulate", BUS3, "--runs", "2", "--horizon", "30", "--out", str(out)
    ])
    assert rc == 0
    return out


def test_simulate_inventory(sim_dir):
    names = {p.name for p in sim_dir.iterdir()}
    expected = {
        "manifest.toml",
        "trace_run0.csv",
        "trace_run1.csv",
        "ensemble_mean.csv",
        "ensemble_mean.dat",
        "ensemble_std.csv",
        "ensemble_std.dat",
        "agents_mean.csv",
        "agents_mean.dat",
        "agents_runs.csv",
        "figure_map.txt",
    }
    assert expected <= names


def test_simulate_manifest_snapshot(sim_dir):
    import tomli

    man = tomli.loads((sim_dir / "manifest.toml").read_text())
    assert man["run"]["command"] == "simulate"
    assert man["config"]["horizon"] == 30
    assert man["config"]["runs"] == 2
    assert man["config"]["controller_kind"] == "LAG"
    assert man["config"]["config_file"].endswith("bus3.toml")
    assert man["run"]["duration_s"] > 0


def test_simulate_trace_matches_library(sim_dir):
    cfg = with_overrides(load_sim_config(BUS3), runs=2, horizon=30)
    t = run(cfg, 0)
    pi = read_csv_column(sim_dir / "trace_run0.csv", "pi")
    assert np.array_equal(pi, t.pi)  # repr round-trip is exact
    p = read_csv_column(sim_dir / "trace_run0.csv", "p")
    assert np.array_equal(p, t.p)


def test_simulate_trace_length(sim_dir):
    k = read_csv_column(sim_dir / "trace_run0.csv", "k")
    assert np.array_equal(k, np.arange(1, 31))


def test_simulate_agents_runs_table(sim_dir):
    text = (sim_dir / "agents_runs.csv").read_text().splitlines()
    assert text[0] == "run_id,agent_id,group,r_bar"
    assert len(text) == 1 + 2 * 10  # two runs, ten agents


def test_simulate_overrides_in_manifest(tmp_path, capsys):
    import tomli

    out = tmp_path / "ov"
    rc = main([
        "simulate", BUS3, "--runs", "1", "--horizon", "10",
        "--controller", "PI", "--xc0", "5.0", "--seed", "9", "--out", str(out),
    ])
    assert rc == 0
    man = tomli.loads((out / "manifest.toml").read_text())
    assert man["config"]["controller_kind"] == "PI"
    assert man["config"]["x_c0"] == 5.0
    assert man["config"]["seed"] == 9
    capsys.readouterr()


def test_simulate_missing_config_exit_2(capsys):
    assert main(["simulate", "/nonexistent.toml"]) == 2
    assert "error:" in capsys.readouterr().err


# --------------------------------------------------------------------------
# ergodicity
# --------------------------------------------------------------------------


def test_ergodicity_compares_arms(tmp_path, capsys):
    arm_a = tmp_path / "a"
    arm_b = tmp_path / "b"
    for arm, xc0 in ((arm_a, "0.0"), (arm_b, "200.0")):
        assert main([
            "simulate", BUS3, "--runs", "3", "--horizon", "60",
            "--xc0", xc0, "--out", str(arm),
        ]) == 0
    report = tmp_path / "report.csv"
    rc = main([
        "ergodicity", "--arm-a", str(arm_a), "--arm-b", str(arm_b),
        "--out", str(report),
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "uniquely_ergodic:" in out
    lines = report.read_text().splitlines()
    assert lines[0] == "metric,value,threshold,verdict"
    names = [row.split(",")[0] for row in lines[1:]]
    assert "pi_tail_avg_gap" in names and "ks_pi" in names


def test_ergodicity_rejects_mismatched_arms(tmp_path, capsys):
    arm_a = tmp_path / "a"
    arm_b = tmp_path / "b"
    assert main([
        "simulate", BUS3, "--runs", "2", "--horizon", "40", "--out", str(arm_a)
    ]) == 0
    assert main([
        "simulate", BUS3, "--runs", "2", "--horizon", "40", "--seed", "5",
        "--out", str(arm_b),
    ]) == 0
    rc = main(["ergodicity", "--arm-a", str(arm_a), "--arm-b", str(arm_b)])
    assert rc == 2
    assert "differ in seed" in capsys.readouterr().err


# --------------------------------------------------------------------------
# reproduce
# --------------------------------------------------------------------------


def test_reproduce_structure(tmp_path, capsys):
    out = tmp_path / "fig"
    rc = main([
        "reproduce", "bus3-all", "--runs", "2", "--horizon", "40", "--out", str(out)
    ])
    assert rc == 0
    for arm in ("lag_xc0", "lag_xc200", "pi_xc0", "pi_xc200"):
        assert (out / arm / "ensemble_mean.csv").exists()
        assert (out / arm / "manifest.toml").exists()
    assert (out / "ergodicity_lag.csv").exists()
    assert (out / "ergodicity_pi.csv").exists()
    assert (out / "manifest.toml").exists()
    fig_map = (out / "figure_map.txt").read_text()
    assert "figure id: bus3-all" in fig_map
    capsys.readouterr()


def test_reproduce_rejects_unknown_figure():
    with pytest.raises(SystemExit) as exc:
        main(["reproduce", "figure-9"])
    assert exc.value.code == 2


# --------------------------------------------------------------------------
# check-contraction
# --------------------------------------------------------------------------


def test_check_contraction_output(tmp_path, capsys):
    spec = tmp_path / "maps.toml"
    spec.write_text(
        "samples = 50\n"
        "[[map]]\nslope = 0.5\nprob = 0.5\n"
        "[[map]]\nslope = 0.5\nintercept = 1.0\nprob = 0.5\n"
    )
    assert main(["check-contraction", str(spec)]) == 0
    out = capsys.readouterr().out
    assert "max_ratio = 0.5" in out
    assert "certified = true" in out


def test_check_contraction_requires_maps(tmp_path, capsys):
    spec = tmp_path / "empty.toml"
    spec.write_text("samples = 10\n")
    assert main(["check-contraction", str(spec)]) == 2
    capsys.readouterr()


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def test_console_script_installed():
    proc = subprocess.run(
        ["derloop", "--version"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert proc.stdout.strip()


def test_version_flag_in_process():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0

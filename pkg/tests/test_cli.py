from pathlib import Path

import numpy as np
import pytest

from bvflow.cli import main
from bvflow.records import read_samples_csv
from oracles import exact_1d_cost

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL_SWEEP = """[system]
name = double_well_1d
load = 0, 1
u0 = -1
[dissipation]
family = linear
L = 1
[grid]
T = 2
steps = 1024
[family]
law = p_to_one
count = 6
"""


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _kv(text):
    out = {}
    for line in text.splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k.strip()] = v.strip()
    return out


def test_flow_quadratic(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["flow", "--config", str(CONFIGS / "quadratic_flow.ini"), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert printed.startswith("# effective configuration\n[system]")
    raw = (out / "trajectory.csv").read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "t,u_0,speed,slope,chosen_F,energy,power,ed_residual"
    assert lines[2].split(",")[1] == format(1 / 1.0025, ".15g")
    audit = _kv((out / "audit.txt").read_text())
    assert audit["ed_within_tol"] == "true" and audit["vs_violations"] == "0"
    assert (out / "effective_config.ini").read_text().startswith("[system]")


def test_flow_env_output_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("BVFLOW_OUT", str(tmp_path / "env"))
    assert main(["flow"]) == 0
    assert (tmp_path / "env" / "trajectory.csv").exists()


def test_unknown_key_exit_3(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.ini", "[system]\nnmae = quadratic\n")
    assert main(["flow", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert "nmae" in capsys.readouterr().err


def test_solver_failure_exit_2(tmp_path, capsys):
    assert main(["flow", "--config", str(CONFIGS / "stress_large_step.ini"), "--out", str(tmp_path)]) == 2
    assert "step 0" in capsys.readouterr().err


def test_bad_flags_exit_3(capsys):
    assert main(["flow", "--bogus"]) == 3
    assert main(["jumpcost", "--t", "0", "--u0", "0"]) == 3
    assert main(["jumpcost", "--t", "0", "--u0", "a", "--u1", "1", "--L", "1"]) == 3
    assert main([]) == 3


def test_audit_sampled_curve(tmp_path, capsys):
    out = tmp_path / "o"
    main(["flow", "--config", str(CONFIGS / "quadratic_flow.ini"), "--out", str(out)])
    capsys.readouterr()
    assert main(["audit", "--config", str(CONFIGS / "quadratic_flow.ini"), "--out", str(out),
                 "--trajectory", str(out / "trajectory.csv")]) == 0
    kv = _kv(capsys.readouterr().out)
    assert float(kv["chain_rule_margin"]) >= -1e-6 and kv["vs_violations"] == "0"


def test_jumpcost(capsys):
    cfg = str(CONFIGS / "quadratic_flow.ini")
    assert main(["jumpcost", "--config", cfg, "--t", "0", "--u0", "0", "--u1", "0.5", "--L", "2"]) == 0
    kv = _kv(capsys.readouterr().out)
    assert float(kv["value"]) == pytest.approx(1.0, abs=1e-12) and kv["certified"] == "true"
    assert main(["jumpcost", "--config", cfg, "--t", "0", "--u0", "0.3", "--u1", "0.3", "--L", "2"]) == 0
    assert float(_kv(capsys.readouterr().out)["value"]) == 0.0
    dw = str(CONFIGS / "double_well_sweep.ini")
    assert main(["jumpcost", "--config", dw, "--t", "0.3", "--u0", "-1.2", "--u1", "1.1", "--L", "0.5"]) == 0
    kv = _kv(capsys.readouterr().out)
    assert float(kv["value"]) == pytest.approx(exact_1d_cost(0.3, -1.2, 1.1, 0.5), abs=1e-8)
    assert main(["jumpcost", "--config", dw, "--t", "0.3", "--u0", "-1", "--u1", "1", "--via", "0",
                 "--L", "1"]) == 0
    assert kv["method"] == "segment_quadrature"
    assert main(["jumpcost", "--config", cfg, "--t", "0", "--u0", "0", "--u1", "1", "--L", "-1"]) == 3


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    root = tmp_path_factory.mktemp("sweep")
    cfg = root / "sweep.ini"
    cfg.write_text(SMALL_SWEEP)
    code = main(["sweep", "--config", str(cfg), "--out", str(root / "out")])
    return code, cfg, root / "out"


def test_sweep_outputs(small_sweep):
    code, cfg, out = small_sweep
    assert code == 0
    for name in ("member_h1.csv", "member_h6.csv", "limit_bv.csv", "jumps.csv",
                 "convergence_report.txt", "convergence_report.kv"):
        assert (out / name).exists()
    kv = _kv((out / "convergence_report.kv").read_text())
    assert kv["bv_verdict"] == "PASS" and kv["jump_count"] == "1"
    jumps = (out / "jumps.csv").read_text().splitlines()
    assert jumps[0] == "t,u_minus_0,u_at_0,u_plus_0,tricost,energy_drop" and len(jumps) == 2


def test_validate_bv_pass_and_inflated_fail(small_sweep, tmp_path, capsys):
    code, cfg, out = small_sweep
    capsys.readouterr()
    assert main(["validate-bv", "--config", str(cfg), str(out / "limit_bv.csv")]) == 0
    text = capsys.readouterr().out
    assert "verdict = PASS" in text
    times, states = read_samples_csv(out / "limit_bv.csv", 1)
    k = int(np.argmax(np.abs(np.diff(states[:, 0]))))
    states[k + 1:] += 0.5
    bad = tmp_path / "bad.csv"
    bad.write_text("t,u_0\n" + "".join(f"{t:.17g},{u:.17g}\n" for t, u in zip(times, states[:, 0])))
    assert main(["validate-bv", "--config", str(cfg), str(bad)]) == 0
    text = capsys.readouterr().out
    assert "verdict = FAIL" in text and " FAIL" in text.split("verdict")[0]
    assert main(["validate-bv", "--strict", "--config", str(cfg), str(bad)]) == 1


def test_validate_bv_constant_curve(tmp_path, capsys):
    cfg = _write(tmp_path, "c.ini", "[system]\nname = double_well_1d\n[dissipation]\nfamily = linear\nL = 1\n")
    csv = _write(tmp_path, "c.csv", "t,u_0\n0,1\n0.5,1\n1,1\n")
    assert main(["validate-bv", "--config", cfg, csv]) == 0
    text = capsys.readouterr().out
    assert "verdict = PASS" in text
    for line in text.splitlines():
        if line.startswith("eb ["):
            assert "residual = 0 ok" in line


@pytest.mark.parametrize("body,line", [("t,u_0\n0,1\n0.5,x\n", "line 3"),
                                       ("t,u_0\n0,1\n0.5\n", "line 3"),
                                       ("time,u_0\n0,1\n", "line 1"),
                                       ("t,u_0\n0.5,1\n0.2,1\n", "line 3")])
def test_validate_bv_malformed_csv(tmp_path, capsys, body, line):
    cfg = _write(tmp_path, "c.ini", "[system]\nname = double_well_1d\n[dissipation]\nfamily = linear\nL = 1\n")
    csv = _write(tmp_path, "bad.csv", body)
    assert main(["validate-bv", "--config", cfg, csv]) == 3
    assert line in capsys.readouterr().err


def test_validate_bv_needs_linear_growth(tmp_path, capsys):
    csv = _write(tmp_path, "c.csv", "t,u_0\n0,1\n1,1\n")
    assert main(["validate-bv", csv]) == 3


def test_single_member_sweep(tmp_path, capsys):
    cfg = _write(tmp_path, "one.ini", "[system]\nname = quadratic\n[grid]\nsteps = 20\n"
                 "[family]\nlaw = p_to_limit\ncount = 1\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "member_h1.csv").exists()
    assert "limit is absolutely continuous; jump set empty" in capsys.readouterr().out


def test_superlinear_sweep_message(tmp_path, capsys):
    cfg = _write(tmp_path, "s.ini", "[system]\nname = double_well_1d\nload = 0, 0.5\nu0 = -1\n"
                 "[grid]\nsteps = 128\n[family]\nlaw = p_to_limit\ncount = 3\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert "limit is absolutely continuous; jump set empty" in \
        (tmp_path / "o" / "convergence_report.txt").read_text()


def test_sweep_strict_member_failure(tmp_path, capsys):
    cfg = _write(tmp_path, "f.ini", "[system]\nname = double_well_1d\nw_coeffs = 0, 0, -1\nu0 = 0.5\n"
                 "[grid]\nsteps = 1\n[family]\nlaw = p_to_one\ncount = 2\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert main(["sweep", "--strict", "--config", cfg, "--out", str(tmp_path / "o")]) == 2

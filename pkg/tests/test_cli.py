import csv
import json

import numpy as np
import pytest

from mixedgreen import cli
from mixedgreen.reporting import dumps, fmt


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = cli.main([*argv, "--out", str(out)])
    return code, out


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def test_shipped_domains_listed():
    names = cli.shipped_domains()
    for n in ("square_top_n", "lshape", "counterexample_no_d", "counterexample_no_n", "counterexample_point_d"):
        assert n in names


def test_solve_zero_load_gives_zero_field(tmp_path, capsys):
    code, out = run(tmp_path, "solve", "--domain", "square_top_n", "--mesh-h", "0.25")
    assert code == 0
    head, data = read_csv(out / "field.csv")
    assert head == ["x", "y", "u1", "u2", "p"]
    assert np.all(data[:, 2:] == 0.0)
    rep = json.loads((out / "report.json").read_text())
    assert rep["residuals"]["velocity"] <= 1e-10
    assert json.loads(capsys.readouterr().out)["pass"] is True


def test_solve_expression_loads(tmp_path):
    loads = write(tmp_path, "loads.json", {"f": ["sin(pi*x)", 1.0], "f_N": ["nx", "0"]})
    code, out = run(tmp_path, "solve", "--domain", "square_top_n", "--mesh-h", "0.25", "--loads", loads)
    assert code == 0
    _, data = read_csv(out / "field.csv")
    assert np.abs(data[:, 2:4]).max() > 0


def test_solve_manufactured_writes_convergence(tmp_path):
    loads = write(tmp_path, "loads.json", {"manufactured": "trig"})
    code, out = run(tmp_path, "solve", "--domain", "square_mixed", "--mesh-h", "0.25", "--refine", "2", "--loads", loads)
    assert code == 0
    head, data = read_csv(out / "convergence.csv")
    assert head[:2] == ["h", "n_triangles"] and len(data) == 3
    assert np.isnan(data[0, head.index("rate_velocity")])
    assert np.all(np.diff(data[:, head.index("velocity_H1_error")]) < 0)
    assert data[-1, head.index("rate_velocity")] > 1.5


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--domain", "square_top_n", "--bogus"],
        ["solve"],
        ["solve", "--domain", "does_not_exist"],
        ["solve", "--domain", "square_top_n", "--mesh-h", "-1"],
        ["verify", "--domain", "square_top_n", "--check", "nope"],
        [],
    ],
)
def test_input_errors_exit_2(tmp_path, capsys, argv):
    assert cli.main(argv + ["--out", str(tmp_path / "o")] if argv else []) == cli.EXIT_INPUT
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2 and err["message"]


def test_malformed_json_exit_2(tmp_path, capsys):
    bad = write(tmp_path, "bad.json", "{ not json")
    code, _ = run(tmp_path, "solve", "--domain", bad)
    assert code == 2
    assert "malformed JSON" in json.loads(capsys.readouterr().err)["message"]


def test_bad_load_expression_exit_2(tmp_path):
    loads = write(tmp_path, "loads.json", {"f": ["__import__('os')", 0]})
    code, _ = run(tmp_path, "solve", "--domain", "square_top_n", "--mesh-h", "0.25", "--loads", loads)
    assert code == 2


def test_incompatible_g_exit_2(tmp_path, capsys):
    # N empty requires ∫g = 0
    loads = write(tmp_path, "loads.json", {"g": 1.0})
    code, _ = run(tmp_path, "solve", "--domain", "counterexample_no_n", "--mesh-h", "0.25", "--loads", loads)
    assert code == 2
    assert json.loads(capsys.readouterr().err)["error"] == "IncompatibleDataError"


def test_empty_dirichlet_solve_exit_3(tmp_path, capsys):
    code, _ = run(tmp_path, "solve", "--domain", "counterexample_no_d", "--mesh-h", "0.25")
    assert code == 3
    assert json.loads(capsys.readouterr().err)["exit_code"] == 3


def test_green_symmetry_and_logbound(tmp_path):
    probes = write(tmp_path, "probes.json", {"pairs": [[[0.3, 0.4], [0.7, 0.6]]], "pole": [0.5, 0.5]})
    code, out = run(tmp_path, "green", "--domain", "square_mixed", "--mesh-h", "0.0625",
                    "--check", "symmetry,logbound", "--probes", probes)
    assert code == 0
    head, data = read_csv(out / "symmetry.csv")
    assert head == ["x1", "x2", "y1", "y2", "r", "defect", "relative"] and data.shape == (1, 7)
    head, data = read_csv(out / "logbound.csv")
    assert head == ["r", "max_abs_G"] and len(data) >= 3
    rep = json.loads((out / "green_report.json").read_text())
    assert {"slope", "r2", "pass"} <= set(rep["checks"]["logbound"])
    assert rep["checks"]["symmetry"]["pairs"][0]["r"] == pytest.approx(np.hypot(0.4, 0.2))
    assert (out / "green_sweep.csv").exists()


def test_green_probe_outside_exit_2(tmp_path):
    probes = write(tmp_path, "probes.json", {"pole": [2.0, 2.0]})
    code, _ = run(tmp_path, "green", "--domain", "square_mixed", "--mesh-h", "0.25", "--probes", probes)
    assert code == 2


def test_verify_all_pass(tmp_path):
    code, out = run(tmp_path, "verify", "--domain", "square_top_n", "--mesh-h", "0.125")
    assert code == 0
    rep = json.loads((out / "verify_report.json").read_text())
    assert rep["pass"] and rep["failed"] == []
    assert set(rep["checks"]) == set(cli.VERIFY_CHECKS)
    assert rep["checks"]["korn"]["constant"] > 0


def test_verify_flags_missing_n(tmp_path):
    code, out = run(tmp_path, "verify", "--domain", "counterexample_no_n", "--mesh-h", "0.125")
    assert code == 0
    rep = json.loads((out / "verify_report.json").read_text())
    assert not rep["pass"]
    assert "opening" in rep["failed"] and "NOpen" in rep["checks"]["opening"]["hypothesis"]


def test_verify_flags_missing_d(tmp_path):
    code, out = run(tmp_path, "verify", "--domain", "counterexample_no_d", "--mesh-h", "0.125")
    assert code == 0
    rep = json.loads((out / "verify_report.json").read_text())
    assert {"ahlfors_david", "korn", "opening"} <= set(rep["failed"])
    assert abs(rep["checks"]["korn"]["constant"]) <= 1e-8
    assert "rigid rotation" in rep["checks"]["korn"]["witness"]


def test_outputs_deterministic(tmp_path):
    a = cli.main(["verify", "--domain", "square_top_n", "--mesh-h", "0.25", "--out", str(tmp_path / "a")])
    b = cli.main(["verify", "--domain", "square_top_n", "--mesh-h", "0.25", "--out", str(tmp_path / "b")])
    assert a == b == 0
    assert (tmp_path / "a" / "verify_report.json").read_bytes() == (tmp_path / "b" / "verify_report.json").read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = write(tmp_path, "cfg.json", {"domain": "square_top_n", "mesh-h": 0.25, "seed": 7})
    code, out = run(tmp_path, "verify", "--config", cfg, "--check", "korn")
    assert code == 0
    rep = json.loads((out / "verify_report.json").read_text())
    assert rep["parameters"]["seed"] == 7 and rep["parameters"]["mesh_h"] == 0.25
    assert set(rep["checks"]) == {"korn"}
    code, out = run(tmp_path, "verify", "--config", cfg, "--check", "korn", "--seed", "3")
    assert json.loads((out / "verify_report.json").read_text())["parameters"]["seed"] == 3
    bad = write(tmp_path, "bad.json", {"domain": "square_top_n", "colour": "red"})
    assert run(tmp_path, "verify", "--config", bad)[0] == 2


def test_number_format_round_trips():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17, np.pi):
        assert float(fmt(x)) == x
    assert fmt(-0.0) == "0"
    assert dumps({"b": 1, "a": float("nan")}).index('"a"') < dumps({"b": 1, "a": float("nan")}).index('"b"')

import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from histfuse import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(capsys, *argv, stdin=None, monkeypatch=None):
    if stdin is not None:
        monkeypatch.setattr("sys.stdin", io.StringIO(stdin))
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_variance_a_anova(capsys):
    code, out, _ = run(capsys, "variance", "--kind", "A", "--spec", str(CONFIGS / "anova_rho1.json"))
    assert code == 0
    doc = json.loads(out)
    assert doc["schema"] == "histfuse/1"
    assert doc["A_thetatheta"] == 11.0


def test_variance_b_anova(capsys):
    _, out, _ = run(capsys, "variance", "--kind", "B", "--spec", str(CONFIGS / "anova_rho1.json"))
    assert json.loads(out)["B_thetatheta"] == pytest.approx(9.3333333333, abs=1e-9)


def test_variance_matrix_output_when_p_exceeds_one(capsys, tmp_path):
    spec = {"d_theta": np.eye(2).tolist(), "d_eta": [[1.0], [0.5]], "sigma_psi": np.eye(2).tolist(),
            "sigma": [[2.0]], "rho": 0.5}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(spec))
    _, out, _ = run(capsys, "variance", "--kind", "A", "--spec", str(path))
    doc = json.loads(out)
    assert doc["A_thetatheta"]["dim"] == 2
    assert doc["variance"]["te"]["shape"] == [2, 1]


def test_bliss_design_example(capsys):
    code, out, _ = run(capsys, "bliss-design", "--m1", "30", "--m2", "50", "--eta1", "0.7",
                       "--eta2", "0.8", "--n", "55")
    doc = json.loads(out)
    assert code == 0
    assert doc["n12"] + doc["n1"] + doc["n2"] == 55
    assert {"n12", "n1", "n2", "criterion"} <= doc.keys()


def test_bliss_design_nmin_csv(capsys):
    _, out, _ = run(capsys, "bliss-design", "--m1", "10", "--m2", "10", "--eta1", "0.3",
                    "--eta2", "0.3", "--nmin", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows[0]["n_min"] == "23" and rows[0]["n12"] == "22"


def test_combine_uncorrelated_echoes_theta(capsys, tmp_path):
    doc = {
        "schema": "histfuse/1",
        "current": {"theta": [0.123456789012345], "eta": [1.0], "n": 10,
                    "upsilon": {"tt": [[2.0]], "te": [[0.0]], "ee": [[1.0]]}},
        "historical": [{"value": [3.0], "scaled_var": [[1.0]], "n": 10}],
    }
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    _, out, _ = run(capsys, "combine", str(path))
    res = json.loads(out)
    assert res["estimate"]["theta"] == [0.123456789012345]
    assert res["estimate"]["eta"] == [2.0]


def test_combine_round_trip(capsys, tmp_path):
    _, first, _ = run(capsys, "combine", str(CONFIGS / "combine_example.json"))
    path = tmp_path / "out.json"
    path.write_text(first)
    doc = json.loads(first)
    joint = cli.joint_from_json(doc["estimate"], "estimate")
    assert cli.joint_to_json(joint) == doc["estimate"]
    code, second, _ = run(capsys, "combine", str(path))
    assert code == 0 and json.loads(second)["historical"] == doc["historical"]
    code, third, _ = run(capsys, "variance", "--kind", "C", "--spec", str(path))
    assert code == 0 and "C_thetatheta" in json.loads(third)


def test_combine_eta_only_from_stdin(capsys, monkeypatch):
    doc = {"current": {"value": [0.0], "scaled_var": {"dim": 1, "rows": [[1.0]]}, "n": 1},
           "historical": {"value": [2.0], "scaled_var": [[1.0]], "n": 1}}
    code, out, _ = run(capsys, "combine", "-", stdin=json.dumps(doc), monkeypatch=monkeypatch)
    assert code == 0
    assert json.loads(out)["estimate"]["value"][0] == pytest.approx(1.0, abs=1e-15)


def test_compare(capsys):
    _, out, _ = run(capsys, "compare", str(CONFIGS / "generic_spec.json"))
    doc = json.loads(out)
    assert doc["B_le_A"] and doc["C_le_Upsilon"]


def test_table_csv_columns(capsys):
    _, out, _ = run(capsys, "anova-table1", "--format", "csv")
    lines = out.splitlines()
    assert lines[0] == "n,m,A_thetatheta,B_thetatheta"
    assert len(lines) == 37
    _, out, _ = run(capsys, "anova-table2", "--rhos", "1/8", "--format", "csv", "--threads", "1")
    assert out.splitlines()[0] == "rho,B_min,xi00,xi10,xi01,xi11"
    _, out, _ = run(capsys, "bliss-table3", "--format", "csv")
    assert out.splitlines()[0] == "m1,m2,eta1,eta2,n_min,n12,n1,n2"


def test_anova_design_modes(capsys):
    _, out, _ = run(capsys, "anova-design", "--rho", "1", "--threads", "2")
    doc = json.loads(out)
    assert doc["B_min"] == pytest.approx(8.0, abs=0.02)
    _, out, _ = run(capsys, "anova-design", "--rho", "1/8", "--xi", "0", "0.0005", "0.0005", "0.999")
    assert json.loads(out)["D_thetatheta"] == pytest.approx(2.250751, abs=1e-4)


def test_simulate_is_byte_identical(capsys):
    args = ("simulate", "--scenario", "bliss", "--reps", "5000", "--seed", "17")
    _, a, _ = run(capsys, *args, "--threads", "1")
    _, b, _ = run(capsys, *args, "--threads", "3")
    assert a == b
    assert "elapsed" not in json.loads(a)
    _, c, _ = run(capsys, *args, "--timing")
    assert "elapsed" in json.loads(c)


def test_simulate_from_config_and_report(capsys, tmp_path):
    _, out, _ = run(capsys, "simulate", "--config", str(CONFIGS / "mc_typeI.json"), "--reps", "3000")
    doc = json.loads(out)
    assert doc["config"]["scenario"] == "anova-typeI" and doc["reps_used"] == 3000
    # a report can be fed back as a configuration
    path = tmp_path / "r.json"
    path.write_text(out)
    _, again, _ = run(capsys, "simulate", "--config", str(path))
    assert again == out


def test_simulate_coincidence(capsys):
    _, out, _ = run(capsys, "simulate", "--scenario", "anova-typeII", "--n", "400", "--m", "400",
                    "--reps", "2000", "--coincidence")
    assert json.loads(out)["max_abs_theta_B_minus_C"] <= 1e-10


def test_domain_error_exit_one(capsys):
    code, out, err = run(capsys, "bliss-design", "--m1", "30", "--m2", "50", "--eta1", "1.5",
                         "--eta2", "0.8", "--n", "5")
    assert code == 1 and out == ""
    e = json.loads(err)
    assert e["code"] == "RangeError" and set(e) == {"code", "message", "context"}


def test_not_pd_exit_one(capsys, tmp_path):
    spec = {"d_theta": [[1.0]], "d_eta": [[1.0]], "sigma_psi": [[1.0]], "sigma": [[-1.0]], "rho": 1.0}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(spec))
    code, _, err = run(capsys, "variance", "--kind", "A", "--spec", str(path))
    assert code == 1 and json.loads(err)["code"] == "NotPD"


def test_bad_json_exit_one(capsys, tmp_path):
    path = tmp_path / "x.json"
    path.write_text("{not json")
    code, _, err = run(capsys, "combine", str(path))
    assert code == 1 and json.loads(err)["code"] == "ConfigError"


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["anova-table1", "--bogus"],
    ["bliss-design", "--m1", "30"],
    ["variance", "--kind", "Z", "--spec", "x.json"],
    ["combine", "/no/such/file.json"],
    ["simulate", "--scenario", "bliss", "--format", "csv", "--reps", "1000"],
    [],
])
def test_usage_errors_exit_two(capsys, argv):
    assert cli.main(argv) == 2


def test_matrix_formats():
    np.testing.assert_array_equal(cli.matrix_from_json({"dim": 2, "rows": [[1, 2], [2, 1]]}),
                                  [[1, 2], [2, 1]])
    np.testing.assert_array_equal(cli.matrix_from_json([[1, 2, 3]]), [[1, 2, 3]])
    np.testing.assert_array_equal(cli.matrix_from_json(4.0), [[4.0]])
    assert cli.matrix_to_json(np.ones((1, 3)))["shape"] == [1, 3]
    with pytest.raises(cli.ConfigError):
        cli.matrix_from_json({"dim": 3, "rows": [[1.0]]})


def test_floats_survive_round_trip(capsys):
    _, out, _ = run(capsys, "anova-table1", "--n-list", "300", "--m-list", "700")
    row = json.loads(out)["rows"][0]
    from histfuse.anova import DesignXi, var_theta_B
    assert row["B_thetatheta"] == var_theta_B(DesignXi.balanced(), 300 / 700)

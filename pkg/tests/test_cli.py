import json

import pytest

from graphnls import cli
from graphnls.artifacts import read_json

FAST = ["--cells", "32", "--k-samples", "40"]


@pytest.fixture(scope="module")
def graph_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("g") / "interval.json"
    path.write_text(json.dumps({"vertices": ["a", "b"],
                                "edges": [{"from": "a", "to": "b", "length": 3.141592653589793}]}))
    return str(path)


@pytest.fixture(scope="module")
def solved(tmp_path_factory, graph_file):
    out = tmp_path_factory.mktemp("solve")
    code = cli.main(["solve", "--graph", graph_file, "--p", "7", "--mu", "auto", "--k", "2,3",
                     "--out", str(out), *FAST])
    return code, out


def test_spectrum_table(tmp_path, graph_file, capsys):
    assert cli.main(["spectrum", "--graph", graph_file, "-k", "5", "--out", str(tmp_path)]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert len(rows) == 5 and abs(float(rows[0].split()[1])) < 1e-10
    body = read_json(tmp_path / "spectrum.json")
    assert body["version"] == "0.1.0" and len(body["config_hash"]) == 64


def test_solve_records(solved):
    code, out = solved
    assert code == 0
    res = read_json(out / "solutions.json")["result"]
    assert len(res["sign_changing"]) == 2 and res["positive"]["kind"] == "positive"
    assert [r["k"] for r in res["sign_changing"]] == [2, 3]
    assert res["thresholds"]["mu"] == pytest.approx(0.5 * res["thresholds"]["mu_j"])
    assert (out / "trajectory.csv").exists()


def test_solve_is_byte_identical(solved, tmp_path, graph_file):
    _, out = solved
    code = cli.main(["solve", "--graph", graph_file, "--p", "7", "--mu", "auto", "--k", "2,3",
                     "--out", str(tmp_path), *FAST])
    assert code == 0
    assert (tmp_path / "solutions.json").read_bytes() == (out / "solutions.json").read_bytes()


def test_bifurcate_and_plots(tmp_path, graph_file, solved):
    code = cli.main(["bifurcate", "--graph", graph_file, "--k", "2", "--mu-start", "1e-2",
                     "--points", "8", "--out", str(tmp_path), *FAST])
    assert code == 0
    verdict = read_json(tmp_path / "bifurcation_k2.json")["result"]["verdict"]
    assert verdict["verdict"] == "PASS"
    assert (tmp_path / "branch_k2.csv").read_text().startswith("mu,pde_lambda,")

    _, sol_dir = solved
    for name in ("solutions.json", "trajectory.csv"):
        (tmp_path / name).write_bytes((sol_dir / name).read_bytes())
    assert cli.main(["plots", "--artifacts", str(tmp_path)]) == 0
    bif = (tmp_path / "bifurcation_k2.dat").read_text().splitlines()
    assert bif[0].startswith("# target lambda_2 = ")
    assert len(bif[2].split()) == 2
    ladder = [tuple(map(float, line.split())) for line in (tmp_path / "ladder.dat").read_text().splitlines()
              if not line.startswith("#")]
    assert [k for k, _ in ladder] == [2.0, 3.0] and ladder[0][1] < ladder[1][1]
    traj = [tuple(map(float, line.split())) for line in (tmp_path / "trajectory.dat").read_text().splitlines()
            if not line.startswith("#")]
    energies = [e for _, e in traj]
    assert all(b <= a + 1e-15 * abs(a) for a, b in zip(energies, energies[1:]))


def test_plots_missing(tmp_path, capsys):
    assert cli.main(["plots", "--artifacts", str(tmp_path)]) == 2
    assert "MissingArtifact" in capsys.readouterr().err


def test_strict_refusal_names_inequality(tmp_path, graph_file, capsys):
    code = cli.main(["solve", "--graph", graph_file, "--mu", "2.0", "--strict", "--out", str(tmp_path), *FAST])
    assert code == 4
    err = capsys.readouterr().err
    assert "mu < mu1" in err and "mu_hat_2" in err
    assert not (tmp_path / "solutions.json").exists()


@pytest.mark.parametrize("argv", [
    ["solve", "--graph", "interval", "--p", "5"],
    ["solve", "--graph", "interval", "--mu", "-1"],
    ["spectrum", "--graph", "no/such/file.json"],
    ["thresholds", "--graph", "loop", "--k", "3", *FAST],
    ["thresholds", "--graph", "interval", "--k", "1"],
    ["nonsense"],
])
def test_config_errors(argv, tmp_path):
    assert cli.main([*argv, "--out", str(tmp_path)] if argv[0] != "nonsense" else argv) == 2


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    from graphnls.exceptions import BranchLost

    def boom(*args, **kwargs):
        raise BranchLost("lost", mu=1e-3)

    monkeypatch.setattr(cli, "sweep", boom)
    code = cli.main(["bifurcate", "--graph", "interval", "--out", str(tmp_path), *FAST])
    assert code == 3
    err = capsys.readouterr().err
    assert "BranchLost" in err and "test_cli" in err


def test_lab_counterexample(tmp_path, capsys):
    assert cli.main(["lab", "--scenario", "counterexample", "--out", str(tmp_path)]) == 0
    assert "FAIL" in capsys.readouterr().out
    body = read_json(tmp_path / "lab_tangent_disc.json")
    assert body["result"]["decay"]["passed"] is False


def test_lab_orthant(tmp_path):
    assert cli.main(["lab", "--scenario", "orthant", "--starts", "10", "--out", str(tmp_path)]) == 0
    res = read_json(tmp_path / "lab_orthant.json")["result"]
    assert res["invariance"]["passed"] and res["decay"]["passed"]

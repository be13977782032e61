import csv

import numpy as np
import pytest

from xhdg.assembly import assemble_local
from xhdg.cli import main
from xhdg.driver import compute_errors, convergence_orders, run_study, solve_case, write_csv
from xhdg.problems import make_case


def test_order_example():
    assert np.isclose(convergence_orders([0.1, 0.05], [1e-1, 2.5e-2])[1], 2.0)
    assert np.isnan(convergence_orders([0.1], [1.0])[0])


def test_zero_solution_has_unit_error():
    sol = solve_case(make_case("circle-interface"), 8, 1)
    sol.u[:] = 0
    sol.sigma[:] = 0
    err = compute_errors(sol)
    assert np.isclose(err["u"], 1.0) and np.isclose(err["sigma"], 1.0)


def test_recovery_satisfies_local_equations():
    prob = make_case("circle-interface")
    sol = solve_case(prob, 8, 2)
    for g, b in zip(sol.system.groups, sol.system.body):
        lam = sol.trace[g.dofs]
        x = np.concatenate([sol.sigma[g.sides].reshape(len(g.sides), -1),
                            sol.u[g.sides].reshape(len(g.sides), -1)], axis=1)
        # K x + B lam = (0, -b)
        ref = sol.dofmap.sides[g.sides[0]]
        blocks = assemble_local(ref, sol.dofmap, prob.materials[ref.side], 6)
        rhs = np.zeros_like(x)
        rhs[:, sol.dofmap.n_local_sigma:] = -b
        res = x @ blocks.K.T + lam @ blocks.B.T - rhs
        assert np.abs(res).max() <= 1e-9 * max(1.0, np.abs(rhs).max(), np.abs(x).max())


def test_study_and_csv(tmp_path):
    rows = run_study(make_case("circle-interface"), 1, [8, 16])
    path = tmp_path / "out.csv"
    write_csv(rows, path)
    with open(path) as fh:
        data = list(csv.reader(fh))
    assert data[0] == ["N", "h", "err_u", "order_u", "err_sigma", "order_sigma"]
    assert data[1][3] == "" and float(data[2][3]) > 1.5
    again = tmp_path / "again.csv"
    write_csv(run_study(make_case("circle-interface"), 1, [8, 16]), again)
    assert path.read_text() == again.read_text()


def test_cli_run(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["run", "--case", "nonconvex-domain", "--k", "1", "--n", "8,16",
                 "--lambda", "1e9", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3


def test_cli_dump_fields(tmp_path):
    out = tmp_path / "f.txt"
    assert main(["dump-fields", "--case", "circle-domain", "--k", "2", "--n", "8", "--out", str(out)]) == 0
    data = np.loadtxt(out)
    assert data.shape[1] == 7
    r = np.hypot(data[:, 0] - 0.5, data[:, 1] - 0.5)
    assert r.max() <= np.sqrt(3 / 16) + 1e-12


@pytest.mark.parametrize("argv", [
    ["run", "--case", "crack-tip", "--nu", "0.3", "--out", "x.csv"],
    ["run", "--case", "circle-interface", "--n", "4", "--out", "x.csv"],
    ["dump-fields", "--case", "circle-interface", "--n", "0", "--out", "x.txt"],
])
def test_cli_errors(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) != 0
    assert "error" in capsys.readouterr().err


def test_cli_rejects_bad_mesh_list():
    with pytest.raises(SystemExit):
        main(["run", "--case", "circle-interface", "--n", "16,8", "--out", "x.csv"])

import csv
import io
import json

import numpy as np
import pytest

from kronenergy.cli import main, parse_eps_grid
from kronenergy.energy import PolyDynamics
from kronenergy.fileio import load_coeffs, save_model
from kronenergy.kronpoly import kron_power
from kronenergy.models import HeatModelConfig, build_heat_fem


@pytest.fixture
def heat15(tmp_path):
    path = tmp_path / "heat15.json"
    assert main(["model", "build", "--N", "16", "--out", str(path)]) == 0
    return path


def compute(model, out, kind="future", eta="0.5", degree="3", extra=()):
    return main(["energy", "compute", "--model", str(model), "--kind", kind, "--eta", eta,
                 "--degree", degree, "--out", str(out), *extra])


def test_model_build(tmp_path, capsys):
    out = tmp_path / "m.json"
    assert main(["model", "build", "--N", "8", "--out", str(out)]) == 0
    assert "n=7" in capsys.readouterr().out
    assert json.loads(out.read_text())["n"] == 7
    assert main(["model", "build", "--N", "6", "--out", str(tmp_path / "bad.json")]) == 2
    assert not (tmp_path / "bad.json").exists()


def test_degree_two_is_riccati_only(heat15, tmp_path):
    out = tmp_path / "w.json"
    assert compute(heat15, out, degree="2") == 0
    E = load_coeffs(out)
    assert E.degree == 2 and list(E.coeffs) == [2]
    assert E.info["riccati_residual"] <= 1e-10


def test_invalid_eta_rejected(heat15, tmp_path):
    assert compute(heat15, tmp_path / "w.json", eta="0") == 2
    assert compute(heat15, tmp_path / "w.json", eta="1.5") == 2


def test_solver_error_exit_code(tmp_path):
    # no inputs: the past equation has no admissible solution
    sys_ = PolyDynamics(-np.eye(2), np.zeros((2, 1)), np.ones((1, 2)), {})
    save_model(tmp_path / "m.json", sys_)
    assert compute(tmp_path / "m.json", tmp_path / "v.json", kind="past") == 3


def test_eval_zero_state(heat15, tmp_path, capsys):
    compute(heat15, tmp_path / "w.json")
    np.save(tmp_path / "zero.npy", np.zeros(15))
    capsys.readouterr()
    assert main(["energy", "eval", "--coeffs", str(tmp_path / "w.json"), "--x0", str(tmp_path / "zero.npy")]) == 0
    assert float(capsys.readouterr().out.splitlines()[0]) == 0.0


def test_eval_linear_quadratic(tmp_path, capsys):
    sys_ = PolyDynamics(np.array([[-1.0, 0.2], [0.0, -2.0]]), np.array([[1.0], [0.5]]), np.array([[1.0, 1.0]]), {})
    save_model(tmp_path / "lin.json", sys_)
    compute(tmp_path / "lin.json", tmp_path / "w.json", degree="2")
    W = load_coeffs(tmp_path / "w.json").coeffs[2].reshape(2, 2)
    x = np.array([0.3, -0.7])
    (tmp_path / "x.json").write_text(json.dumps(x.tolist()))
    capsys.readouterr()
    main(["energy", "eval", "--coeffs", str(tmp_path / "w.json"), "--x0", str(tmp_path / "x.json")])
    lines = capsys.readouterr().out.splitlines()
    assert float(lines[0]) == pytest.approx(0.5 * x @ W @ x, rel=1e-14)
    assert json.loads(lines[1])["d"] == 2


def test_eval_matches_naive_kron(heat15, tmp_path, capsys):
    compute(heat15, tmp_path / "w.json", degree="4")
    E = load_coeffs(tmp_path / "w.json")
    x0 = build_heat_fem(HeatModelConfig(N=16)).x0
    naive = 0.5 * sum(v @ kron_power(x0, k) for k, v in E.coeffs.items())
    capsys.readouterr()
    main(["energy", "eval", "--coeffs", str(tmp_path / "w.json"), "--x0-model", str(heat15),
          "--json", str(tmp_path / "val.json")])
    value = float(capsys.readouterr().out.strip())
    assert value == pytest.approx(naive, rel=1e-12)
    assert json.loads((tmp_path / "val.json").read_text())["value"] == value


def test_eval_dimension_mismatch(heat15, tmp_path):
    compute(heat15, tmp_path / "w.json", degree="2")
    np.save(tmp_path / "x.npy", np.ones(3))
    assert main(["energy", "eval", "--coeffs", str(tmp_path / "w.json"), "--x0", str(tmp_path / "x.npy")]) == 2


def test_eps_grid_parsing():
    np.testing.assert_allclose(parse_eps_grid("1e-3:1e-1:3"), [1e-3, 1e-2, 1e-1])
    np.testing.assert_allclose(parse_eps_grid("0.1,0.2"), [0.1, 0.2])
    with pytest.raises(Exception):
        parse_eps_grid("0.1")
    with pytest.raises(SystemExit):
        main(["residual", "check", "--model", "m", "--coeffs", "c", "--eps-grid", "-1,2"])


def test_residual_check_linear_skipped(tmp_path, capsys):
    sys_ = PolyDynamics(-np.eye(2), np.ones((2, 1)), np.ones((1, 2)), {})
    save_model(tmp_path / "lin.json", sys_, x0=np.array([1.0, -0.5]))
    compute(tmp_path / "lin.json", tmp_path / "w.json", degree="2")
    capsys.readouterr()
    rc = main(["residual", "check", "--model", str(tmp_path / "lin.json"), "--coeffs", str(tmp_path / "w.json"),
               "--strict", "--json", str(tmp_path / "r.json")])
    assert rc == 0
    assert "skipped" in capsys.readouterr().out
    assert json.loads((tmp_path / "r.json").read_text())["status"] == "skipped"


@pytest.mark.parametrize("kind", ["past", "future"])
def test_residual_check_heat_degree_three(heat15, tmp_path, capsys, kind):
    compute(heat15, tmp_path / "e.json", kind=kind)
    capsys.readouterr()
    rc = main(["residual", "check", "--model", str(heat15), "--coeffs", str(tmp_path / "e.json"),
               "--eps-grid", "1e-3:1e-1:9", "--strict", "--json", str(tmp_path / "r.json")])
    report = json.loads((tmp_path / "r.json").read_text())
    assert rc == 0 and report["status"] == "pass"
    assert report["slope"] == pytest.approx(4.0, abs=0.3)
    assert len(report["residual"]) == 9


def test_bench_single_size(capsys):
    assert main(["bench", "--degrees", "2,3", "--sizes", "7", "--reps", "1"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [(r["d"], r["n"]) for r in rows] == [("2", "7"), ("3", "7")]
    assert all(float(r["wall_s"]) > 0 and r["reps"] == "1" for r in rows)


def test_bench_sorted_to_file(tmp_path, monkeypatch):
    monkeypatch.setenv("KRONENERGY_NUM_THREADS", "1")
    out = tmp_path / "b.csv"
    assert main(["bench", "--degrees", "3", "--sizes", "15,7", "--reps", "2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["n", "d", "eta", "kind", "energy_x0", "wall_s", "riccati_res", "kway_res_max", "reps"]
    assert [r["n"] for r in rows] == ["7", "15"]


def test_bench_rejects_bad_size():
    assert main(["bench", "--degrees", "2", "--sizes", "8"]) == 2

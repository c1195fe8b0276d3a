import csv
import io
import json

import numpy as np
import pytest

from tatonnement import io as tio
from tatonnement.cli import EXIT_FAIL, EXIT_IO, EXIT_OK, main
from tatonnement.generators import gen_random_db
from tatonnement.market import Market


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def generate(tmp_path, capsys, name, *flags):
    path = tmp_path / name
    code, _, err = run(["generate", *flags, "-o", path], capsys)
    assert code == EXIT_OK, err
    return path


@pytest.fixture
def uniform_file(tmp_path, capsys):
    return generate(tmp_path, capsys, "u.json", "--kind", "uniform_circulant", "--n", 6,
                    "--half-degree", 2)


@pytest.fixture
def random_file(tmp_path, capsys):
    return generate(tmp_path, capsys, "r.json", "--kind", "random_db", "--n", 7, "--seed", 5,
                    "--density", 0.5)


def write_market(path, C, delta=1.0):
    path.write_text(tio.dumps(tio.market_to_dict(Market(np.asarray(C, float), delta))))
    return path


# -- generate and round trip --------------------------------------------------------

@pytest.mark.parametrize("flags", [
    ["--kind", "uniform_circulant", "--n", 5],
    ["--kind", "price_chain", "--n", 6, "--a", 1.5, "--delta", 0.5],
    ["--kind", "exp_gap_chain", "--n", 3, "--A", 2.0],
    ["--kind", "random_db", "--n", 9, "--seed", 3],
])
def test_generate_round_trip(tmp_path, capsys, flags):
    path = generate(tmp_path, capsys, "m.json", *flags)
    d = json.loads(path.read_text())
    assert d["schema_version"] == tio.SCHEMA_VERSION and d["kind"] == "market"
    assert d["generator"]["seed"] == 0 or "--seed" in flags
    m = tio.market_from_dict(d)
    again = tio.market_to_dict(m)
    assert json.loads(tio.dumps(again))["C"] == d["C"]
    # serialize -> parse -> serialize is a fixed point, bit for bit
    np.testing.assert_array_equal(tio.market_from_dict(json.loads(tio.dumps(again))).C, m.C)


def test_generate_random_matches_library(random_file):
    m = tio.market_from_dict(json.loads(random_file.read_text()))
    np.testing.assert_array_equal(m.C, gen_random_db(7, 0.5, seed=5).C)


def test_every_command_reads_generated_file(random_file, capsys):
    for cmd in ("validate", "solve", "spectrum", "bounds"):
        code, out, err = run([cmd, "-i", random_file], capsys)
        assert code == EXIT_OK, err
        assert json.loads(out)["schema_version"] == tio.SCHEMA_VERSION
    code, out, _ = run(["simulate", "-i", random_file, "--record-every", 20], capsys)
    assert code == EXIT_OK
    code, out, _ = run(["noise", "-i", random_file, "--trials", 1, "--kappa", 0.5], capsys)
    assert code == EXIT_OK


# -- command behaviour ---------------------------------------------------------------

def test_solve_uniform(uniform_file, capsys):
    code, out, _ = run(["solve", "-i", uniform_file], capsys)
    assert code == EXIT_OK
    rep = json.loads(out)
    np.testing.assert_allclose(rep["equilibrium"]["r"], 1.0, atol=1e-13)
    assert rep["kind"] == "equilibrium"


def test_bounds_random_exit_zero(random_file, capsys):
    code, out, _ = run(["bounds", "-i", random_file], capsys)
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["holds"] and rep["laplacian"]["holds"]


def test_spectrum_csv(uniform_file, capsys):
    code, out, _ = run(["spectrum", "-i", uniform_file, "--format", "csv"], capsys)
    assert code == EXIT_OK
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["index", "eigenvalue", "q_image", "is_kernel"]
    assert len(rows) == 7
    assert sum(int(r[3]) for r in rows[1:]) == 1


def test_spectrum_full_includes_matrices(uniform_file, capsys):
    _, short, _ = run(["spectrum", "-i", uniform_file], capsys)
    _, full, _ = run(["spectrum", "-i", uniform_file, "--full"], capsys)
    assert "L_C" not in json.loads(short) and "L_C" in json.loads(full)


def test_simulate_reports_and_csv(random_file, tmp_path, capsys):
    code, out, _ = run(["simulate", "-i", random_file, "--random", "--seed", 4,
                        "--record-every", 20], capsys)
    rep = json.loads(out)
    assert rep["seed"] == 4 and rep["initial_condition"] == {"random": True, "seed": 4}
    assert rep["fitted_rate"] == pytest.approx(rep["damping_rate"], rel=0.05)
    csv_path = tmp_path / "traj.csv"
    code, _, _ = run(["simulate", "-i", random_file, "--record-every", 50, "--format", "csv",
                      "-o", csv_path], capsys)
    assert code == EXIT_OK
    assert csv_path.read_text().splitlines()[0] == "t,alpha_bar_B_norm"


def test_simulate_eigenmode_rate(random_file, capsys):
    code, out, _ = run(["simulate", "-i", random_file, "--mode", 0, "--record-every", 10], capsys)
    rep = json.loads(out)
    assert rep["fitted_rate"] == pytest.approx(rep["damping_rate"], rel=0.02)


def test_noise_seed_echo_and_histogram(tmp_path, capsys):
    path = write_market(tmp_path / "two.json", [[0, 1], [1, 0]])
    argv = ["noise", "-i", path, "--kappa", 1.0, "--seed", 17, "--T", 30, "--bins", 6]
    code, out, _ = run(argv, capsys)
    rep = json.loads(out)
    assert code == EXIT_OK and rep["seed"] == 17
    code, out2, _ = run(argv, capsys)
    assert out2 == out
    code, table, _ = run(argv + ["--format", "csv"], capsys)
    rows = list(csv.reader(io.StringIO(table)))
    assert rows[0] == ["mode", "bin_left", "bin_right", "count"] and len(rows) == 7


# -- failures ------------------------------------------------------------------------

def test_validate_asymmetric_support(tmp_path, capsys):
    path = write_market(tmp_path / "bad.json", [[0, 1, 0], [0, 0, 1], [1, 1, 0]])
    code, _, err = run(["validate", "-i", path], capsys)
    assert code == EXIT_FAIL
    e = json.loads(err)
    assert e["module"] == "market" and e["operation"] == "validate"
    assert e["witness"] is not None and len(e["witness"]) == 2


def test_precondition_failures_exit_one(random_file, tmp_path, capsys):
    assert run(["simulate", "-i", random_file, "--amplitude", 0.5], capsys)[0] == EXIT_FAIL
    assert run(["simulate", "-i", random_file, "--mode", 99], capsys)[0] == EXIT_FAIL
    assert run(["noise", "-i", random_file, "--kappa", -1], capsys)[0] == EXIT_FAIL
    assert run(["solve", "-i", random_file, "--format", "csv"], capsys)[0] == EXIT_FAIL
    assert run(["generate", "--kind", "price_chain", "--n", 5, "--a", 0.5], capsys)[0] == EXIT_FAIL
    code, _, err = run(["solve"], capsys)
    assert code == EXIT_FAIL and json.loads(err)["witness"] == {"flag": "--input"}


def test_io_failures_exit_two(tmp_path, capsys):
    assert run(["solve", "-i", tmp_path / "missing.json"], capsys)[0] == EXIT_IO
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{not json")
    assert run(["solve", "-i", garbage], capsys)[0] == EXIT_IO
    wrong = tmp_path / "wrong.json"
    wrong.write_text('{"delta": 1.0}')
    code, _, err = run(["validate", "-i", wrong], capsys)
    assert code == EXIT_IO and json.loads(err)["operation"] == "io"


def test_csv_floats_round_trip():
    x = 0.1 + 0.2
    text = tio.to_csv(("a", "b"), [(1, x)])
    assert float(text.splitlines()[1].split(",")[1]) == x


def test_dumps_handles_non_finite():
    d = json.loads(tio.dumps({"a": np.inf, "b": np.float64("nan"), "c": np.arange(2)}))
    assert d == {"a": "inf", "b": "nan", "c": [0, 1]}

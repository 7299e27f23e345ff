from __future__ import annotations

import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from latentadj import fit
from latentadj.cli import main
from latentadj.errors import InputError
from latentadj.io import read_config, read_matrix, write_matrix
from latentadj.simulation import SimulationConfig, generate_scenario


def _write(path, text):
    path.write_text(text)
    return path


def test_read_small_tsv(tmp_path):
    m = read_matrix(_write(tmp_path / "a.tsv", "id\ts1\ts2\nf1\t1\t2\nf2\t3\t4\n"))
    np.testing.assert_array_equal(m.values, [[1, 2], [3, 4]])
    assert m.row_ids == ["f1", "f2"] and m.col_ids == ["s1", "s2"]


def test_read_csv(tmp_path):
    m = read_matrix(_write(tmp_path / "a.csv", "id,s1\nf1,1.5e-3\n"))
    assert m.values[0, 0] == 1.5e-3


def test_na_cell_named(tmp_path):
    path = _write(tmp_path / "a.tsv", "id\ts1\ts2\nf1\t1\tNA\n")
    with pytest.raises(InputError, match=r"line 2, column 3 \('s2'\).*'NA'"):
        read_matrix(path)


@pytest.mark.parametrize("text,msg", [
    ("id\ts1\ts2\nf1\t1\n", "line 2 has 2 fields"),
    ("id\ts1\nf1\t1\nf1\t2\n", "duplicate row id 'f1'"),
    ("id\ts1\ts1\nf1\t1\t2\n", "duplicate column id 's1'"),
    ("id\ts1\nf1\tinf\n", "non-finite"),
    ("id\ts1\n", "header line and at least one"),
])
def test_malformed(tmp_path, text, msg):
    with pytest.raises(InputError, match=msg):
        read_matrix(_write(tmp_path / "a.tsv", text))


def test_unknown_extension(tmp_path):
    with pytest.raises(InputError, match="delimiter"):
        read_matrix(_write(tmp_path / "a.dat", "id\ts\nf\t1\n"))


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=6),
                  elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_round_trip_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("rt") / "m.tsv"
    rows = [f"r{i}" for i in range(values.shape[0])]
    cols = [f"c{j}" for j in range(values.shape[1])]
    write_matrix(path, values, rows, cols)
    back = read_matrix(path)
    np.testing.assert_array_equal(back.values, values)
    assert back.row_ids == rows and back.col_ids == cols


def test_read_config(tmp_path):
    cfg = read_config(_write(tmp_path / "c.cfg", "# top\nn = 50\nomega-scenario=null # trailing\n\n"))
    assert cfg == {"n": "50", "omega_scenario": "null"}
    with pytest.raises(InputError, match="line 1"):
        read_config(_write(tmp_path / "d.cfg", "oops\n"))


# -- command line ----------------------------------------------------------


def _toy_files(tmp_path, shuffle_x=False):
    """10 features x 6 samples, noiseless y = b x'."""
    x = np.array([0, 1, 0, 1, 1, 0], dtype=float)
    b = np.arange(1.0, 11.0) / 4
    y = np.outer(b, x) + np.outer(np.ones(10), np.ones(6)) * 2.0
    samples = [f"s{i}" for i in range(6)]
    write_matrix(tmp_path / "y.tsv", y, [f"g{i}" for i in range(10)], samples)
    order = [5, 3, 1, 0, 2, 4] if shuffle_x else list(range(6))
    write_matrix(tmp_path / "x.tsv", x[order], [samples[i] for i in order], ["treat"], corner="sample")
    write_matrix(tmp_path / "z.tsv", np.ones(6), samples, ["intercept"], corner="sample")
    return b


def test_adjust_toy_recovers_b(tmp_path):
    b = _toy_files(tmp_path, shuffle_x=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rc = main(["adjust", "--y", str(tmp_path / "y.tsv"), "--x", str(tmp_path / "x.tsv"),
                   "--z", str(tmp_path / "z.tsv"), "--ols", "--out", str(tmp_path / "r.tsv"),
                   "--summary", str(tmp_path / "s.json")])
    assert rc == 0
    res = read_matrix(tmp_path / "r.tsv")
    assert res.col_ids[:2] == ["unadjusted:beta_hat.treat", "unadjusted:se.treat"]
    np.testing.assert_allclose(res.values[:, 0], b, atol=1e-12)
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["schema_version"] == "1.0" and summary["k"] == 0


def test_adjust_k_zero_usage_error(tmp_path, capsys):
    _toy_files(tmp_path)
    with pytest.raises(SystemExit) as info:
        main(["adjust", "--y", str(tmp_path / "y.tsv"), "--x", str(tmp_path / "x.tsv"), "--k", "0",
              "--out", "o.tsv", "--summary", "s.json"])
    assert info.value.code == 2
    assert "--ols" in capsys.readouterr().err


def test_adjust_missing_sample_is_error(tmp_path, capsys):
    _toy_files(tmp_path)
    write_matrix(tmp_path / "x.tsv", np.ones(5), [f"s{i}" for i in range(5)], ["treat"])
    rc = main(["adjust", "--y", str(tmp_path / "y.tsv"), "--x", str(tmp_path / "x.tsv"), "--k", "1",
               "--out", str(tmp_path / "o.tsv"), "--summary", str(tmp_path / "s.json")])
    assert rc == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "input_error" and "s5" in err["message"]


def test_validate_unknown_suite():
    with pytest.raises(SystemExit) as info:
        main(["validate", "--suite", "bogus"])
    assert info.value.code == 2


def test_validate_prints_lines(capsys):
    assert main(["validate", "--suite", "oracles"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3 and "3/3 criteria passed" in out


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    root = tmp_path_factory.mktemp("sim")
    (root / "sim.cfg").write_text("n = 40\np = 1500\nk = 4\nomega_scenario = omega2\n"
                                  "methods = adjusted_uncorrected,adjusted_bias_corrected\n")
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(root / "sim.cfg"), "--reps", "1", "--seed", "7",
                     "--out", str(root / name), "--write-data"]) == 0
    return root


def test_simulate_deterministic(simulated):
    files = sorted(p.relative_to(simulated / "a") for p in (simulated / "a").rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (simulated / "a" / rel).read_bytes() == (simulated / "b" / rel).read_bytes()


def test_simulate_then_adjust_matches_library(simulated, tmp_path):
    d = simulated / "a" / "data_000"
    rc = main(["adjust", "--y", str(d / "y.tsv"), "--x", str(d / "x.tsv"), "--z", str(d / "z.tsv"),
               "--k", "4", "--methods", "adjusted_bias_corrected,adjusted_uncorrected",
               "--out", str(tmp_path / "r.tsv"), "--summary", str(tmp_path / "s.json")])
    assert rc == 0
    cfg = SimulationConfig(n=40, p=1500, k=4, omega_scenario="omega2", seed=7)
    data, _ = generate_scenario(cfg, 0)
    res = fit(data, 4, methods=("adjusted_bias_corrected", "adjusted_uncorrected"))
    out = read_matrix(tmp_path / "r.tsv")
    cols = {c: i for i, c in enumerate(out.col_ids)}
    prim, unc = res.tables["adjusted_bias_corrected"], res.tables["adjusted_uncorrected"]
    np.testing.assert_array_equal(out.values[:, cols["beta_hat.group1"]], prim.beta_hat[:, 0])
    np.testing.assert_array_equal(out.values[:, cols["q.group1"]], prim.q_value[:, 0])
    np.testing.assert_array_equal(out.values[:, cols["adjusted_uncorrected:p.group1"]], unc.p_value[:, 0])
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["rho_hat"] == res.factors.rho_hat
    assert summary["lambda_hat"] == res.factors.lambda_hat.tolist()
    assert summary["clamped"] == res.omega.clamped.tolist()
    ct = summary["confounding_test"]["per_covariate"]["group1"]
    assert ct["p_value"] == res.confounding.p_values[0]
    assert (summary["n"], summary["n_effective"], summary["p"], summary["d"], summary["k"]) == (40, 39, 1500, 1, 4)


def test_adjust_config_file_and_override(tmp_path):
    _toy_files(tmp_path)
    (tmp_path / "run.cfg").write_text(
        f"y = {tmp_path / 'y.tsv'}\nx = {tmp_path / 'x.tsv'}\nz = {tmp_path / 'z.tsv'}\nk = 9\n"
        f"out = {tmp_path / 'r.tsv'}\nsummary = {tmp_path / 's.json'}\nols = true\n")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert main(["adjust", "--config", str(tmp_path / "run.cfg"), "--fdr-method", "bh"]) == 0
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["fdr_method"] == "bh" and summary["k"] == 0

import json
from pathlib import Path

import numpy as np
import pytest

from mwggm.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, chain_seed, main, parse_dlm_spec
from mwggm.config import ConfigError
from mwggm.io import load_counts, read_traces
from mwggm.tensor import read_array, write_array

FIT = "iters = 60\nburn = 20\nn_mc = 40\nrho_n_mc = 40\n"


def _write(path: Path, text: str) -> str:
    path.write_text(text)
    return str(path)


def _tree(root: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


@pytest.fixture(scope="module")
def sims(tmp_path_factory):
    root = tmp_path_factory.mktemp("sims")
    out = {}
    for model, extra in (("multiway", "shape = 2 3\nn = 6\n"),
                         ("surveillance", "lattice = 2 2\ncancers = 2\nyears = 6\n"),
                         ("dlm", "shape = 2 2\nT = 5\n")):
        cfg = _write(root / f"{model}.cfg", f"model = {model}\n{extra}")
        assert main(["simulate", "--config", cfg, "--out-dir", str(root / model), "--seed", "3"]) == EXIT_OK
        out[model] = root / model
    return out


def test_simulate_outputs(sims):
    data = read_array(sims["multiway"] / "data.txt")
    assert data.shape == (2, 3, 6)
    y, h = load_counts(sims["surveillance"] / "counts.csv")
    assert y.shape == (2, 4, 6) and np.all(h == 1e4)
    series = sorted(sims["dlm"].glob("series_*.txt"))
    assert len(series) == 5 and read_array(series[0]).shape == (2, 2)
    summary = json.loads((sims["multiway"] / "summary.json").read_text())
    assert summary["seed"] == 3 and summary["files"][0] == "data.txt"


def _fit_args(kind, sims, tmp_path, out):
    cfg = _write(tmp_path / "fit.cfg", FIT)
    common = ["--config", cfg, "--out-dir", str(out), "--seed", "11", "--chains", "2"]
    if kind == "multiway":
        return ["fit-multiway", "--data", str(sims["multiway"] / "data.txt"), "--dims", "2"] + common
    if kind == "surveillance":
        return ["fit-surveillance", "--counts", str(sims["surveillance"] / "counts.csv"),
                "--adjacency", str(sims["surveillance"] / "adjacency.txt")] + common
    series = [str(p) for p in sorted(sims["dlm"].glob("series_*.txt"))]
    return ["fit-dlm", "--series", *series, "--spec", str(sims["dlm"] / "spec.cfg")] + common


EXPECTED = {
    "multiway": {"edges_1.csv", "edges_2.csv", "summary.json", "trace_K1.csv", "trace_K2.csv", "trace_z2.csv"},
    "surveillance": {"risk_surface.csv", "cancer_edges.csv", "rho_posterior.csv", "ar_order_posterior.csv",
                     "summary.json", "trace_rho.csv", "trace_mu.csv"},
    "dlm": {"edges_1.csv", "edges_2.csv", "summary.json", "trace_K1.csv", "smoothed_states.csv",
            "filtered_states.csv"},
}


@pytest.mark.parametrize("kind", ["multiway", "surveillance", "dlm"])
def test_fits_are_byte_identical_on_rerun(kind, sims, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(_fit_args(kind, sims, tmp_path, a)) == EXIT_OK
    assert main(_fit_args(kind, sims, tmp_path, b)) == EXIT_OK
    ta, tb = _tree(a), _tree(b)
    assert EXPECTED[kind] <= set(ta)
    assert ta == tb
    summary = json.loads(ta["summary.json"])
    assert summary["seeds"] == [chain_seed(11, 0), chain_seed(11, 1)] == [11, 10]
    assert summary["n_samples"] == [40, 40]


def test_thread_count_does_not_change_results(sims, tmp_path):
    args = _fit_args("multiway", sims, tmp_path, tmp_path / "one")
    assert main(args) == EXIT_OK
    assert main(_fit_args("multiway", sims, tmp_path, tmp_path / "two") + ["--threads", "2"]) == EXIT_OK
    assert _tree(tmp_path / "one") == _tree(tmp_path / "two")


def test_surveillance_outputs_are_distributions(sims, tmp_path):
    assert main(_fit_args("surveillance", sims, tmp_path, tmp_path / "o")) == EXIT_OK
    rho = np.loadtxt(tmp_path / "o" / "rho_posterior.csv", delimiter=",", skiprows=1)
    q = np.loadtxt(tmp_path / "o" / "ar_order_posterior.csv", delimiter=",", skiprows=1)
    assert rho.shape == (31, 2) and q.shape == (4, 2)
    assert abs(rho[:, 1].sum() - 1) < 1e-12 and abs(q[:, 1].sum() - 1) < 1e-12
    risk = np.loadtxt(tmp_path / "o" / "risk_surface.csv", delimiter=",", skiprows=1)
    assert risk.shape == (2 * 4 * 6, 5) and np.all(risk[:, 3] > 0)


def test_floats_are_written_at_full_precision(sims, tmp_path):
    assert main(_fit_args("multiway", sims, tmp_path, tmp_path / "o")) == EXIT_OK
    for line in (tmp_path / "o" / "trace_K1.csv").read_text().splitlines()[1:20]:
        value = line.rsplit(",", 1)[1]
        assert float(value) == float(format(float(value), ".17g"))
        assert value == format(float(value), ".17g")


def test_diagnose_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    for name, shift in (("ref", 0.0), ("ok", 0.0), ("bad", 1.0)):
        with open(tmp_path / f"{name}.csv", "w") as fh:
            fh.write("chain,iteration,parameter,value\n")
            for k, v in enumerate(rng.standard_normal(2000) + shift):
                fh.write(f"0,{k + 1},x,{float(v)!r}\n")
    out = tmp_path / "d"
    assert main(["diagnose", "--traces", str(tmp_path / "ok.csv"), "--reference", str(tmp_path / "ref.csv"),
                 "--out-dir", str(out)]) == EXIT_OK
    report = json.loads((out / "diagnose.json").read_text())
    assert report["passed"] is True and "x" in report["ess"]
    assert main(["diagnose", "--traces", str(tmp_path / "bad.csv"), "--reference", str(tmp_path / "ref.csv"),
                 "--out-dir", str(out)]) == EXIT_OK
    assert json.loads((out / "diagnose.json").read_text())["passed"] is False
    assert len(read_traces(tmp_path / "ok.csv")["x"]) == 2000


# -- exit codes ------------------------------------------------------------------------------

def test_config_errors_exit_2(sims, tmp_path):
    bad = _write(tmp_path / "bad.cfg", "iters = 10\nburn = 20\n")
    data = str(sims["multiway"] / "data.txt")
    assert main(["fit-multiway", "--data", data, "--dims", "2", "--config", bad]) == EXIT_CONFIG
    assert main(["fit-multiway", "--data", data, "--dims", "2", "--config", str(tmp_path / "none")]) == EXIT_CONFIG
    assert main(["fit-multiway", "--data", data, "--dims", "2", "--chains", "0"]) == EXIT_CONFIG
    sim = _write(tmp_path / "s.cfg", "model = surveillance\nar_order = 7\n")
    assert main(["simulate", "--config", sim, "--out-dir", str(tmp_path / "s")]) == EXIT_CONFIG
    assert main(["simulate", "--config", _write(tmp_path / "e.cfg", "n = 3\n")]) == EXIT_CONFIG
    spec = _write(tmp_path / "spec.cfg", "F = 1\nG = 2\n")
    assert main(["fit-dlm", "--series", data, "--spec", spec, "--out-dir", str(tmp_path / "d")]) == EXIT_CONFIG


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["fit-multiway"])
    assert exc.value.code == 2


def test_data_errors_exit_3(sims, tmp_path):
    out = str(tmp_path / "o")
    data = str(sims["multiway"] / "data.txt")
    assert main(["fit-multiway", "--data", str(tmp_path / "none.txt"), "--dims", "2", "--out-dir", out]) == EXIT_DATA
    assert main(["fit-multiway", "--data", data, "--dims", "4", "--out-dir", out]) == EXIT_DATA
    counts = (sims["surveillance"] / "counts.csv").read_text().replace(",1,1,", ",1,1,-", 1)
    bad = _write(tmp_path / "counts.csv", counts)
    assert main(["fit-surveillance", "--counts", bad, "--adjacency", str(sims["surveillance"] / "adjacency.txt"),
                 "--out-dir", out]) == EXIT_DATA
    nan = tmp_path / "nan.txt"
    write_array(nan, np.array([[np.nan, 1.0], [0.0, 1.0]]))
    assert main(["fit-multiway", "--data", str(nan), "--dims", "2", "--out-dir", out]) == EXIT_DATA


def test_numerical_failure_exits_4_with_diagnostic(tmp_path):
    huge = tmp_path / "huge.txt"
    write_array(huge, np.full((2, 3, 4), 1e300))
    out = tmp_path / "o"
    cfg = _write(tmp_path / "fit.cfg", FIT)
    assert main(["fit-multiway", "--data", str(huge), "--dims", "2", "--config", cfg,
                 "--out-dir", str(out)]) == EXIT_NUMERICAL
    assert "not finite" in (out / "diagnostic.txt").read_text()
    assert not (out / "summary.json").exists()


def test_dlm_spec_parser():
    spec = parse_dlm_spec("F = 1 0\nH = 1 1 0 1\nW = 0.1 0 0 0.1\nv = 2\nM0 = 0.5\n", (2,), 4)
    assert spec.F.shape == (4, 2) and np.array_equal(spec.H[2], [[1, 1], [0, 1]])
    assert np.all(spec.v == 2) and np.all(spec.M0 == 0.5) and spec.W.shape == (4, 2, 2)
    assert parse_dlm_spec("F = 1\n", (2,), 3, default_beta=0.9).beta == 0.9
    for text in ("H = 1\n", "F = 1\nH = 1 2\n", "F = 1\nv = 1 2\n", "F = x\n", "F = 1\nF = 1\n",
                 "F = 1\nC0 = -1\n", "F 1\n"):
        with pytest.raises(ConfigError):
            parse_dlm_spec(text, (2,), 3)

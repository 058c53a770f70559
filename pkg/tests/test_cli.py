import json
import subprocess
import sys

import numpy as np
import pytest

from oracles import glm_oracle, turnbull_oracle
from gelc.cli import EXIT_CONVERGENCE, EXIT_IO, EXIT_OK, EXIT_PARSE, EXIT_RANK, main


def write_csv(path, header, rows):
    path.write_text(",".join(header) + "\n" + "\n".join(",".join(repr(float(v)) for v in r) for r in rows) + "\n")
    return str(path)


@pytest.fixture
def exact_gamma_csv(tmp_path):
    rng = np.random.default_rng(0)
    n = 150
    z = np.round(rng.exponential(12, n), 3)
    x = rng.normal(size=n)
    y = rng.gamma(2.0, np.exp(1.0 + 0.2 * x - 0.05 * z) / 2.0)
    path = write_csv(tmp_path / "exact.csv", ["y", "zl", "zr", "x1"], zip(y, z, z, x))
    return path, np.column_stack([np.ones(n), x, z]), y


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fit_exact_gamma_matches_oracle(capsys, exact_gamma_csv):
    path, D, y = exact_gamma_csv
    code, out, _ = run(capsys, "fit", "--data", path, "--family", "gamma", "--json")
    assert code == EXIT_OK
    d = json.loads(out)
    est, se = glm_oracle(D, y, "gamma")
    # the oracle orders (alpha, x1, z, phi) like the fit
    np.testing.assert_allclose([r["estimate"] for r in d["coefficients"]], est, rtol=1e-5)
    np.testing.assert_allclose([r["se"] for r in d["coefficients"]], se, rtol=1e-5)
    assert [r["name"] for r in d["coefficients"]] == ["alpha", "beta1", "gamma", "phi"]


def test_text_output_round_trips_with_json(capsys, exact_gamma_csv):
    path = exact_gamma_csv[0]
    _, text, _ = run(capsys, "fit", "--data", path, "--family", "gamma")
    _, js, _ = run(capsys, "fit", "--data", path, "--family", "gamma", "--json")
    d = json.loads(js)
    lines = text.splitlines()
    assert lines[0].split()[-1] == "mean_ratio"
    for row, coef in zip(lines[1:5], d["coefficients"]):
        cells = row.split()
        assert cells[0] == coef["name"]
        keys = [k for k in ["estimate", "se", "z", "lower", "upper", "ratio"] if coef[k] is not None]
        assert len(cells) == len(keys) + 1
        for printed, key in zip(cells[1:], keys):
            assert float(printed) == float(f"{coef[key]:.6g}")
    assert f"loglikelihood: {d['loglik']:.6g}" in text


def test_bernoulli_has_no_phi_row(capsys, tmp_path):
    rng = np.random.default_rng(1)
    z = rng.exponential(12, 80)
    y = (rng.random(80) < 1 / (1 + np.exp(0.1 * z))).astype(float)
    path = write_csv(tmp_path / "b.csv", ["y", "zl", "zr"], zip(y, np.floor(z / 3) * 3, np.floor(z / 3) * 3 + 3))
    code, out, _ = run(capsys, "fit", "--data", path, "--family", "binomial")
    assert code == EXIT_OK
    assert "phi" not in out and "odds_ratio" in out
    assert out.splitlines()[2].split()[0] == "gamma"


def test_malformed_row_cites_line(capsys, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,zl,zr\n1.0,0,1\n2.0,5,4\n")
    code, _, err = run(capsys, "fit", "--data", str(path), "--family", "gamma")
    assert code == EXIT_PARSE
    assert "line 3" in err and "zl" in err


def test_exit_codes(capsys, tmp_path):
    assert run(capsys, "fit", "--data", str(tmp_path / "missing.csv"), "--family", "gamma")[0] == EXIT_IO
    neg = tmp_path / "neg.csv"
    neg.write_text("y,zl,zr\n-1.0,0,1\n2.0,1,2\n")
    assert run(capsys, "fit", "--data", str(neg), "--family", "gamma")[0] == EXIT_PARSE
    rank = tmp_path / "rank.csv"
    rank.write_text("y,zl,zr\n1.0,2,2\n2.0,2,2\n3.0,2,2\n")
    assert run(capsys, "fit", "--data", str(rank), "--family", "gamma")[0] == EXIT_RANK
    path = write_csv(tmp_path / "c.csv", ["y", "zl", "zr"], [(1.0, 0, 3), (2.5, 2, 6), (0.7, 1, 4), (4.0, 5, 9)])
    code, _, err = run(capsys, "fit", "--data", path, "--family", "gamma", "--max-outer", "1", "--eps-p", "1e-15",
                       "--eps-l", "1e-16")
    assert code == EXIT_CONVERGENCE and "did not converge" in err
    with pytest.raises(SystemExit) as info:
        main(["fit", "--data", path])  # the family is never implied
    assert info.value.code == 2


def test_npmle_classic_innermost(capsys, tmp_path):
    path = tmp_path / "two.csv"
    path.write_text("zl,zr,zl_closed,zr_closed\n1,3,1,1\n2,5,1,1\n")
    code, out, _ = run(capsys, "npmle", "--data", str(path), "--json")
    assert code == EXIT_OK
    d = json.loads(out)
    assert d["cells"] == ["[2, 3]"] and d["weights"] == pytest.approx([1.0])


def test_npmle_all_exact_empirical(capsys, tmp_path):
    path = tmp_path / "ex.csv"
    path.write_text("zl,zr\n1,1\n2,2\n2,2\n3,3\n")
    d = json.loads(run(capsys, "npmle", "--data", str(path), "--json")[1])
    assert d["weights"] == pytest.approx([0.25, 0.5, 0.25])


def test_npmle_gamma_zero_matches_classic(capsys, tmp_path):
    rng = np.random.default_rng(4)
    L = rng.integers(0, 10, 12).astype(float)
    R = L + rng.integers(1, 5, 12)
    y = rng.gamma(2, 1, 12)
    path = write_csv(tmp_path / "g0.csv", ["y", "zl", "zr"], zip(y, L, R))
    aug = json.loads(run(capsys, "npmle", "--data", path, "--mode", "augmented", "--family", "gamma",
                         "--gamma-zero", "--eps", "1e-13", "--json")[1])
    cand, ref = turnbull_oracle(list(zip(L, R)))
    left, right, w = map(np.array, (aug["left"], aug["right"], aug["weights"]))
    agg = [w[(left >= p) & (right <= q)].sum() for p, q in cand]
    np.testing.assert_allclose(agg, ref, atol=1e-6)
    assert run(capsys, "npmle", "--data", path, "--mode", "augmented")[0] == 2


SCENARIOS = {
    "seed": 3,
    "scenarios": [
        {"n": 30, "family": "bernoulli", "alpha": 0, "gamma": -0.1, "censor_mean_width": 3},
        {"n": 30, "family": "gamma", "alpha": 10, "gamma": -0.05, "phi": 1, "censor_mean_width": 3},
    ],
}


def test_simulate_smoke_and_determinism(capsys, tmp_path):
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps(SCENARIOS))
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        code, text, _ = run(capsys, "simulate", "--scenarios", str(scen), "--reps", "2", "--out", str(out))
        assert code == EXIT_OK
        outs.append(out)
    for name in ["metrics.csv", "replicates.csv", "scenarios.json"]:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    header, *rows = (outs[0] / "metrics.csv").read_text().splitlines()
    assert header == "scenario,parameter,metric,value,mcse"
    metrics = {r.split(",")[2] for r in rows}
    assert {"RelBias", "Bias", "EmpSE", "RMSE", "CP"} <= metrics
    assert "RelBias%" in text


def test_simulate_errors(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps([{"n": 10, "family": "gamma"}]))
    assert run(capsys, "simulate", "--scenarios", str(bad), "--out", str(tmp_path / "o"))[0] == EXIT_PARSE
    good = tmp_path / "good.json"
    good.write_text(json.dumps(SCENARIOS))
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run(capsys, "simulate", "--scenarios", str(good), "--out", str(blocker / "sub"))[0] == EXIT_IO


def test_console_entry_point(tmp_path, exact_gamma_csv):
    proc = subprocess.run([sys.executable, "-m", "gelc.cli", "fit", "--data", exact_gamma_csv[0], "--family",
                           "gamma"], capture_output=True, text=True)
    assert proc.returncode == 0 and "converged: True" in proc.stdout

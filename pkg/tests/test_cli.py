import csv
import hashlib
import json
import subprocess
import sys
from importlib import resources

import numpy as np
import pytest

from jointshrink import __version__
from jointshrink.cli import main, read_config
from jointshrink.core import ReturnsMatrix, write_returns_csv

BUNDLED = [
    "tables_toeplitz_gmv", "tables_toeplitz_gmv_wide",
    "tables_toeplitz_markowitz", "tables_toeplitz_markowitz_wide",
    "tables_factor_gmv", "tables_factor_gmv_wide",
    "tables_factor_markowitz", "tables_factor_markowitz_wide",
]


@pytest.fixture
def returns_csv(tmp_path):
    rng = np.random.default_rng(0)
    X = 0.01 + 0.04 * rng.standard_normal((40, 5))
    x = ReturnsMatrix.from_array(X, [f"S{j}" for j in range(5)],
                                 [f"2015-{m:02d}" if m <= 12 else f"2016-{m - 12:02d}"
                                  for m in range(1, 25)] + [f"2017-{m:02d}" for m in range(1, 17)])
    path = tmp_path / "r.csv"
    write_returns_csv(x, path)
    return path


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_version(capsys):
    assert main(["version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_entry_point():
    out = subprocess.run([sys.executable, "-m", "jointshrink.cli", "version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == f"jointshrink {__version__}"


class TestEstimate:
    def test_space_json_and_manifest(self, tmp_path, returns_csv):
        out = tmp_path / "fit.json"
        rc = main(["estimate", "--input", str(returns_csv), "--estimator", "space-unweighted",
                   "--lambda", "auto", "--output", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["lambda_used"] > 0 and "rho_edges" in doc
        man = json.loads((tmp_path / "fit.json.manifest.json").read_text())
        assert man["command"] == "estimate"
        assert man["inputs"][str(returns_csv)] == sha256(returns_csv)
        assert man["version"] == __version__
        assert man["config"]["lam"] == "auto"

    def test_deterministic(self, tmp_path, returns_csv):
        outs = []
        for k in range(2):
            out = tmp_path / f"w{k}.json"
            main(["estimate", "--input", str(returns_csv), "--estimator", "space-weighted",
                  "--output", str(out), "--seed", "3"])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    @pytest.mark.parametrize("est", ["nodewise", "ledoit-wolf"])
    def test_precision_csv(self, tmp_path, returns_csv, est):
        out = tmp_path / "prec.csv"
        assert main(["estimate", "--input", str(returns_csv), "--estimator", est,
                     "--output", str(out)]) == 0
        with out.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["asset", "S0", "S1", "S2", "S3", "S4"]
        assert len(rows) == 6

    def test_malformed_row(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("date,A,B\n2020-01,0.1,0.2\n2020-02,0.1,oops\n2020-03,0.0,0.1\n")
        rc = main(["estimate", "--input", str(bad), "--output", str(tmp_path / "o.json")])
        assert rc != 0
        assert "line 3" in capsys.readouterr().err

    def test_unknown_estimator(self, tmp_path, returns_csv, capsys):
        rc = main(["estimate", "--input", str(returns_csv), "--estimator", "poet",
                   "--output", str(tmp_path / "o.json")])
        assert rc != 0
        assert "poet" in capsys.readouterr().err


class TestSimulate:
    def test_bundled_config_shape(self, tmp_path):
        rc = main(["simulate", "--config", "tables_toeplitz_gmv", "--grid", "40x10",
                   "--replications", "2", "--output-dir", str(tmp_path), "--quiet"])
        assert rc == 0
        with (tmp_path / "study.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 5 * 3
        assert {r["estimator"] for r in rows} == {"space_unweighted", "space_weighted", "nodewise",
                                                  "poet", "ledoit_wolf"}
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["seed"] == 20240601
        assert man["config"]["replications"] == 2

    def test_same_seed_identical(self, tmp_path):
        outs = []
        for k in range(2):
            d = tmp_path / str(k)
            main(["simulate", "--dgp", "sparse_factor", "--grid", "30x8", "--estimators",
                  "ledoit-wolf,nodewise", "--replications", "3", "--seed", "5",
                  "--output-dir", str(d), "--quiet"])
            outs.append((d / "study.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("JOINTSHRINK_REPLICATIONS", "1")
        main(["simulate", "--grid", "30x8", "--estimators", "ledoit-wolf",
              "--output-dir", str(tmp_path), "--quiet"])
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["config"]["replications"] == 1
        # flags beat the environment
        main(["simulate", "--grid", "30x8", "--estimators", "ledoit-wolf", "--replications", "2",
              "--output-dir", str(tmp_path), "--quiet"])
        assert json.loads((tmp_path / "manifest.json").read_text())["config"]["replications"] == 2

    def test_smoke_one_replication(self, tmp_path):
        rc = main(["simulate", "--config", "tables_toeplitz_gmv", "--grid", "100x50",
                   "--replications", "1", "--output-dir", str(tmp_path), "--quiet"])
        assert rc == 0

    def test_bad_grid(self, tmp_path, capsys):
        rc = main(["simulate", "--grid", "100by50", "--output-dir", str(tmp_path)])
        assert rc != 0
        assert "grid" in capsys.readouterr().err


class TestBacktest:
    def test_bundled_fixture_defaults(self, tmp_path):
        assert main(["backtest", "--output-dir", str(tmp_path), "--quiet"]) == 0
        with (tmp_path / "summary.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert [r["estimator"] for r in rows[::2]] == ["space_unweighted", "space_weighted",
                                                       "nodewise", "ledoit_wolf"]
        assert list(rows[0]) == ["estimator", "portfolio", "block", "return", "variance",
                                 "sharpe", "turnover"]
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["config"]["cost_bps"] == 50
        fixture = resources.files("jointshrink") / "data" / "synthetic_monthly.csv"
        assert list(man["inputs"].values()) == [hashlib.sha256(fixture.read_bytes()).hexdigest()]
        for tag in ("space_unweighted", "ledoit_wolf"):
            assert (tmp_path / f"report_{tag}.json").exists()
            assert (tmp_path / f"periods_{tag}.csv").exists()

    def test_zero_cost(self, tmp_path, returns_csv):
        main(["backtest", "--input", str(returns_csv), "--train-length", "20", "--estimators",
              "ledoit-wolf", "--cost-bps", "0", "--output-dir", str(tmp_path), "--quiet"])
        rep = json.loads((tmp_path / "report_ledoit_wolf.json").read_text())
        a, b = rep["without_cost"], rep["with_cost"]
        assert (a["return"], a["variance"], a["sharpe"]) == (b["return"], b["variance"], b["sharpe"])

    def test_markowitz_target_default(self, tmp_path, returns_csv):
        main(["backtest", "--input", str(returns_csv), "--train-length", "20", "--estimators",
              "ledoit-wolf", "--portfolio", "markowitz", "--output-dir", str(tmp_path), "--quiet"])
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["config"]["target"] == 0.007974

    def test_risk_free(self, tmp_path, returns_csv):
        rf = tmp_path / "rf.csv"
        dates = [row.split(",")[0] for row in returns_csv.read_text().splitlines()[1:]]
        rf.write_text("date,rate\n" + "".join(f"{d},0.001\n" for d in dates))
        main(["backtest", "--input", str(returns_csv), "--train-length", "20", "--estimators",
              "ledoit-wolf", "--risk-free", str(rf), "--output-dir", str(tmp_path / "a"),
              "--quiet"])
        main(["backtest", "--input", str(returns_csv), "--train-length", "20", "--estimators",
              "ledoit-wolf", "--output-dir", str(tmp_path / "b"), "--quiet"])
        a = json.loads((tmp_path / "a" / "report_ledoit_wolf.json").read_text())
        b = json.loads((tmp_path / "b" / "report_ledoit_wolf.json").read_text())
        assert abs(b["without_cost"]["return"] - a["without_cost"]["return"] - 0.001) < 1e-12
        man = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert len(man["inputs"]) == 2

    def test_too_short(self, tmp_path, returns_csv, capsys):
        rc = main(["backtest", "--input", str(returns_csv), "--train-length", "40",
                   "--estimators", "ledoit-wolf", "--output-dir", str(tmp_path)])
        assert rc != 0
        assert "training length" in capsys.readouterr().err


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs(name):
    cfg = read_config(name)
    assert cfg["dgp"] in ("toeplitz", "sparse_factor")
    assert cfg["replications"] == "100"
    assert cfg["markowitz_mu"] == "sample"
    cells = [tuple(map(int, c.split("x"))) for c in cfg["grid"].split(",")]
    ns = [n for n, _ in cells]
    assert ns == [100, 200, 400]
    ratio = 1.5 if name.endswith("_wide") else 0.5
    assert all(p == int(n * ratio) for n, p in cells)
    assert cfg["estimators"].split(",") == ["space-unweighted", "space-weighted", "nodewise",
                                            "poet", "ledoit-wolf"]


def test_config_file_parse_error(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("dgp = toeplitz\nthis line is wrong\n")
    with pytest.raises(Exception, match="line 2"):
        read_config(str(path))

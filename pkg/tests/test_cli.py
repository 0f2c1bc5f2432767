import json
import math

import numpy as np
import pytest

from powerlaw_portfolio.cli import EXIT_OK, EXIT_VALIDATION, RunConfig, main
from powerlaw_portfolio.errors import ValidationError
from powerlaw_portfolio.marketdata import PriceTable, write_price_table


@pytest.fixture(scope="module")
def prices(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    rc = main(["synth", "--sources", "laplace*3,uniform*2,student_t:6", "--N", "8", "--noise", "0.2",
               "--start", "2007-01-01", "--end", "2012-12-31", "--seed", "4", "--out", str(out)])
    assert rc == EXIT_OK
    return out / "prices.csv"


def _load(path):
    return json.loads(path.read_text())


def test_synth_writes_prices_and_truth(prices):
    truth = _load(prices.parent / "truth.json")
    assert len(truth["families"]) == 6
    assert np.array(truth["mixing"]).shape == (8, 6)
    assert truth["run_config"]["command"] == "synth"


def test_synth_unknown_family(tmp_path, capsys):
    assert main(["synth", "--sources", "cauchy", "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert "cauchy" in capsys.readouterr().err


def test_synth_heavy_tail_warns(tmp_path, capsys):
    assert main(["synth", "--sources", "student_t:3", "--T", "100", "--out", str(tmp_path)]) == EXIT_OK
    assert "warning" in capsys.readouterr().err


def test_bad_flag_exits_validation(capsys):
    with pytest.raises(SystemExit) as info:
        main(["weights", "--bogus"])
    assert info.value.code == EXIT_VALIDATION


def test_decompose_is_deterministic(prices, tmp_path):
    args = ["decompose", "--input", str(prices), "--k", "6", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    first = (tmp_path / "decomposition.json").read_bytes()
    assert main(args) == EXIT_OK
    assert (tmp_path / "decomposition.json").read_bytes() == first
    doc = _load(tmp_path / "decomposition.json")
    assert len(doc["buckets"][0]["components"]) == 6


def test_decompose_csv_mirror(prices, tmp_path):
    assert main(["decompose", "--input", str(prices), "--k", "4", "--format", "csv", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "components_all.csv").exists()


def test_k_above_asset_count(prices, tmp_path, capsys):
    assert main(["decompose", "--input", str(prices), "--k", "9", "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert "error" in capsys.readouterr().err


def test_rank_deficient_panel(tmp_path, capsys):
    dates = np.busday_offset("2020-01-01", np.arange(200), roll="forward")
    base = 100 * np.cumprod(1 + 0.01 * np.random.default_rng(0).standard_normal(200))
    table = PriceTable(dates, ("A", "B"), np.column_stack([base, base]))
    write_price_table(table, tmp_path / "p.csv")
    assert main(["decompose", "--input", str(tmp_path / "p.csv"), "--k", "2", "--out", str(tmp_path)]) == 1
    assert "rank" in capsys.readouterr().err


def test_weights_columns(prices, tmp_path):
    rc = main(["weights", "--input", str(prices), "--k", "6", "--p", "2", "--p", "4", "--p", "inf", "--exact",
               "--format", "csv", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    doc = _load(tmp_path / "weights.json")
    cols = doc["buckets"][0]["columns"]
    assert [c["p"] for c in cols] == ["2", "4", "inf"]
    for c in cols:
        for key in ("raw_component", "component", "raw_asset", "asset"):
            assert key in c
        assert sum(v * v for v in c["component"]) == pytest.approx(1.0, rel=1e-12)
    assert "exact_component" in cols[1] and "exact_component" not in cols[2]
    assert (tmp_path / "component_weights_all.csv").exists()
    assert (tmp_path / "asset_weights_all.csv").exists()


def test_weights_empty_portfolio_exits_zero(prices, tmp_path, capsys):
    rc = main(["weights", "--input", str(prices), "--k", "4", "--hurdle", "1.0", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    assert _load(tmp_path / "weights.json")["empty_portfolio"] is True
    assert "notice" in capsys.readouterr().err


def test_backtest_tables(prices, tmp_path):
    rc = main(["backtest", "--input", str(prices), "--k", "6", "--buckets", "calendar:3", "--format", "csv",
               "--series", "--plot-data", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    doc = _load(tmp_path / "backtest.json")
    assert len(doc["table1"]) == 2 and len(doc["table2"]) == 2
    for t1, t2 in zip(doc["table1"], doc["table2"]):
        assert t1["columns"] == ["2", "4", "100", "inf"]
        assert "Fat-tailed Ratio (p=4 power-law ratio)" in t1["rows"]
        m = np.array(t2["matrix"])
        np.testing.assert_array_equal(np.diag(m), 1.0)
    assert sorted(p.name for p in tmp_path.glob("table1_*.csv")) == ["table1_2007-2009.csv", "table1_2010-2012.csv"]
    assert len(list((tmp_path / "plot_data").glob("weight_curve_*.csv"))) == 4
    assert len(list(tmp_path.glob("returns_*.csv"))) == 8


def test_single_order_correlation_table(prices, tmp_path):
    assert main(["backtest", "--input", str(prices), "--k", "4", "--p", "2", "--out", str(tmp_path)]) == EXIT_OK
    assert _load(tmp_path / "backtest.json")["table2"][0]["matrix"] == [[1.0]]


def test_missing_bucket_named(prices, tmp_path, capsys):
    rc = main(["backtest", "--input", str(prices), "--k", "4", "--buckets", "1990-01-01:1990-12-31:old",
               "--out", str(tmp_path)])
    assert rc == EXIT_VALIDATION
    assert "old" in capsys.readouterr().err


def test_run_config_validation():
    with pytest.raises(ValidationError):
        RunConfig(command="weights", input="p.csv", k=0)
    with pytest.raises(ValidationError):
        RunConfig(command="weights", input="p.csv", p_list=(1.0,))
    cfg = RunConfig(command="weights", input="p.csv", p_list=(2.0, math.inf))
    assert cfg.to_dict()["p_list"] == ["2", "inf"]

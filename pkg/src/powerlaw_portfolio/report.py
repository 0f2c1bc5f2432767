"""Report documents and their file forms.

Documents are plain dicts of JSON types. Non-finite floats become ``None``
so output is valid JSON, and key order follows insertion so identical runs
give byte-identical files. Every file is written to a temporary name in the
target directory and then renamed into place.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .backtest import BucketResult
from .powerlaw import format_order, weight_curve

STAT_ROWS = (
    ("Return", "annualized_return"),
    ("Excess Return", "annualized_excess_return"),
    ("Standard Deviation", "annualized_stdev"),
    ("Kurtosis", "kurtosis_raw"),
    ("Excess Kurtosis", "kurtosis_excess"),
    ("Sharpe Ratio", "sharpe_ratio"),
    ("Effective Components", "effective_component_count"),
    ("Squared-Weight Entropy", "squared_weight_entropy"),
)


def clean(obj):
    """Convert numpy scalars/arrays to Python types and non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.datetime64):
        return str(obj)
    return obj


def _atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, document) -> Path:
    return _atomic_write(path, json.dumps(clean(document), indent=2, allow_nan=False) + "\n")


def _cell(v) -> str:
    v = clean(v)
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return _atomic_write(path, buf.getvalue())


def stats_table(result: BucketResult) -> dict:
    """Rows are statistics, columns are penalty orders."""
    columns = [format_order(p) for p in result.p_list]
    rows = {}
    for name, attr in STAT_ROWS:
        rows[name] = [getattr(s, attr) for s in result.stats]
    for key in result.stats[0].power_law_ratios:
        name = "Fat-tailed Ratio (p=4 power-law ratio)" if key == "4" else f"Power-law Ratio p={key}"
        rows[name] = [s.power_law_ratios.get(key) for s in result.stats]
    return {
        "bucket": result.bucket.label,
        "columns": columns,
        "rows": rows,
        "empty": [s.empty for s in result.stats],
    }


def correlation_table(result: BucketResult) -> dict:
    return {
        "bucket": result.bucket.label,
        "columns": [format_order(p) for p in result.p_list],
        "matrix": result.correlations,
    }


def backtest_document(results: Sequence[BucketResult], run_config: dict) -> dict:
    buckets = []
    for r in results:
        buckets.append({
            "bucket": r.bucket.to_dict(),
            "symbols": list(r.symbols),
            "warnings": list(r.warnings),
            "decomposition": {
                "seed": r.decomposition.seed,
                "iterations": r.decomposition.n_iter,
                "signs": r.decomposition.signs,
                "viable": r.decomposition.viable,
                "means": r.decomposition.means,
            },
            "portfolios": [
                {
                    "label": s.label,
                    "p": format_order(s.p),
                    "empty": s.empty,
                    "component_weights": s.weights_used.weights,
                    "raw_component_weights": None if s.raw_weights is None else s.raw_weights.weights,
                    "asset_weights": s.asset_weights,
                }
                for s in r.series
            ],
        })
    return {
        "config": run_config,
        "table1": [stats_table(r) for r in results],
        "table2": [correlation_table(r) for r in results],
        "buckets": buckets,
    }


def write_backtest_csv(out_dir, results: Sequence[BucketResult], series: bool = False) -> list[Path]:
    """Per-bucket statistics table and correlation matrix as CSV files."""
    out_dir = Path(out_dir)
    paths = []
    for r in results:
        tag = _safe(r.bucket.label)
        t1 = stats_table(r)
        paths.append(write_csv(out_dir / f"table1_{tag}.csv", ["Statistic"] + [f"p={c}" for c in t1["columns"]],
                               [[name] + list(vals) for name, vals in t1["rows"].items()]))
        t2 = correlation_table(r)
        paths.append(write_csv(out_dir / f"table2_{tag}.csv", ["p"] + t2["columns"],
                               [[c] + list(row) for c, row in zip(t2["columns"], r.correlations)]))
        if series:
            for s in r.series:
                p = format_order(s.p)
                paths.append(write_csv(out_dir / f"returns_{tag}_p{p}.csv", ["period", "return"],
                                       list(enumerate(s.returns))))
                paths.append(write_weight_file(out_dir / f"weights_{tag}_p{p}.csv", r.symbols, s.asset_weights))
    return paths


def write_weight_file(path, symbols: Sequence[str], weights) -> Path:
    """Two-column (symbol, weight) file."""
    return write_csv(path, ["symbol", "weight"], list(zip(symbols, np.asarray(weights, dtype=float))))


def write_plot_data(out_dir, p_values: Sequence[float], excess_max: float = 2.0, n: int = 201) -> list[Path]:
    """Weight-vs-excess-return curves (unit moment), one two-column file per order."""
    grid = np.linspace(-0.5 * excess_max, excess_max, n)
    paths = []
    for p in p_values:
        w = weight_curve(grid, p)
        paths.append(write_csv(Path(out_dir) / f"weight_curve_p{format_order(p)}.csv", ["excess_return", "weight"],
                               list(zip(grid, w))))
    return paths


def _safe(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)

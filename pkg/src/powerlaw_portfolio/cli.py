"""Command-line interface: ``decompose``, ``weights``, ``backtest`` and ``synth``.

Exit codes: 0 on success (a flagged empty portfolio included), 1 for invalid
input or configuration, 2 when a numerical method fails.
"""
from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .backtest import BacktestConfig, component_weights, prepare_bucket, run_backtest
from .errors import EmptyPortfolioError, NumericalError, ValidationError
from .marketdata import BucketSpec, load_price_table, parse_bucket_arg, write_price_table
from .moments import kurtosis
from .powerlaw import PenaltySpec, format_order, normalize, parse_order, to_asset_weights
from .report import backtest_document, write_backtest_csv, write_csv, write_json, write_plot_data
from .solver import ObjectiveSpec, exact_weights
from .synth import SynthConfig, generate

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2
FORMS = {"abs": "absolute", "absolute": "absolute", "signed": "signed"}
NORMS = {"sumsq": "sum_sq_one", "sum": "unit_sum"}
DEFAULT_P = (2.0, 4.0, 100.0, math.inf)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved options of one command; embedded verbatim in its report."""

    command: str
    input: Optional[str] = None
    buckets: Optional[str] = None
    k: int = 10
    p_list: tuple = DEFAULT_P
    form: str = "absolute"
    # weights are reported for lambda = 1/p; other lambdas only rescale raw weights
    lambda_convention: str = "1/p"
    normalization: str = "sum_sq_one"
    hurdle: float = 0.0
    short_rate: Optional[float] = None
    seed: int = 0
    exact: bool = False
    threads: int = 1
    out: str = "out"
    format: str = "json"
    kind: str = "arithmetic"
    period_per_year: int = 252
    nonlinearity: str = "logcosh"
    min_obs: int = 30
    restarts: int = 16
    walk_forward: bool = False
    plot_data: bool = False
    series: bool = False
    synth: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command != "synth" and not self.input:
            raise ValidationError("--input is required")
        if self.k < 1:
            raise ValidationError("--k must be positive")
        if not self.p_list:
            raise ValidationError("at least one --p is required")
        for p in self.p_list:
            PenaltySpec(p, form=self.form)
        if self.threads < 1:
            raise ValidationError("--threads must be positive")
        if self.format not in ("json", "csv"):
            raise ValidationError("--format must be json or csv")
        if self.period_per_year < 1:
            raise ValidationError("--period-per-year must be positive")
        if not math.isfinite(self.hurdle) or (self.short_rate is not None and not math.isfinite(self.short_rate)):
            raise ValidationError("funding rates must be finite")

    def backtest_config(self) -> BacktestConfig:
        return BacktestConfig(
            k=self.k, kind=self.kind, period_per_year=self.period_per_year, form=self.form,
            normalization=self.normalization, hurdle=self.hurdle, short_rate=self.short_rate, seed=self.seed,
            exact=self.exact, nonlinearity=self.nonlinearity, min_obs=self.min_obs, restarts=self.restarts,
            walk_forward=self.walk_forward,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["p_list"] = [format_order(p) for p in self.p_list]
        return d


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _order(text: str) -> float:
    try:
        return parse_order(text)
    except (ValueError, ValidationError) as exc:
        raise argparse.ArgumentTypeError(f"invalid order {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="powerlaw-portfolio", description="Power-law portfolios on independent components.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, default=1)

    data = _Parser(add_help=False)
    data.add_argument("--input", required=True, help="price CSV (date column + one column per symbol)")
    data.add_argument("--buckets", help="JSON bucket file, calendar:<years>, or START:END[:LABEL],...")
    data.add_argument("--k", type=int, default=10, help="number of independent components")
    data.add_argument("--kind", choices=("arithmetic", "log"), default="arithmetic")
    data.add_argument("--period-per-year", type=int, default=252)
    data.add_argument("--nonlinearity", choices=("logcosh", "cube"), default="logcosh")
    data.add_argument("--min-obs", type=int, default=30)
    data.add_argument("--hurdle", type=float, default=0.0, help="per-period funding rate for long positions")
    data.add_argument("--short-rate", type=float, default=None, help="per-period rate for short positions")
    data.add_argument("--format", choices=("json", "csv"), default="json",
                      help="csv adds CSV mirrors next to the JSON report")

    weights = _Parser(add_help=False)
    weights.add_argument("--p", action="append", type=_order, help="penalty order, repeatable; 'inf' allowed")
    weights.add_argument("--form", choices=("abs", "signed"), default="abs")
    weights.add_argument("--normalize", choices=("sumsq", "sum"), default="sumsq")
    weights.add_argument("--exact", action="store_true", help="also solve the full objective numerically")
    weights.add_argument("--restarts", type=int, default=16)

    sub.add_parser("decompose", parents=[common, data], help="ICA decomposition report")
    sub.add_parser("weights", parents=[common, data, weights], help="component and asset weights per p")
    bt = sub.add_parser("backtest", parents=[common, data, weights], help="bucketed statistics and correlations")
    bt.add_argument("--walk-forward", action="store_true",
                    help="fit on the first half of each bucket, evaluate on the second")
    bt.add_argument("--plot-data", action="store_true", help="write weight-vs-return curves")
    bt.add_argument("--series", action="store_true", help="write per-portfolio return and weight files")

    sy = sub.add_parser("synth", parents=[common], help="synthetic price panel with ground truth")
    sy.add_argument("--sources", default="laplace,uniform,student_t:5,bimodal",
                    help="comma list of gaussian, laplace, uniform, student_t:NU, bimodal; NAME*COUNT repeats")
    sy.add_argument("--T", type=int, default=2520, help="number of return periods")
    sy.add_argument("--N", type=int, default=None, help="number of assets (default: number of sources)")
    sy.add_argument("--vol", type=float, default=0.01)
    sy.add_argument("--drift", type=float, default=0.05, help="scale of per-source drifts, in source units")
    sy.add_argument("--noise", type=float, default=0.0, help="idiosyncratic noise, in source units")
    sy.add_argument("--start", default="2007-01-01")
    sy.add_argument("--end", default=None, help="last business day; overrides --T")
    sy.add_argument("--p", action="append", type=_order, help="downstream penalty orders to check moments for")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    get = lambda name, default=None: getattr(args, name, default)
    p_list = tuple(args.p) if get("p") and args.command != "synth" else DEFAULT_P
    synth = {}
    if args.command == "synth":
        synth = {"sources": args.sources, "T": args.T, "N": args.N, "vol": args.vol, "drift": args.drift,
                 "noise": args.noise, "start": args.start, "end": args.end,
                 "check_orders": [format_order(p) for p in (args.p or [])]}
    return RunConfig(
        command=args.command,
        input=get("input"),
        buckets=get("buckets"),
        k=get("k", 10),
        p_list=p_list,
        form=FORMS[get("form", "abs")],
        normalization=NORMS[get("normalize", "sumsq")],
        hurdle=get("hurdle", 0.0),
        short_rate=get("short_rate"),
        seed=args.seed,
        exact=bool(get("exact", False)),
        threads=args.threads,
        out=args.out,
        format=get("format", "json"),
        kind=get("kind", "arithmetic"),
        period_per_year=get("period_per_year", 252),
        nonlinearity=get("nonlinearity", "logcosh"),
        min_obs=get("min_obs", 30),
        restarts=get("restarts", 16),
        walk_forward=bool(get("walk_forward", False)),
        plot_data=bool(get("plot_data", False)),
        series=bool(get("series", False)),
        synth=synth,
    )


def _load(cfg: RunConfig):
    table = load_price_table(cfg.input)
    if cfg.buckets:
        buckets, membership = parse_bucket_arg(cfg.buckets, table)
    else:
        buckets, membership = [BucketSpec(table.dates[0], table.dates[-1], "all")], None
    return table, buckets, membership


def _prepared(cfg: RunConfig):
    from .marketdata import slice_buckets

    table, buckets, membership = _load(cfg)
    bcfg = cfg.backtest_config()
    tables = slice_buckets(table, buckets, membership, min_obs=cfg.min_obs)
    return [(b, prepare_bucket(t, b, bcfg)) for t, b in zip(tables, buckets)], bcfg


def cmd_decompose(cfg: RunConfig) -> int:
    out = []
    for bucket, prep in _prepared(cfg)[0]:
        dec = prep.decomposition
        kurt = [kurtosis(dec.components[:, j]) for j in range(dec.k)]
        out.append({
            "bucket": bucket.to_dict(),
            "warnings": list(prep.table.warnings),
            "funding_rates": prep.rates,
            "components": [
                {"index": j, "mean": dec.means[j], "kurtosis_raw": kurt[j][0], "kurtosis_excess": kurt[j][1],
                 "nongaussianity": dec.scores[j], "sign": dec.signs[j], "viable": dec.viable[j]}
                for j in range(dec.k)
            ],
            "decomposition": dec.to_dict(),
        })
    write_json(Path(cfg.out) / "decomposition.json", {"config": cfg.to_dict(), "buckets": out})
    if cfg.format == "csv":
        keys = ["index", "mean", "kurtosis_raw", "kurtosis_excess", "nongaussianity", "sign", "viable"]
        for doc in out:
            write_csv(Path(cfg.out) / f"components_{_tag(doc['bucket']['label'])}.csv", keys,
                      [[c[k] for k in keys] for c in doc["components"]])
    return EXIT_OK


def _weights_for_bucket(cfg: RunConfig, bucket, prep, bcfg) -> tuple[dict, bool]:
    dec = prep.decomposition
    columns, any_empty = [], False
    for p in cfg.p_list:
        raw = component_weights(dec, prep.rates, p, dataclasses.replace(bcfg, exact=False))
        col = {"p": format_order(p), "raw_component": raw.weights, "hurdle_excess": raw.hurdle_excess,
               "raw_asset": to_asset_weights(raw, dec)}
        try:
            used = normalize(raw, cfg.normalization)
            col.update(empty=False, component=used.weights, asset=to_asset_weights(used, dec))
        except EmptyPortfolioError:
            any_empty = True
            col.update(empty=True, component=np.zeros(dec.k), asset=np.zeros(len(dec.symbols) or dec.unmixing.shape[1]))
        if cfg.exact and math.isfinite(p) and not col["empty"]:
            spec = ObjectiveSpec.from_decomposition(dec, prep.rates, PenaltySpec(p, form=cfg.form))
            w = exact_weights(spec, restarts=cfg.restarts, seed=cfg.seed)
            exact_norm = normalize(dataclasses.replace(raw, weights=w), cfg.normalization)
            col.update(
                exact_raw_component=w,
                exact_component=exact_norm.weights,
                exact_asset=to_asset_weights(exact_norm, dec),
                gap=np.abs(exact_norm.weights - col["component"]),
            )
        columns.append(col)
    doc = {"bucket": bucket.to_dict(), "symbols": list(prep.table.symbols), "signs": dec.signs,
           "viable": dec.viable, "empty_portfolio": any_empty, "columns": columns}
    return doc, any_empty


def cmd_weights(cfg: RunConfig) -> int:
    prepared, bcfg = _prepared(cfg)
    docs, flagged = [], False
    for bucket, prep in prepared:
        doc, empty = _weights_for_bucket(cfg, bucket, prep, bcfg)
        docs.append(doc)
        if empty:
            flagged = True
            print(f"notice: bucket {bucket.label!r}: no component clears its hurdle for some p; "
                  "those weight columns are zero and flagged empty", file=sys.stderr)
    out = Path(cfg.out)
    write_json(out / "weights.json", {"config": cfg.to_dict(), "empty_portfolio": flagged, "buckets": docs})
    if cfg.format == "csv":
        for doc in docs:
            tag = _tag(doc["bucket"]["label"])
            cols = doc["columns"]
            header = ["component"]
            for c in cols:
                header += [f"p={c['p']}", f"raw p={c['p']}"]
                if "exact_component" in c:
                    header += [f"exact p={c['p']}", f"gap p={c['p']}"]
            rows = []
            for j in range(len(doc["signs"])):
                row = [j]
                for c in cols:
                    row += [c["component"][j], c["raw_component"][j]]
                    if "exact_component" in c:
                        row += [c["exact_component"][j], c["gap"][j]]
                rows.append(row)
            write_csv(out / f"component_weights_{tag}.csv", header, rows)
            write_csv(out / f"asset_weights_{tag}.csv", ["symbol"] + [f"p={c['p']}" for c in cols],
                      [[s] + [c["asset"][i] for c in cols] for i, s in enumerate(doc["symbols"])])
    return EXIT_OK


def cmd_backtest(cfg: RunConfig) -> int:
    table, buckets, membership = _load(cfg)
    results = run_backtest(table, buckets, cfg.p_list, cfg.backtest_config(), membership, threads=cfg.threads)
    out = Path(cfg.out)
    write_json(out / "backtest.json", backtest_document(results, cfg.to_dict()))
    if cfg.format == "csv" or cfg.series:
        write_backtest_csv(out, results, series=cfg.series)
    if cfg.plot_data:
        write_plot_data(out / "plot_data", cfg.p_list)
    for r in results:
        if any(s.empty for s in r.series):
            print(f"notice: bucket {r.bucket.label!r}: empty portfolio for some p (zeroed statistics)", file=sys.stderr)
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    s = cfg.synth
    sc = SynthConfig(s["sources"], n_periods=s["T"], n_assets=s["N"], vol=s["vol"], drift_scale=s["drift"],
                     noise=s["noise"], seed=cfg.seed, start=s["start"], end=s["end"])
    result = generate(sc, warn_orders=[parse_order(p) for p in s["check_orders"]])
    for msg in result.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_price_table(result.table, out / "prices.csv")
    truth = result.truth()
    truth["run_config"] = cfg.to_dict()
    write_json(out / "truth.json", truth)
    return EXIT_OK


def _tag(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)


COMMANDS = {"decompose": cmd_decompose, "weights": cmd_weights, "backtest": cmd_backtest, "synth": cmd_synth}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.command](cfg)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

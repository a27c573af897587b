"""Command-line interface.

Subcommands:
  synth       generate a synthetic panel + daily prices (+ feature metadata)
  mdd         compute forward maximum-drawdown targets from a price CSV
  run         execute a configured experiment end to end
  importance  recompute permutation importance for a saved model
  report      render plot-ready CSVs from a finished run

Output columns: per_date.csv holds model,date,mae,ccc,n (one row per model and
test month); quantiles.csv holds model,window,group,n,mean,std,p10..p90;
importance.json holds per-model entries {feature,score,stderr,sign,rank};
metrics.json holds per-model overall and size-quartile mae/ccc.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import pandas as pd

from .drawdown import forward_mdd_panel, load_prices_csv, save_targets_csv
from .evaluate import permutation_importance
from .experiment import (
    ConfigError,
    StageError,
    derived_seed,
    load_config,
    load_model,
    prepare_matrices,
    run_experiment,
)
from .panel import MonthStamp
from .synthetic import SyntheticSpec, generate_world, write_world


def _cmd_synth(args) -> int:
    spec_kw = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            spec_kw = json.load(fh).get("synth", {})
    for name in ("n_securities", "n_months", "n_features", "seed"):
        value = getattr(args, name)
        if value is not None:
            spec_kw[name] = value
    if args.noise_level is not None:
        spec_kw["noise_level"] = args.noise_level
    if args.missing_fraction is not None:
        spec_kw["missing_fraction"] = args.missing_fraction
    if "linear_coefficients" not in spec_kw and "n_features" in spec_kw:
        coef = [0.0] * spec_kw["n_features"]
        for k, v in zip(range(spec_kw["n_features"]), (-0.6, 0.8, 0.35)):
            coef[k] = v
        spec_kw["linear_coefficients"] = tuple(coef)
    if "interactions" in spec_kw:
        spec_kw["interactions"] = tuple(tuple(t) for t in spec_kw["interactions"])
    if "linear_coefficients" in spec_kw:
        spec_kw["linear_coefficients"] = tuple(spec_kw["linear_coefficients"])
    spec = SyntheticSpec(**spec_kw)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = generate_world(spec)
    write_world(world, out / "panel.csv", out / "prices.csv", out / "features.json")
    print(f"wrote {out / 'panel.csv'}, {out / 'prices.csv'}, {out / 'features.json'}")
    return 0


def _cmd_mdd(args) -> int:
    prices = load_prices_csv(args.prices)
    months = sorted(
        {MonthStamp.from_date(t) for ps in prices.values() for t in ps.timestamps}
    )
    targets = forward_mdd_panel(prices, months, args.horizon)
    save_targets_csv(targets, args.output)
    print(f"wrote {len(targets)} targets to {args.output}")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    if args.case is not None:
        cfg.case = args.case
    if args.models is not None:
        cfg.models = tuple(args.models.split(","))
    cfg.__post_init__()  # re-validate after overrides
    if args.dry_run:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return 0
    result = run_experiment(cfg)
    print(f"run complete: {result.output_dir}")
    return 0


def _cmd_importance(args) -> int:
    run_dir = Path(args.run_dir)
    cfg = load_config(run_dir / "config-resolved.json")
    model, key = load_model(run_dir / "models" / f"{args.model}.json")
    data = prepare_matrices(cfg)
    test = data["parts"]["test"]
    months = [m for _, m in test.index]
    entries = permutation_importance(
        model, test.X, test.y, months,
        feature_names=data["feature_names"],
        metric=args.metric,
        repeats=args.repeats,
        seed=derived_seed(cfg.seed if args.seed is None else args.seed, "importance", key),
        groups=data["blocks"],
    )
    doc = [
        {"feature": e.feature, "score": e.score, "stderr": e.stderr, "sign": e.sign, "rank": e.rank}
        for e in entries
    ]
    out = run_dir / f"importance-{args.model}-{args.metric}.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out}")
    return 0


def _cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    report_dir = run_dir / "report"
    report_dir.mkdir(exist_ok=True)
    per_date = pd.read_csv(run_dir / "per_date.csv")
    for metric in ("mae", "ccc"):
        wide = per_date.pivot(index="date", columns="model", values=metric).sort_index()
        wide.to_csv(report_dir / f"timeseries_{metric}.csv")
    quantiles_path = run_dir / "quantiles.csv"
    if quantiles_path.exists() and quantiles_path.stat().st_size > 1:
        q = pd.read_csv(quantiles_path)
        if not q.empty:
            q.to_csv(report_dir / "quantile_summary.csv", index=False)
    with open(run_dir / "importance.json", "r", encoding="utf-8") as fh:
        imp = json.load(fh)
    bars = [
        {"model": model, **entry}
        for model, entries in sorted(imp.items())
        for entry in entries
    ]
    pd.DataFrame(bars).to_csv(report_dir / "importance_bars.csv", index=False)
    print(f"wrote report CSVs to {report_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drawdown-lab",
        description="Cross-sectional forward maximum-drawdown forecasting toolkit",
        epilog=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic panel and price CSVs")
    p.add_argument("--config", help="JSON config whose [synth] section seeds the generator")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--n-securities", type=int, dest="n_securities")
    p.add_argument("--n-months", type=int, dest="n_months")
    p.add_argument("--n-features", type=int, dest="n_features")
    p.add_argument("--noise-level", type=float, dest="noise_level")
    p.add_argument("--missing-fraction", type=float, dest="missing_fraction")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("mdd", help="compute forward maximum-drawdown targets")
    p.add_argument("--prices", required=True, help="price CSV: security_id,date,price")
    p.add_argument("--horizon", type=int, default=12)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_mdd)

    p = sub.add_parser("run", help="run a configured experiment")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--output-dir", help="override config output_dir")
    p.add_argument("--case", help="override feature-set case")
    p.add_argument("--models", help="comma-separated model subset override")
    p.add_argument("--dry-run", action="store_true", help="print resolved config and exit")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("importance", help="recompute importance for a saved model")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--metric", choices=("mae", "ccc"), default="mae")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_importance)

    p = sub.add_parser("report", help="render plot-ready CSVs from a run directory")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as e:
        print(f"error in stage {e.stage!r}: {e.cause}", file=sys.stderr)
        return 1
    except (ConfigError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``qfprice <subcommand>``.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 schema error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment as ex
from . import qamc, training
from .ansatz import AnsatzSpec, spectrum_size
from .fourier import eval_series, payoff_coeffs_cdf, payoff_coeffs_pdf, price_cdf, price_pdf
from .market import (analytic_put_price, exact_cdf_coeffs, exact_density_coeffs,
                     truncation_interval)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SCHEMA = 0, 2, 3, 4

log = logging.getLogger("qfprice")


def load_plan(config_path, overrides) -> ex.ExperimentPlan:
    values = {}
    if config_path is not None:
        try:
            text = Path(config_path).read_text()
        except OSError as exc:
            raise ex.ConfigError(f"cannot read config {config_path}: {exc.strerror}") from None
        values = ex.parse_config(text, source=str(config_path))
    values.update(ex.parse_overrides(overrides))
    return ex.ExperimentPlan.from_values(values)


def exact_prices(market, n_terms: int = 64, truncation_width: float = 10.0) -> dict:
    """Closed-form put price next to the two Fourier-oracle prices."""
    interval = truncation_interval(market, truncation_width)
    dens = exact_density_coeffs(market, interval, n_terms)
    by_pdf = price_pdf(dens, payoff_coeffs_pdf(market, interval, n_terms), market)
    window = interval.extended()
    cdf_series = exact_cdf_coeffs(market, window, n_terms, interval)
    by_cdf = price_cdf(cdf_series, payoff_coeffs_cdf(market, interval, window, n_terms), market,
                       eval_series(cdf_series, interval.a), eval_series(cdf_series, interval.b))
    return {"analytic": analytic_put_price(market), "pdf": by_pdf, "cdf": by_cdf}


def cmd_price_exact(args) -> int:
    plan = load_plan(args.config, args.set)
    print(f"{'strike':>8} {'analytic':>20} {'fourier_pdf':>20} {'fourier_cdf':>20} {'rel_dev_pdf':>12} {'rel_dev_cdf':>12}")
    for strike in plan.strikes:
        p = exact_prices(plan.market_for(strike), plan.exact_terms)
        ref = p["analytic"]
        print(f"{strike:8g} {ref:20.15f} {p['pdf']:20.15f} {p['cdf']:20.15f} "
              f"{abs(p['pdf'] - ref) / ref:12.3e} {abs(p['cdf'] - ref) / ref:12.3e}")
    return EXIT_OK


def cmd_run(args) -> int:
    plan = load_plan(args.config, args.set)
    out = Path(args.out)
    if not out.parent.exists():
        print(f"error: output directory {out.parent} does not exist", file=sys.stderr)
        return EXIT_IO
    rows, timings = ex.run_plan(plan)
    try:
        ex.write_csv(rows, out)
        if plan.record_wall_time:
            ex.write_timings(timings, ex.timing_path(out))
    except OSError as exc:
        print(f"error: cannot write {out}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    failed = sum(1 for r in rows if r.row_type == "data" and r.status != "ok")
    print(f"wrote {len(rows)} rows to {out}" + (f" ({failed} failed cells)" if failed else ""))
    return EXIT_OK


def cmd_plotdata(args) -> int:
    try:
        rows = ex.read_csv(args.csv)
    except OSError as exc:
        print(f"error: cannot read {args.csv}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    if not rows:
        log.warning("%s has no result rows; nothing written", args.csv)
        return EXIT_OK
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.csv).with_suffix("")
    try:
        written = ex.write_plotdata(rows, out_dir)
    except OSError as exc:
        print(f"error: cannot write to {out_dir}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    for path in written:
        print(path)
    return EXIT_OK


def _single_cell(plan: ex.ExperimentPlan):
    if len(plan.strikes) != 1 or len(plan.dims) != 1:
        raise ex.ConfigError("debug subcommands need exactly one strike and one dim")
    return plan.market_for(plan.strikes[0]), AnsatzSpec(*plan.dims[0])


def cmd_train(args) -> int:
    plan = load_plan(args.config, args.set)
    if plan.method not in ("I", "II"):
        raise ex.ConfigError(f"train needs method I or II, got {plan.method}")
    market, spec = _single_cell(plan)
    cfg = training.TrainingConfig.for_method(plan.method, n_train=plan.data_sizes[0], seed=plan.seed_base,
                                             **plan.training)
    trained = training.train(plan.method, market, spec, cfg)
    price = training.price_with_model(plan.method, trained, market).price
    oracle = analytic_put_price(market)
    if args.out:
        try:
            Path(args.out).write_text(trained.to_text())
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
            return EXIT_IO
    print(f"final_loss = {trained.loss_history[-1] if trained.loss_history.size else float('nan'):.6e}")
    print(f"test_error = {trained.test_error:.6e}")
    print(f"price = {price:.12f}  analytic = {oracle:.12f}  rel_error = {abs(price - oracle) / oracle:.3e}")
    return EXIT_OK


def cmd_qamc(args) -> int:
    plan = load_plan(args.config, args.set)
    market, spec = _single_cell(plan)
    n_terms = spectrum_size(spec)
    if not 0 <= args.k <= n_terms or (args.kind == "sin" and args.k == 0):
        raise ex.ConfigError(f"coefficient {args.kind}{args.k} outside 0..{n_terms}")
    interval = truncation_interval(market, plan.qae_truncation_width)
    targets = qamc.discretized_coeffs(market, interval, n_terms, plan.qae_points)
    target = next(t for t in targets if t.k == args.k and t.kind == args.kind)
    cfg = qamc.QaeConfig(epsilon=plan.epsilons[0], **plan.qae)
    res = qamc.mrqae_estimate(target, cfg, plan.seed_base)
    print(qamc.ShotRecord(target.k, target.kind, res.estimate, target.true_value,
                          res.total_shots, res.rounds, res.converged).to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qfprice", description="Fourier-series option pricing experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="key = value config file (see README for the schema)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        return p

    with_config(sub.add_parser("price-exact", help="closed-form vs Fourier-oracle prices")).set_defaults(
        func=cmd_price_exact)
    p = with_config(sub.add_parser("run", help="run a sweep and write the results CSV"))
    p.add_argument("--out", required=True, help="results CSV path")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("plotdata", help="median/IQR series files from a results CSV")
    p.add_argument("csv")
    p.add_argument("--out-dir", help="directory for .dat files (default: CSV path without suffix)")
    p.set_defaults(func=cmd_plotdata)
    p = with_config(sub.add_parser("train", help="train one model and price with it"))
    p.add_argument("--out", help="write the trained-model record here")
    p.set_defaults(func=cmd_train)
    p = with_config(sub.add_parser("qamc", help="estimate one density coefficient"))
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--kind", choices=("cos", "sin"), default="cos")
    p.set_defaults(func=cmd_qamc)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ex.SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: analyze (IG curve + k selection), train
(multi-seed experiment), verify (built-in oracle checks).

Exit codes: 0 success, 1 check/experiment failure, 2 usage/config error.
Flag precedence: command line > JSON config file > built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from kograph.data import Dataset, LoadError, ValidationError, load_tu_dataset
from kograph.kinfo import (FitError, fit_exponential, ig_curve, local_entropy,
                           select_k, write_fit_csv, write_fit_json, write_ig_csv)
from kograph.train import TrainConfig, run_experiment

USAGE_ERROR = 2
CHECK_ERROR = 1


def _default_out(dataset: str) -> str:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return os.path.join("runs", dataset or "run", stamp)


def _load(args) -> Dataset:
    return load_tu_dataset(args.data_root, args.dataset)


def cmd_analyze(args) -> int:
    ds = _load(args)
    out = args.out or _default_out(args.dataset)
    os.makedirs(out, exist_ok=True)
    table = local_entropy(ds, args.kmax, seed=0)
    curve = ig_curve(table)
    write_ig_csv(curve, os.path.join(out, "ig_curve.csv"))
    try:
        fit = fit_exponential(curve, (2, args.kmax))
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return CHECK_ERROR
    sel = select_k(fit, args.epsilon)
    write_fit_json(os.path.join(out, "fit.json"), ds.name, fit, sel, args.epsilon)
    write_fit_csv(os.path.join(out, "fit.csv"), ds.name, fit, sel, args.epsilon)
    print(f"dataset={ds.name} a={fit.a:.4f} b={fit.b:.4f} r2={fit.r2:.4f} "
          f"mse={fit.mse:.6f}")
    print(f"k_hat={sel.k_hat} achieved_loss={sel.loss:.4f} "
          f"(epsilon={args.epsilon})")
    return 0


def _config_from_args(args) -> TrainConfig:
    fields = ["dataset", "conv", "k", "layers", "hidden", "batch_size", "lr",
              "rho_v", "rho_e", "nf", "pn", "pe", "max_epochs", "patience",
              "seeds"]
    values: dict = {}
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(fields)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_cfg)
    cli_map = {
        "dataset": args.dataset, "conv": args.conv, "k": args.k,
        "layers": args.layers, "hidden": args.hidden,
        "batch_size": args.batch_size, "lr": args.lr,
        "rho_v": args.rho_v, "rho_e": args.rho_e,
        "max_epochs": args.max_epochs, "patience": args.patience,
        "seeds": args.seeds,
    }
    for key, val in cli_map.items():
        if val is not None:
            values[key] = val
    if args.no_nf:
        values["nf"] = False
    if args.no_pool:
        values["pn"] = False
        values["pe"] = False
    if args.no_edge_pool:
        values["pe"] = False
    return TrainConfig(**values)


def cmd_train(args) -> int:
    try:
        cfg = _config_from_args(args)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    if not cfg.dataset:
        print("config error: --dataset is required", file=sys.stderr)
        return USAGE_ERROR
    t0 = time.perf_counter()
    ds = load_tu_dataset(args.data_root, cfg.dataset)
    load_seconds = time.perf_counter() - t0
    report = run_experiment(cfg, ds)
    report.load_seconds = load_seconds
    out = args.out or _default_out(cfg.dataset)
    os.makedirs(out, exist_ok=True)
    report.to_json(os.path.join(out, "report.json"))
    report.to_csv(os.path.join(out, "report.csv"))
    print(f"dataset={report.dataset} conv={cfg.conv} k={cfg.k} "
          f"mean={report.mean:.4f} std={report.std:.4f} params={report.params}")
    if report.failed_seeds:
        print(f"failed seeds (NaN): {report.failed_seeds}", file=sys.stderr)
        return CHECK_ERROR
    return 0


def cmd_verify(args) -> int:
    from kograph.verify import run_all_checks
    failures = run_all_checks(verbose=True)
    if failures:
        print(f"FAILED checks: {', '.join(failures)}", file=sys.stderr)
        return CHECK_ERROR
    print("all checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kograph",
        description="Light k-order graph convolution/pooling with "
                    "information-gain driven selection of k",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--dataset", help="dataset name (TU directory name)")
        p.add_argument("--data-root", default="data",
                       help="directory containing TU dataset folders")
        p.add_argument("--out", help="output directory "
                                     "(default runs/<dataset>/<timestamp>)")

    pa = sub.add_parser("analyze", help="compute the IG curve and select k")
    common(pa)
    pa.add_argument("--kmax", type=int, default=10)
    pa.add_argument("--epsilon", type=float, default=0.05)
    pa.set_defaults(func=cmd_analyze)

    pt = sub.add_parser("train", help="run the multi-seed experiment")
    common(pt)
    pt.add_argument("--config", help="JSON config file with TrainConfig fields")
    pt.add_argument("--conv", choices=["licheb", "limixhop"])
    pt.add_argument("--k", type=int)
    pt.add_argument("--layers", type=int)
    pt.add_argument("--hidden", type=int)
    pt.add_argument("--batch-size", type=int, dest="batch_size")
    pt.add_argument("--lr", type=float)
    pt.add_argument("--rho-v", type=float, dest="rho_v")
    pt.add_argument("--rho-e", type=float, dest="rho_e")
    pt.add_argument("--no-nf", action="store_true")
    pt.add_argument("--no-pool", action="store_true")
    pt.add_argument("--no-edge-pool", action="store_true")
    pt.add_argument("--seeds", type=int, nargs="+")
    pt.add_argument("--max-epochs", type=int, dest="max_epochs")
    pt.add_argument("--patience", type=int)
    pt.set_defaults(func=cmd_train)

    pv = sub.add_parser("verify", help="run built-in oracle checks")
    pv.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LoadError, ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CHECK_ERROR
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())

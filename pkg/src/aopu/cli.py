"""Command-line interface: train, repeat, rr-survey, ablate, synth, verify."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import data, harness, verify
from .checkpoint import save_checkpoint


def _add_shared_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", default="synth",
                   help="CSV path, or 'synth' for generated data")
    p.add_argument("--schema", default=None,
                   help="known dataset schema: debutanizer | sru "
                        "(default: generic last-column target)")
    p.add_argument("--target-col", type=int, default=None,
                   help="absolute index of the target column")
    p.add_argument("--bs", type=int, default=64)
    p.add_argument("--seq", type=int, default=48)
    p.add_argument("--hidden", type=int, default=2048)
    p.add_argument("--activation", default="tanh")
    p.add_argument("--layer-norm", action="store_true")
    p.add_argument("--lr", type=float, default=None,
                   help="default: 1.0 for aopu, 0.005 for rvflnn")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--strategy", choices=("best", "final"), default="final")
    p.add_argument("--model", choices=("aopu", "rvflnn"), default="aopu")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--no-standardize", action="store_true")
    # synthetic-data knobs (used when --dataset synth)
    p.add_argument("--synth-n", type=int, default=4000)
    p.add_argument("--synth-vars", type=int, default=5)
    p.add_argument("--synth-noise", type=float, default=0.3)
    p.add_argument("--synth-nonlinear", action="store_true")
    p.add_argument("--synth-seed", type=int, default=0)


def _load_dataset(args) -> data.Dataset:
    if args.dataset == "synth":
        return data.synth_generate(
            n=args.synth_n,
            n_vars=args.synth_vars,
            noise=args.synth_noise,
            nonlinear=args.synth_nonlinear,
            seed=args.synth_seed,
        )
    return data.load_csv(args.dataset, schema=args.schema, target_col=args.target_col)


def _config_from(args, seed: int) -> harness.TrainConfig:
    return harness.TrainConfig(
        dataset=args.dataset,
        model=args.model,
        bs=args.bs,
        seq=args.seq,
        hidden=args.hidden,
        activation=args.activation,
        layer_norm=args.layer_norm,
        lr=args.lr,
        epochs=args.epochs,
        strategy=args.strategy,
        seed=seed,
        target_col=args.target_col,
        standardize=not args.no_standardize,
    )


def _finish(out_dir, config_echo, written, t0, extra=None) -> None:
    manifest = os.path.join(out_dir, "manifest.json")
    harness.write_manifest(
        manifest, config_echo, written, time.perf_counter() - t0, extra=extra
    )
    for path in written + [manifest]:
        print(f"wrote {path}")


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    os.makedirs(args.out_dir, exist_ok=True)
    ds = _load_dataset(args)
    config = _config_from(args, args.seed)
    report = harness.train_run(ds, config)

    metrics_path = os.path.join(args.out_dir, "metrics.csv")
    curve_path = os.path.join(args.out_dir, "curve.csv")
    ckpt_path = os.path.join(args.out_dir, "checkpoint.json")
    harness.write_run_metrics_csv(metrics_path, [report])
    harness.write_curve_csv(curve_path, [report])
    save_checkpoint(
        ckpt_path, config.model, report.selected_weights, asdict(config)
    )
    print(
        f"{config.model} test: mse={report.mse:.6g} mape={report.mape:.4g} "
        f"r2={report.r2:.4f} (mean train RR {report.mean_train_rr:.3f}"
        f"{', LOW-RR WARNING' if report.low_rr_warning else ''}"
        f"{', DIVERGED' if report.diverged else ''})"
    )
    _finish(args.out_dir, asdict(config), [metrics_path, curve_path, ckpt_path], t0,
            extra={"report": report.to_dict()})
    return 0


def cmd_repeat(args) -> int:
    t0 = time.perf_counter()
    os.makedirs(args.out_dir, exist_ok=True)
    ds = _load_dataset(args)
    config = _config_from(args, args.seeds[0])
    rep = harness.repeat_experiments(ds, config, args.seeds)

    metrics_path = os.path.join(args.out_dir, "metrics.csv")
    curve_path = os.path.join(args.out_dir, "curve.csv")
    harness.write_run_metrics_csv(metrics_path, rep.runs)
    harness.write_curve_csv(curve_path, rep.runs)
    for name in ("mse", "mape", "r2"):
        print(f"{name}: {rep.cell(name)}")
    if rep.diverged_seeds:
        print(f"diverged seeds: {rep.diverged_seeds}")
    _finish(args.out_dir, asdict(config), [metrics_path, curve_path], t0,
            extra={"seeds": args.seeds,
                   "aggregate": {"mean": rep.mean, "std": rep.std},
                   "diverged_seeds": rep.diverged_seeds})
    return 0


def cmd_rr_survey(args) -> int:
    t0 = time.perf_counter()
    os.makedirs(args.out_dir, exist_ok=True)
    ds = _load_dataset(args)
    summaries = harness.rr_survey(
        ds,
        bs_grid=args.bs_grid,
        seq_grid=args.seq_grid,
        hidden=args.hidden,
        activation=args.activation,
        layer_norm=args.layer_norm,
        seed=args.seed,
        standardize_data=not args.no_standardize,
        target_col=args.target_col,
    )
    hist_path = os.path.join(args.out_dir, "rr_hist.csv")
    summary_path = os.path.join(args.out_dir, "rr_summary.csv")
    harness.write_rr_hist_csv(hist_path, summaries)
    harness.write_rr_summary_csv(summary_path, summaries)
    for s in summaries:
        print(f"bs={s.bs:4d} seq={s.seq:3d} mean RR={s.mean:.4f} (n={s.count})")
    _finish(args.out_dir, {"bs_grid": args.bs_grid, "seq_grid": args.seq_grid,
                           "hidden": args.hidden, "activation": args.activation,
                           "layer_norm": args.layer_norm, "dataset": args.dataset},
            [hist_path, summary_path], t0)
    return 0


def cmd_ablate(args) -> int:
    t0 = time.perf_counter()
    os.makedirs(args.out_dir, exist_ok=True)
    ds = _load_dataset(args)
    config = _config_from(args, args.seeds[0])
    rows = harness.ablate(
        ds, args.activations, args.norm_flags, config, args.seeds
    )
    path = os.path.join(args.out_dir, "ablation.csv")
    harness.write_ablation_csv(path, rows)
    for row in rows:
        print(
            f"acti={row.activation:<11s} norm={int(row.layer_norm)} "
            f"r2={row.report.cell('r2')}"
        )
    _finish(args.out_dir, asdict(config), [path], t0,
            extra={"activations": args.activations, "norm_flags": args.norm_flags,
                   "seeds": args.seeds})
    return 0


def cmd_synth(args) -> int:
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    ds = data.synth_generate(
        n=args.synth_n,
        n_vars=args.synth_vars,
        noise=args.synth_noise,
        nonlinear=args.synth_nonlinear,
        seed=args.synth_seed,
    )
    header = ",".join(ds.columns)
    np.savetxt(args.out, ds.values, delimiter=",", header=header, comments="",
               fmt="%.17g")
    print(f"wrote {args.out} ({ds.n_rows} rows, {len(ds.columns)} columns)")
    return 0


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    results = verify.run_default_suite(seed=args.seed, fim_samples=args.fim_samples)
    failures = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name} (error={res.error:.3e})")
        failures += 0 if res.passed else 1
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        path = os.path.join(args.out_dir, "verify.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "results": [r.to_dict() for r in results],
                    "wall_time_s": time.perf_counter() - t0,
                },
                fh,
                indent=1,
                sort_keys=True,
            )
            fh.write("\n")
        print(f"wrote {path}")
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aopu",
        description="Approximated orthogonal projection regression unit: "
                    "training, rank-ratio diagnostics and verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and report test metrics")
    _add_shared_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("repeat", help="repeat a config over several seeds")
    _add_shared_flags(p)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.set_defaults(fn=cmd_repeat)

    p = sub.add_parser("rr-survey", help="rank-ratio distributions over a grid")
    _add_shared_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bs-grid", type=int, nargs="+", default=[64, 128, 288])
    p.add_argument("--seq-grid", type=int, nargs="+", default=[16, 24, 32, 40, 48])
    p.set_defaults(fn=cmd_rr_survey)

    p = sub.add_parser("ablate", help="activation x normalization sweep")
    _add_shared_flags(p)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--activations", nargs="+", default=["tanh", "relu"])
    p.add_argument("--norm-flags", type=int, nargs="+", default=[0, 1])
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("synth", help="write a synthetic dataset CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--synth-n", type=int, default=4000)
    p.add_argument("--synth-vars", type=int, default=5)
    p.add_argument("--synth-noise", type=float, default=0.3)
    p.add_argument("--synth-nonlinear", action="store_true")
    p.add_argument("--synth-seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("verify", help="run the numerical verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fim-samples", type=int, default=100_000)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(fn=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

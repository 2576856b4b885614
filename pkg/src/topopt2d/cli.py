"""Command-line interface.

Subcommands: gen-data, train, optimize, filter, compare, repro. Every
command takes --seed and reads an experiment config JSON (schema version 1,
see README). Exit codes: 0 success, 1 usage error, 2 bad input or contract
violation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cnn import TrainConfig, build_network_spec, load_model, save_model, train
from .cnn.adam import AdamConfig
from .dataset import GenConfig, generate_dataset, load_dataset
from .errors import InputError, NumericalError
from .fields import DensityField
from .io import (density_from_file, read_json, write_density_csv, write_json,
                 write_loss_history, write_pgm)
from .morphology import apply_filter_pipeline
from .pipelines import (ExperimentConfig, compare, config_from_dict,
                        format_report_table, run_appendix1, run_appendix2,
                        run_appendix3, run_cnn_to, run_simp_baseline)

OUTPUT_DIR_ENV = "TOPOPT2D_OUTPUT_DIR"


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits 1 on usage errors (argparse defaults to 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_config(path: str, seed: int | None) -> ExperimentConfig:
    cfg_path = Path(path)
    if not cfg_path.exists():
        raise InputError(f"config file not found: {path}")
    data = read_json(cfg_path)
    config = config_from_dict(data, base_dir=cfg_path.parent)
    if seed is not None:
        config = ExperimentConfig(
            problem=config.problem, oc=config.oc,
            filter_config=config.filter_config, model_path=config.model_path,
            seed=seed, snapshot_iters=config.snapshot_iters,
        )
    return config


def _out_dir(args) -> Path:
    override = os.environ.get(OUTPUT_DIR_ENV)
    out = Path(override) if override else Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_gen_data(args) -> int:
    config = _load_config(args.config, args.seed)
    data = read_json(Path(args.config)).get("dataset", {})
    gen = GenConfig(
        problem=config.problem,
        n_bars_range=tuple(data.get("n_bars_range", (2, 6))),
        width_range=tuple(data.get("width_range", (0.75, 1.75))),
        rng_seed=config.seed,
    )
    header = generate_dataset(gen, args.count, args.out)
    print(f"wrote {header['count']} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    header, densities, sensitivities = load_dataset(args.data)
    spec = build_network_spec(header["nely"], header["nelx"], args.multiplier)
    tconf = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed if args.seed is not None else 0,
        adam=AdamConfig(learning_rate=args.learning_rate),
        normalize_labels=not args.raw_labels,
    )
    params, history = train(spec, densities.astype(np.float64), sensitivities, tconf)
    save_model(args.out, spec, params)
    write_loss_history(str(args.out) + ".loss.csv", history)
    print(f"trained {tconf.epochs} epochs; first/final mean MSE "
          f"{history[0]:.6g} -> {history[-1]:.6g}; model at {args.out}")
    return 0


def _cmd_optimize(args) -> int:
    config = _load_config(args.config, args.seed)
    if args.model:
        config = ExperimentConfig(
            problem=config.problem, oc=config.oc,
            filter_config=config.filter_config, model_path=args.model,
            seed=config.seed, snapshot_iters=config.snapshot_iters,
        )
    out = _out_dir(args)
    if args.method == "simp":
        result = run_simp_baseline(config)
        result.trace.to_csv(out / "trace.csv")
        write_pgm(out / "density.pgm", result.binary)
        write_density_csv(out / "density.csv", result.binary)
        report = {
            "method": "simp",
            "seed": config.seed,
            "initial_compliance": result.trace.records[0].compliance,
            "final_prefilter_compliance": result.trace.records[-1].compliance,
            "postfilter_compliance": result.postfilter_compliance,
            "postfilter_volume": result.binary.volume(),
            "threshold": result.threshold,
            "iterations": result.trace.n_updates,
            "wall_time_s": result.wall_time_s,
        }
    else:
        if config.model_path is None:
            raise InputError("optimize --method cnn needs model_path (config) or --model")
        result = run_cnn_to(config)
        result.trace.to_csv(out / "trace.csv")
        write_pgm(out / "density.pgm", result.filtered)
        write_density_csv(out / "density.csv", result.filtered)
        result.filter_report.save_json(out / "filter_report.json")
        report = {
            "method": "cnn",
            "seed": config.seed,
            "initial_compliance": result.trace.records[0].compliance,
            "final_prefilter_compliance": result.trace.records[-1].compliance,
            "prefilter_binary_compliance": result.prefilter_compliance,
            "postfilter_compliance": result.postfilter_compliance,
            "postfilter_volume": result.filtered.volume(),
            "threshold": result.threshold,
            "iterations": result.trace.n_updates,
            "wall_time_s": result.wall_time_s,
        }
    write_json(out / "report.json", report)
    print(f"{args.method}: compliance {report['initial_compliance']:.6g} -> "
          f"{report['postfilter_compliance']:.6g} in {report['iterations']} updates")
    return 0


def _cmd_filter(args) -> int:
    config = _load_config(args.config, args.seed)
    field = DensityField(density_from_file(args.input).values, binary=True)
    filtered, report = apply_filter_pipeline(field, config.resolved_filter())
    out = _out_dir(args)
    write_pgm(out / "density_filtered.pgm", filtered)
    write_density_csv(out / "density_filtered.csv", filtered)
    report.save_json(out / "filter_report.json")
    print(f"filtered: volume {report.volume_before:g} -> {report.volume_after:g}")
    return 0


def _cmd_compare(args) -> int:
    config = _load_config(args.config, args.seed)
    report = compare(config, out_dir=_out_dir(args))
    print(format_report_table(report), end="")
    return 0


def _cmd_repro(args) -> int:
    config = _load_config(args.config, args.seed)
    out = _out_dir(args)
    if args.experiment == "appendix1":
        result = run_appendix1(config, out)
        for cell in result["cells"]:
            print(f"{cell['method']:>5s} + {cell['filter_family']:<13s} "
                  f"compliance {cell['compliance']:.6g}  volume {cell['volume']:g}")
        return 0
    if args.experiment == "appendix2":
        result = run_appendix2(config, out)
        print(f"cnn {result['cnn_postfilter_compliance']:.6g} -> "
              f"warm-start final {result['warm_start_final_compliance']:.6g}; "
              f"L-inf change {result['linf_change_vs_start']:.3g}")
        return 0
    result = run_appendix3(config, out)
    print("identical" if result["identical"] else "MISMATCH")
    if not result["identical"]:
        raise NumericalError("repeat runs disagree; pipeline is not deterministic")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="topopt2d", description=__doc__)
    parser.add_argument("--version", action="version", version=f"topopt2d {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a bar-system training dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train the sensitivity surrogate")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--multiplier", type=float, default=0.125)
    p.add_argument("--learning-rate", type=float, default=5e-5)
    p.add_argument("--raw-labels", action="store_true",
                   help="train on raw sensitivities instead of per-sample normalized")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("optimize", help="run one optimization pipeline")
    p.add_argument("--method", choices=("simp", "cnn"), required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--model", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("filter", help="post-filter a binary density file")
    p.add_argument("--input", required=True, help="binary density .csv or .pgm")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("compare", help="run both pipelines and report side by side")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("repro", help="reproduce an appendix experiment")
    p.add_argument("experiment", choices=("appendix1", "appendix2", "appendix3"))
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_repro)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

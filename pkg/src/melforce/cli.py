"""Command-line entry point.

Subcommands: gen-data, train, eval, compare-features, trim-sweep, serve,
run-control, plot-data.  Exit codes: 0 ok, 1 usage error, 2 data error,
3 numeric divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import checkpoint, control, experiments, plant, service, training
from .datasets import (
    SCENARIOS,
    DatasetGenerationError,
    generate_dataset,
    load_jsonl,
    save_jsonl,
)
from .estimator import ForceEstimator

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_config(path: str | None) -> tuple[plant.PlantConfig, control.ControllerGains]:
    cfg = plant.GRIND_SURFACE
    gains = control.ControllerGains()
    if path is None:
        return cfg, gains
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as err:
        raise DataError(f"cannot read config: {err}") from err
    except json.JSONDecodeError as err:
        raise DataError(f"config is not valid JSON: {err}") from err
    gain_doc = doc.pop("gains", {})
    cfg_fields = {f.name for f in dataclasses.fields(plant.PlantConfig)}
    unknown = set(doc) - cfg_fields
    if unknown:
        raise DataError(f"unknown plant config fields: {sorted(unknown)}")
    cfg = dataclasses.replace(cfg, **doc)
    gain_fields = {f.name for f in dataclasses.fields(control.ControllerGains)}
    unknown = set(gain_doc) - gain_fields
    if unknown:
        raise DataError(f"unknown gain fields: {sorted(unknown)}")
    gains = dataclasses.replace(gains, **gain_doc)
    return cfg, gains


def _check_overwrite(path: str, force: bool):
    if os.path.exists(path) and not force:
        raise DataError(f"{path} exists; pass --force to overwrite")


def _outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _load_dataset(path: str):
    try:
        return load_jsonl(path)
    except OSError as err:
        raise DataError(f"cannot read dataset: {err}") from err
    except (json.JSONDecodeError, DatasetGenerationError, KeyError) as err:
        raise DataError(f"bad dataset {path}: {err}") from err


def _load_checkpoint(path: str):
    try:
        return checkpoint.load(path)
    except OSError as err:
        raise DataError(f"cannot read checkpoint: {err}") from err
    except (json.JSONDecodeError, checkpoint.CheckpointError, KeyError) as err:
        raise DataError(f"bad checkpoint {path}: {err}") from err


def cmd_gen_data(args) -> int:
    cfg, gains = _load_config(args.config)
    scenarios = args.scenarios.split(",") if args.scenarios else list(SCENARIOS)
    for name in scenarios:
        if name not in SCENARIOS:
            raise UsageError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    out = _outdir(args.out)
    for name in scenarios:
        path = os.path.join(out, f"{name.lower()}_seed{args.seed}.jsonl")
        _check_overwrite(path, args.force)
        ds = generate_dataset(name, seed=args.seed, cfg=cfg, gains=gains)
        save_jsonl(ds, path)
        print(f"wrote {path} ({len(ds.records)} records)")
    return EXIT_OK


def cmd_train(args) -> int:
    ds = _load_dataset(args.data)
    _check_overwrite(args.out, args.force)
    try:
        trained = training.train_model(
            args.model,
            args.feature,
            ds.windows("train"),
            ds.labels("train"),
            epochs=args.epochs,
            seed=args.seed,
        )
    except ValueError as err:
        raise UsageError(str(err)) from err
    checkpoint.save(trained, args.out)
    print(
        f"wrote {args.out} (model={args.model} feature={args.feature} "
        f"input_shape={trained.input_shape} final_mse={trained.loss_history[-1]:.3e})"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    test_sets = {}
    for path in args.test:
        ds = _load_dataset(path)
        test_sets[ds.scenario] = ds
    columns, models = ["lpf"], {"lpf": None}
    for path in args.checkpoints:
        trained = _load_checkpoint(path)
        name = os.path.splitext(os.path.basename(path))[0]
        columns.append(name)
        models[name] = trained
    rows = list(test_sets)
    values = np.zeros((len(rows), len(columns)))
    for col, name in enumerate(columns):
        trained = models[name]
        for row, scenario in enumerate(rows):
            ds = test_sets[scenario]
            try:
                values[row, col] = training.evaluate(
                    trained, ds.windows("test"), ds.labels("test")
                )
            except ValueError as err:
                raise DataError(
                    f"checkpoint {name} incompatible with {scenario}: {err}"
                ) from err
    table = experiments.ResultTable(
        rows=rows,
        columns=columns,
        values=values,
        metadata={
            "build_id": experiments.build_id(),
            "checkpoints": list(args.checkpoints),
            "test_digests": {
                n: experiments.dataset_digest(d) for n, d in test_sets.items()
            },
        },
    )
    out = _outdir(args.out)
    table.to_csv(os.path.join(out, "eval.csv"))
    table.to_json(os.path.join(out, "eval.json"))
    _print_table(table)
    return EXIT_OK


def _print_table(table: experiments.ResultTable):
    width = max(8, max(len(c) for c in table.columns) + 2)
    print("scenario".ljust(10) + "".join(c.rjust(width) for c in table.columns))
    for name, row in zip(table.rows, table.values):
        print(name.ljust(10) + "".join(f"{v:.3f}".rjust(width) for v in row))


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(","))
    except ValueError as err:
        raise UsageError(f"bad seed list {text!r}") from err


def cmd_compare_features(args) -> int:
    train_ds = _load_dataset(args.train)
    test_sets = {}
    for path in args.test:
        ds = _load_dataset(path)
        test_sets[ds.scenario] = ds
    table = experiments.feature_comparison(
        train_ds, test_sets, seeds=_parse_seeds(args.seeds), epochs=args.epochs
    )
    out = _outdir(args.out)
    table.to_csv(os.path.join(out, "compare_features.csv"))
    table.to_json(os.path.join(out, "compare_features.json"))
    _print_table(table)
    return EXIT_OK


def cmd_trim_sweep(args) -> int:
    train_ds = _load_dataset(args.train)
    test_sets = {}
    for path in args.test:
        ds = _load_dataset(path)
        test_sets[ds.scenario] = ds
    trims = tuple(int(t) for t in args.trims.split(","))
    table = experiments.trim_sweep(
        train_ds,
        test_sets,
        trims=trims,
        seeds=_parse_seeds(args.seeds),
        epochs=args.epochs,
    )
    out = _outdir(args.out)
    table.to_csv(os.path.join(out, "trim_sweep.csv"))
    table.to_json(os.path.join(out, "trim_sweep.json"))
    _print_table(table)
    return EXIT_OK


def cmd_serve(args) -> int:
    trained = _load_checkpoint(args.checkpoint)
    host, _, port = args.bind.rpartition(":")
    if not host:
        raise UsageError(f"bind address must be host:port, got {args.bind!r}")
    try:
        server = service.UdpEstimatorServer(
            ForceEstimator(trained), host=host, port=int(port)
        )
    except OSError as err:
        raise DataError(f"cannot bind {args.bind}: {err}") from err
    print(f"serving on {server.address[0]}:{server.address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return EXIT_OK


def cmd_run_control(args) -> int:
    cfg, gains = _load_config(args.config)
    if args.config is None:
        cfg = plant.DEMO_SURFACE
    offset = {"clean": 0.0, "drift2n": 2.0}[args.scenario]
    estimator = None
    if args.mode == "estimator":
        if args.checkpoint is None:
            raise UsageError("estimator mode needs --checkpoint")
        estimator = ForceEstimator(_load_checkpoint(args.checkpoint))
    if args.trajectory == "press":
        depth = control.press_depth_for_force(args.force_cmd, args.force_cmd, cfg, gains)
        traj = control.make_press_trajectory(depth, args.force_cmd, press_duration=5.0)
    else:
        traj = control.letter_a_path(0.05, args.force_cmd)
    log = control.run_closed_loop(
        traj,
        args.mode,
        seed=args.seed,
        cfg=cfg,
        gains=gains,
        sensor_offset_n=offset,
        estimator=estimator,
    )
    _check_overwrite(args.out, args.force)
    log.to_csv(args.out)
    steady = log.true_force_n[int(0.7 * len(log.true_force_n)) :]
    summary = {
        "trajectory": args.trajectory,
        "mode": args.mode,
        "scenario": args.scenario,
        "seed": args.seed,
        "force_cmd_n": args.force_cmd,
        "steady_mean_true_force_n": float(steady.mean()),
        "tracking_error_ns": control.force_tracking_error(log),
        "estimate_count": int(np.sum(~np.isnan(log.estimate_latency_s)))
        if log.estimate_latency_s is not None
        else 0,
    }
    print(json.dumps(summary, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_plot_data(args) -> int:
    out = _outdir(args.out)
    if args.kind == "hysteresis":
        op = plant.HysteresisOperator()
        rng = np.random.default_rng(args.seed)
        inputs, outputs = [], []
        for i in range(9):
            sign = 1.0 if i % 2 == 0 else -1.0
            amp = sign * rng.uniform(90.0, 110.0)
            ramp = np.linspace(0.0, amp, 400)
            for leg in (ramp, ramp[::-1]):
                inputs.extend(leg.tolist())
                outputs.extend(op.apply(leg).tolist())
        path = os.path.join(out, "hysteresis_loop.csv")
        with open(path, "w") as fh:
            fh.write("input_n,output_n\n")
            for u, y in zip(inputs, outputs):
                fh.write(f"{u!r},{y!r}\n")
        print(f"wrote {path}")
    elif args.kind == "ms-grid":
        if not args.input:
            raise UsageError("ms-grid needs --input dataset.jsonl")
        ds = _load_dataset(args.input)
        record = ds.split("test")[0]
        from .dsp import SAMPLE_PERIOD_S, lpf_first_order, mel_spectrogram

        ms = mel_spectrogram(record.eef)
        path = os.path.join(out, "ms_grid.csv")
        with open(path, "w") as fh:
            fh.write("frame,channel,center_hz,log_power\n")
            for f in range(ms.values.shape[0]):
                for c in range(ms.values.shape[1]):
                    fh.write(
                        f"{f},{c},{float(ms.kept_channel_centers_hz[c])!r},{float(ms.values[f, c])!r}\n"
                    )
        trace = os.path.join(out, "window_trace.csv")
        filtered = lpf_first_order(record.eef, 5.0, SAMPLE_PERIOD_S)
        with open(trace, "w") as fh:
            fh.write("t_s,eef_n,lpf_n,label_n\n")
            for i in range(record.eef.shape[0]):
                fh.write(
                    f"{i * SAMPLE_PERIOD_S!r},{float(record.eef[i])!r},"
                    f"{float(filtered[i])!r},{record.label_n!r}\n"
                )
        print(f"wrote {path} and {trace}")
    elif args.kind == "rmse-bars":
        if not args.input:
            raise UsageError("rmse-bars needs --input result.json")
        try:
            table = experiments.ResultTable.from_json(args.input)
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as err:
            raise DataError(f"bad result table {args.input}: {err}") from err
        path = os.path.join(out, "rmse_bars.csv")
        with open(path, "w") as fh:
            fh.write("scenario,column,rmse_n\n")
            for r, name in enumerate(table.rows):
                for c, col in enumerate(table.columns):
                    fh.write(f"{name},{col},{float(table.values[r, c])!r}\n")
        print(f"wrote {path}")
    elif args.kind == "run-log":
        if not args.input:
            raise UsageError("run-log needs --input runlog.csv")
        try:
            log = control.RunLog.from_csv(args.input)
        except (OSError, ValueError) as err:
            raise DataError(f"bad run log {args.input}: {err}") from err
        path = os.path.join(out, "force_trace.csv")
        with open(path, "w") as fh:
            fh.write("time_s,true_force_n,feedback_force_n,cmd_force_n\n")
            for i in range(log.time_s.shape[0]):
                fh.write(
                    f"{float(log.time_s[i])!r},{float(log.true_force_n[i])!r},"
                    f"{float(log.feedback_force_n[i])!r},{float(log.cmd_force_n[i])!r}\n"
                )
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="melforce", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="JSON file with plant config fields")
        p.add_argument("--force", action="store_true", help="overwrite outputs")

    p = sub.add_parser("gen-data", help="generate scenario datasets")
    add_common(p)
    p.add_argument("--scenarios", help="comma list, default all four")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset")
    add_common(p)
    p.add_argument("--model", required=True, choices=training.MODEL_KINDS)
    p.add_argument(
        "--feature",
        required=True,
        help="raw | stft | mfcc | ms_all | ms_lc | ms:<trim>",
    )
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="RMSE table of checkpoints on test sets")
    add_common(p)
    p.add_argument("--checkpoints", nargs="+", required=True)
    p.add_argument("--test", nargs="+", required=True, help="dataset files")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare-features", help="feature ablation table")
    add_common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--test", nargs="+", required=True)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare_features)

    p = sub.add_parser("trim-sweep", help="low-frequency cut sweep table")
    add_common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--test", nargs="+", required=True)
    p.add_argument("--trims", default="0,1,2,3,4,5")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trim_sweep)

    p = sub.add_parser("serve", help="run the UDP estimation service")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bind", default="127.0.0.1:7763")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("run-control", help="closed-loop force-control run")
    add_common(p)
    p.add_argument("--mode", required=True, choices=control.FEEDBACK_MODES)
    p.add_argument("--trajectory", default="press", choices=("press", "letter_a"))
    p.add_argument("--scenario", default="clean", choices=("clean", "drift2n"))
    p.add_argument("--force-cmd", type=float, default=2.0)
    p.add_argument("--checkpoint", help="estimator checkpoint")
    p.add_argument("--out", required=True, help="run log CSV path")
    p.set_defaults(func=cmd_run_control)

    p = sub.add_parser("plot-data", help="emit plot-ready CSV bundles")
    add_common(p)
    p.add_argument(
        "--kind",
        required=True,
        choices=("hysteresis", "ms-grid", "rmse-bars", "run-log"),
    )
    p.add_argument("--input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (control.RunDivergence, DatasetGenerationError, FloatingPointError) as err:
        print(f"numeric divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()

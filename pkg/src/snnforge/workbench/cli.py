"""snnforge command line: train -> calibrate -> convert -> simulate -> analyze.

Exit status: 0 on success, 1 on usage or configuration errors, 2 on
data or file-format errors.  Every command echoes its seed and fully
resolved configuration, and embeds both in the files it writes.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .. import analysis
from ..ann import TrainConfig, build_ann, evaluate_accuracy, sgd_train
from ..convert import CalibrationResult, ConversionConfig, calibrate, convert
from ..dataset import Dataset, load_dataset, save_dataset
from ..errors import ConfigurationError, DataError, DimensionError, FormatError
from ..parallel import resolve_threads
from ..snn import SnnModel, snn_accuracy, snn_predict
from .idx import load_idx
from .modelio import load_model, save_model
from .synth import exact_grid_fixture, synth_glyphs, synth_uniform_benchmark

FORMAT_VERSION = 1
log = logging.getLogger("snnforge")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# Per-command defaults; a --config JSON file overrides these and explicit
# flags override the file.
DEFAULTS = {
    "train": {
        "arch": "100FC-10FC", "activation": "threshold_relu", "y_th": 1.0,
        "learning_rate": 0.01, "momentum": 0.9, "weight_decay": 5e-4, "epochs": 20,
        "batch_size": 128, "lr_decay_epochs": None, "lr_decay_factor": 0.1,
        "threshold_warmup_epochs": None,
    },
    "calibrate": {"threshold_mode": "max", "percentile": None, "subsample": None},
    "convert": {"T": 32, "shift": "half_vth_over_T", "shift_scale": None, "shift_output_layer": False,
                "readout": "accumulate_potential"},
    "simulate": {"T": 32},
    "analyze": {"T_list": [8, 16, 32, 64, 128]},
    "sweep-shift": {"T": 16, "points": 33, "grid": None},
    "scaling": {"T_list": [8, 16, 32, 64, 128], "shift": "half_vth_over_T"},
    "synth": {"kind": "uniform", "n": 4096, "width": 64, "v_th": 1.0, "jitter": 1.2, "noise": 0.15},
}
GLOBAL_DEFAULTS = {"seed": 0, "threads": None, "strict_idx": False}


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="seed for every random draw (default 0)")
    common.add_argument("--config", type=Path, help="JSON file of option values; flags win")
    common.add_argument("--threads", type=int, help="worker threads (default: $SNNFORGE_THREADS or 1)")
    common.add_argument("--strict-idx", action="store_true", dest="strict_idx",
                        help="reject IDX files with trailing bytes")
    common.add_argument("-v", "--verbose", action="store_true")

    data = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    data.add_argument("--data", type=Path, help="dataset archive (.npz) written by 'synth'")
    data.add_argument("--images", type=Path, help="IDX image file (use with --labels)")
    data.add_argument("--labels", type=Path, help="IDX label file (use with --images)")

    parser = _Parser(prog="snnforge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def cmd(name, help_, parents=(common, data)):
        return sub.add_parser(name, help=help_, parents=list(parents), argument_default=argparse.SUPPRESS)

    p = cmd("train", "train an ANN with momentum SGD")
    p.add_argument("--arch", help="architecture, e.g. 100FC-10FC or 8C3-AP2-10FC")
    p.add_argument("--activation", choices=["threshold_relu", "relu"])
    p.add_argument("--y-th", type=float, dest="y_th")
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr-decay-epochs", type=_int_list, dest="lr_decay_epochs")
    p.add_argument("--lr-decay-factor", type=float, dest="lr_decay_factor")
    p.add_argument("--warmup-epochs", type=int, dest="threshold_warmup_epochs")
    p.add_argument("--out", type=Path, required=True)

    p = cmd("calibrate", "compute per-layer thresholds from ANN activations")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--threshold-mode", choices=["max", "percentile"], dest="threshold_mode")
    p.add_argument("--percentile", type=float)
    p.add_argument("--subsample", type=int, help="calibrate on a seeded random subset of this size")
    p.add_argument("--out", type=Path, required=True)

    p = cmd("convert", "build an SNN from an ANN and its thresholds", parents=(common,))
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--thresholds", type=Path, required=True)
    p.add_argument("-T", type=int, dest="T")
    p.add_argument("--shift", choices=["none", "half_vth_over_T", "custom"])
    p.add_argument("--shift-scale", type=float, dest="shift_scale")
    p.add_argument("--shift-output-layer", action="store_true", dest="shift_output_layer")
    p.add_argument("--readout", choices=["accumulate_potential", "spike_count"])
    p.add_argument("--out", type=Path, required=True)

    p = cmd("simulate", "simulate an SNN and report its accuracy")
    p.add_argument("--snn", type=Path, required=True)
    p.add_argument("-T", type=int, dest="T")
    p.add_argument("--out", type=Path)

    p = cmd("analyze", "conversion loss and layer-wise errors over several T")
    p.add_argument("--ann", type=Path, required=True)
    p.add_argument("--snn", type=Path, required=True)
    p.add_argument("--T-list", type=_int_list, dest="T_list")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--csv", type=Path, help="per-(T, layer) CSV export")

    p = cmd("sweep-shift", "objective and accuracy over a grid of bias shifts")
    p.add_argument("--ann", type=Path, required=True)
    p.add_argument("--thresholds", type=Path, required=True)
    p.add_argument("-T", type=int, dest="T")
    p.add_argument("--points", type=int, help="evenly spaced shifts over [0, v_th/T]")
    p.add_argument("--grid", type=_float_list, help="explicit comma-separated shifts")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--csv", type=Path)

    p = cmd("scaling", "final-layer error against T with the closed-form estimate")
    p.add_argument("--ann", type=Path, required=True)
    p.add_argument("--thresholds", type=Path, required=True)
    p.add_argument("--T-list", type=_int_list, dest="T_list")
    p.add_argument("--shift", choices=["none", "half_vth_over_T"])
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--csv", type=Path)

    p = cmd("synth", "write a synthetic model and/or dataset", parents=(common,))
    p.add_argument("--kind", choices=["uniform", "exact-grid", "glyphs"])
    p.add_argument("-n", type=int, dest="n")
    p.add_argument("--width", type=int)
    p.add_argument("--v-th", type=float, dest="v_th")
    p.add_argument("--jitter", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--out-data", type=Path, dest="out_data", required=True)
    p.add_argument("--out-model", type=Path, dest="out_model")
    return parser


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _resolve(args: argparse.Namespace) -> dict:
    given = vars(args)
    opts = dict(GLOBAL_DEFAULTS)
    opts.update(DEFAULTS.get(args.command, {}))
    if "config" in given:
        try:
            file_opts = json.loads(Path(given["config"]).read_text())
        except OSError as exc:
            raise DataError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_opts, dict):
            raise FormatError("config file must hold a JSON object")
        unknown = set(file_opts) - set(opts) - {"model", "thresholds", "ann", "snn", "data", "images", "labels"}
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        opts.update(file_opts)
    opts.update({k: v for k, v in given.items() if k not in ("config", "verbose")})
    if opts["seed"] is None or not 0 <= int(opts["seed"]) < 2**64:
        raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {opts['seed']}")
    opts["threads"] = resolve_threads(opts["threads"])
    return opts


def _jsonable(opts: dict) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(opts.items())}


def _echo(opts: dict) -> dict:
    header = {"format_version": FORMAT_VERSION, "seed": int(opts["seed"]), "config": _jsonable(opts)}
    print(json.dumps({"seed": header["seed"], "config": header["config"]}, sort_keys=True))
    return header


def _write_json(path: Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_data(opts: dict) -> Dataset:
    if opts.get("data"):
        if opts.get("images") or opts.get("labels"):
            raise UsageError("give either --data or --images/--labels, not both")
        return load_dataset(opts["data"])
    if opts.get("images") and opts.get("labels"):
        return load_idx(opts["images"], opts["labels"], strict=bool(opts["strict_idx"]))
    raise UsageError("a dataset is required: --data FILE.npz or --images IDX --labels IDX")


def _load_kind(path, kind):
    model = load_model(path)
    if isinstance(model, SnnModel) != (kind == "snn"):
        raise FormatError(f"{path}: expected a {kind} model file")
    return model


def _load_thresholds(path) -> CalibrationResult:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: expected a thresholds file with format_version {FORMAT_VERSION}")
    try:
        return CalibrationResult.from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed thresholds file ({exc})") from exc


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_train(opts):
    data = _load_data(opts)
    epochs = int(opts["epochs"])
    if opts["lr_decay_epochs"] is None:  # decay at 60%, 80% and 90% of training
        opts["lr_decay_epochs"] = sorted({max(1, int(f * epochs)) for f in (0.6, 0.8, 0.9)})
    cfg = TrainConfig(
        learning_rate=opts["learning_rate"], momentum=opts["momentum"], weight_decay=opts["weight_decay"],
        epochs=epochs, batch_size=opts["batch_size"], lr_decay_epochs=list(opts["lr_decay_epochs"]),
        lr_decay_factor=opts["lr_decay_factor"], threshold_warmup_epochs=opts["threshold_warmup_epochs"],
        seed=int(opts["seed"]),
    )
    header = _echo(opts)
    model = build_ann(opts["arch"], data.sample_shape, opts["activation"], opts["y_th"], seed=cfg.seed)
    if model.num_outputs < data.num_classes:
        raise ConfigurationError(f"architecture has {model.num_outputs} outputs but the data has "
                                 f"{data.num_classes} classes")
    model, history = sgd_train(model, data, cfg, progress=lambda e, loss: print(f"epoch {e} loss {loss:.6f}"))
    acc = evaluate_accuracy(model, data, opts["threads"])
    meta = {**header, "train_config": cfg.to_dict(), "dataset": data.name, "loss_history": history,
            "train_accuracy": acc}
    save_model(model, opts["out"], meta)
    print(f"train accuracy {acc:.6f}")


def cmd_calibrate(opts):
    header = _echo(opts)
    model = _load_kind(opts["model"], "ann")
    data = _load_data(opts)
    if opts["subsample"]:
        data = data.subsample(int(opts["subsample"]), int(opts["seed"]))
    calib = calibrate(model, data, opts["threshold_mode"], opts["percentile"], opts["threads"])
    for w in calib.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _write_json(opts["out"], {**header, **calib.to_dict()})
    print("v_th " + " ".join(repr(v) for v in calib.v_th_per_layer))


def cmd_convert(opts):
    cfg = ConversionConfig(
        T=opts["T"], shift_mode=opts["shift"], shift_scale=opts["shift_scale"],
        shift_output_layer=bool(opts["shift_output_layer"]), readout=opts["readout"],
    )
    header = _echo(opts)
    model = _load_kind(opts["model"], "ann")
    calib = _load_thresholds(opts["thresholds"])
    snn = convert(model, calib, cfg)
    save_model(snn, opts["out"], {**header, "conversion": cfg.to_dict()})
    print(f"wrote {opts['out']}")


def cmd_simulate(opts):
    if opts["T"] < 1:
        raise ConfigurationError(f"simulation length must satisfy T >= 1, got {opts['T']}")
    header = _echo(opts)
    snn = _load_kind(opts["snn"], "snn")
    data = _load_data(opts)
    pred = snn_predict(snn, data.inputs, opts["T"], opts["threads"])
    correct = int((pred == data.labels).sum())
    acc = correct / len(data) if len(data) else snn_accuracy(snn, data, opts["T"])
    if opts.get("out"):
        _write_json(opts["out"], {**header, "T": opts["T"], "n": len(data), "correct": correct,
                                  "accuracy": acc})
    print(f"accuracy {acc:.6f} ({correct}/{len(data)}) at T={opts['T']}")


def cmd_analyze(opts):
    header = _echo(opts)
    ann = _load_kind(opts["ann"], "ann")
    snn = _load_kind(opts["snn"], "snn")
    data = _load_data(opts)
    report = analysis.build_report(ann, snn, data, opts["T_list"], seed=header["seed"],
                                   config=header["config"], threads=opts["threads"])
    Path(opts["out"]).write_text(report.to_json())
    if opts.get("csv"):
        report.write_csv(opts["csv"])
    for T in report.snn_accuracy_by_T:
        print(f"T={T} snn_accuracy={report.snn_accuracy_by_T[T]:.6f} "
              f"conversion_loss={report.conversion_loss_by_T[T]:.6f}")


def cmd_sweep_shift(opts):
    header = _echo(opts)
    ann = _load_kind(opts["ann"], "ann")
    calib = _load_thresholds(opts["thresholds"])
    data = _load_data(opts)
    T = int(opts["T"])
    if T < 1:
        raise ConfigurationError(f"simulation length must satisfy T >= 1, got {T}")
    grid = opts["grid"] or analysis.shift_grid(max(calib.v_th_per_layer[:-1] or calib.v_th_per_layer), T,
                                               int(opts["points"]))
    points = analysis.shift_sweep(ann, calib, data, T, grid, opts["threads"])
    best = min(points, key=lambda p: p.objective)
    doc = {**header, "T": T, "optimal_delta": best.delta, "reference_delta": None,
           "points": [vars(p) for p in points]}
    if len(calib.v_th_per_layer) > 1:
        doc["reference_delta"] = calib.v_th_per_layer[0] / (2 * T)
    _write_json(opts["out"], doc)
    if opts.get("csv"):
        analysis.write_sweep_csv(points, opts["csv"])
    print(f"argmin objective at delta={best.delta!r}")


def cmd_scaling(opts):
    header = _echo(opts)
    ann = _load_kind(opts["ann"], "ann")
    calib = _load_thresholds(opts["thresholds"])
    data = _load_data(opts)
    res = analysis.scaling_experiment(ann, calib, data, opts["T_list"], opts["shift"], opts["threads"])
    _write_json(opts["out"], {**header, "slope": res.slope, "rows": [vars(r) for r in res.rows]})
    if opts.get("csv"):
        import csv

        with open(opts["csv"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["T", "mean_sq_output_error", "estimate"])
            for r in res.rows:
                w.writerow([r.T, repr(r.output_error), repr(r.estimate)])
    for r in res.rows:
        print(f"T={r.T} error={r.output_error!r} estimate={r.estimate!r}")
    print(f"log-log slope {res.slope!r}")


def cmd_synth(opts):
    header = _echo(opts)
    kind, seed = opts["kind"], int(opts["seed"])
    model = None
    if kind == "uniform":
        model, data = synth_uniform_benchmark(int(opts["n"]), int(opts["width"]), float(opts["v_th"]), seed)
    elif kind == "exact-grid":
        model, data, T = exact_grid_fixture()
        print(f"grid-aligned at T={T}")
    else:
        data = synth_glyphs(int(opts["n"]), seed, jitter=float(opts["jitter"]), noise=float(opts["noise"]))
    save_dataset(data, opts["out_data"])
    if opts.get("out_model"):
        if model is None:
            raise UsageError("--out-model is only meaningful for --kind uniform or exact-grid")
        save_model(model, opts["out_model"], header)
    print(f"wrote {len(data)} samples to {opts['out_data']}")


COMMANDS = {
    "train": cmd_train, "calibrate": cmd_calibrate, "convert": cmd_convert, "simulate": cmd_simulate,
    "analyze": cmd_analyze, "sweep-shift": cmd_sweep_shift, "scaling": cmd_scaling, "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        opts = _resolve(args)
        COMMANDS[args.command](opts)
    except (UsageError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FormatError, DimensionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline: gen, train, heatmap, eval.

Flag values override config-file values override built-in defaults; the
effective configuration is echoed into every output's JSON sidecar. All
heavy imports happen after the thread cap is applied so --threads (or
GWLOC_THREADS) can pin the BLAS/OpenMP pools of a fresh process.
"""

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

_FORMATS_NOTE = """\
File formats:
  datasets    magic GWDS0001: length-prefixed JSON header, then float32 LE
              payload (noisy records, clean records, labels; bin-major)
  checkpoints magic GWNN0001: length-prefixed JSON header, then float32 LE
              parameters (per layer: weights row-major, then biases)

Config file: TOML document; keys match the long flag names with underscores
(e.g. t, q, sensors, f_max, snr, hidden = "300,200,50"), plus a dispersion
mode list like:
  modes = [{kind="linear", c=5400.0}, {kind="sqrt", d=0.25}]
Flags override the config file; the config file overrides defaults.
Environment: GWLOC_THREADS is the fallback for --threads.
"""


class UsageError(Exception):
    """Invalid flag combination or value discovered after parsing (exit 2)."""


def _apply_thread_cap(argv):
    """Pin BLAS/OpenMP pool sizes before numpy gets imported."""
    value = None
    for i, token in enumerate(argv):
        if token == "--threads" and i + 1 < len(argv):
            value = argv[i + 1]
        elif token.startswith("--threads="):
            value = token.split("=", 1)[1]
    if value is None:
        value = os.environ.get("GWLOC_THREADS")
    if value is None:
        return
    try:
        n = max(1, int(value))
    except ValueError:
        return  # argparse will reject it with a proper usage error
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(n)


# --- flag value parsers ------------------------------------------------------

def _parse_pair_of(text: str, cast, what: str):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"{what} must look like AxB, got {text!r}")
    try:
        return cast(parts[0]), cast(parts[1])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad {what} {text!r}: {exc}") from exc


def _plate(text: str):
    return _parse_pair_of(text, float, "plate size")


def _resolution(text: str):
    return _parse_pair_of(text, int, "resolution")


def _snr(text: str) -> float:
    if text.strip().lower() in ("inf", "+inf", "none"):
        return math.inf
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad SNR {text!r}") from exc


def _int_list(text: str, what: str):
    items = [p for p in text.split(",") if p.strip()]
    if not items:
        raise argparse.ArgumentTypeError(f"{what} must not be empty")
    try:
        return tuple(int(p) for p in items)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad {what} {text!r}") from exc


def _hidden(text: str):
    return _int_list(text, "hidden layer list")


def _snr_list(text: str):
    items = [p for p in text.split(",") if p.strip()]
    if not items:
        raise argparse.ArgumentTypeError("SNR list must not be empty")
    return tuple(_snr(p) for p in items)


def _load_config_file(path):
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"config file {path}: {exc}") from exc


def _merge(args, config: dict, defaults: dict) -> dict:
    """flags (not None) > config file > defaults."""
    merged = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in config:
            merged[key] = config[key]
        else:
            merged[key] = default
    return merged


def _json_safe(value):
    if isinstance(value, float) and math.isinf(value):
        return None
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    return value


def _write_sidecar(path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_safe(payload), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _modes_from_config(entries):
    from gwloc.dataset import mode_from_dict
    from gwloc.dispersion import default_model

    if entries is None:
        return default_model().modes
    return tuple(mode_from_dict(dict(e)) for e in entries)


# --- subcommand handlers -----------------------------------------------------

def _cmd_gen(args) -> int:
    from gwloc import dataset

    config_file = _load_config_file(args.config)
    paper_scale = bool(
        args.paper_scale if args.paper_scale is not None else config_file.get("paper_scale", False)
    )
    defaults = {
        "t": 2500 if paper_scale else 500,
        "q": 1000 if paper_scale else 250,
        "f_max": 1.0e6 if paper_scale else 2.5e5,
        "sensors": 8,
        "plate": (1.0, 1.0),
        "alpha": "truncnorm",
        "snr": 25.0,
        "split": 0.8,
        "seed": 0,
        "ideal": False,
        "per_sample_sensors": False,
    }
    merged = _merge(args, config_file, defaults)
    if isinstance(merged["plate"], str):
        merged["plate"] = _plate(merged["plate"])
    if isinstance(merged["snr"], str):
        merged["snr"] = _snr(merged["snr"])
    if merged["ideal"]:
        merged["alpha"] = "fixed"
        merged["snr"] = math.inf
    modes = _modes_from_config(config_file.get("modes"))

    gen_config = dataset.GenerationConfig(
        n_samples=int(merged["t"]),
        n_bins=int(merged["q"]),
        f_max=float(merged["f_max"]),
        n_sensors=int(merged["sensors"]),
        plate_length=float(merged["plate"][0]),
        plate_width=float(merged["plate"][1]),
        modes=modes,
        alpha_mode=merged["alpha"],
        snr_db=float(merged["snr"]),
        per_sample_sensors=bool(merged["per_sample_sensors"]),
        train_fraction=float(merged["split"]),
        seed=int(merged["seed"]),
    )
    ds = dataset.generate(gen_config)
    effective = _json_safe(dict(merged, paper_scale=paper_scale, out=str(args.out)))
    ds.config = effective
    dataset.save_gwds(ds, args.out)
    _write_sidecar(str(args.out) + ".json", {"command": "gen", "config": effective})
    print(
        f"wrote {args.out}: t={ds.n_samples} bins={ds.grid.n_bins} "
        f"pairs={ds.scene.n_pairs} train={len(ds.train_idx)} "
        f"test={len(ds.test_idx)} seed={ds.seed}"
    )
    return 0


def _cmd_train(args) -> int:
    from gwloc import dataset, neuralloc

    config_file = _load_config_file(args.config)
    defaults = {
        "epochs": 50,
        "hidden": (300, 200, 50),
        "dropout": 0.2,
        "batch_size": 32,
        "lr": 1e-3,
        "optimizer": "adam",
        "seed": 0,
    }
    merged = _merge(args, config_file, defaults)
    if isinstance(merged["hidden"], str):
        merged["hidden"] = _hidden(merged["hidden"])

    ds = dataset.load_gwds(args.data)
    dataset.standardize_fit_transform(ds)
    mlp_config = neuralloc.MlpConfig(
        input_dim=ds.n_features,
        hidden=tuple(int(h) for h in merged["hidden"]),
        dropout=float(merged["dropout"]),
        epochs=int(merged["epochs"]),
        batch_size=int(merged["batch_size"]),
        learning_rate=float(merged["lr"]),
        optimizer=merged["optimizer"],
        seed=int(merged["seed"]),
    )
    model = neuralloc.train(ds, mlp_config)
    for epoch, loss in enumerate(model.training_log, start=1):
        print(f"epoch {epoch}/{mlp_config.epochs} loss={loss:.6f}")
    neuralloc.save_gwnn(model, args.out)
    effective = _json_safe(dict(merged, data=str(args.data), out=str(args.out)))
    _write_sidecar(str(args.out) + ".json", {"command": "train", "config": effective})
    print(f"wrote {args.out}")
    return 0


def _cmd_heatmap(args) -> int:
    from gwloc import dataset, physloc
    from gwloc.dispersion import DispersionModel

    config_file = _load_config_file(args.config)
    defaults = {"index": 0, "resolution": (100, 100)}
    merged = _merge(args, config_file, defaults)
    if isinstance(merged["resolution"], str):
        merged["resolution"] = _resolution(merged["resolution"])

    ds = dataset.load_gwds(args.data)
    index = int(merged["index"])
    if not 0 <= index < ds.n_samples:
        raise UsageError(f"sample index {index} out of range [0, {ds.n_samples})")
    if ds.standardized:
        raise UsageError("heatmap needs raw records; this dataset is standardized")
    nx, ny = merged["resolution"]
    scene = ds.scene_for(index)
    model = DispersionModel(modes=ds.modes, alpha=1.0)
    heatmap = physloc.localize_grid(
        ds.samples[index].data, scene, ds.grid, model, int(nx), int(ny)
    )
    csv_path = str(args.out) + ".csv"
    json_path = str(args.out) + ".json"
    effective = _json_safe(dict(merged, data=str(args.data), out=str(args.out)))
    physloc.save_heatmap(
        heatmap,
        csv_path,
        json_path,
        true_damage=ds.samples[index].label,
        extra={"config": effective, "dataset_sha256": _sha256(args.data)},
    )
    print(
        f"argmax=({heatmap.argmax[0]:.4f}, {heatmap.argmax[1]:.4f}) "
        f"true=({ds.samples[index].label[0]:.4f}, {ds.samples[index].label[1]:.4f})"
    )
    print(f"wrote {csv_path} {json_path}")
    return 0


def _cmd_eval(args) -> int:
    from gwloc import dataset, evaluation, neuralloc
    from gwloc.dispersion import DispersionModel

    config_file = _load_config_file(args.config)
    defaults = {"snrs": (5.0, 10.0, 15.0, 20.0, 25.0), "resolution": (50, 50), "seed": 0}
    merged = _merge(args, config_file, defaults)
    if isinstance(merged["snrs"], str):
        merged["snrs"] = _snr_list(merged["snrs"])
    if isinstance(merged["resolution"], str):
        merged["resolution"] = _resolution(merged["resolution"])
    if not merged["snrs"]:
        raise UsageError("SNR list must not be empty")

    dnn_paths = list(args.dnn or [])
    use_physical = bool(args.physical or config_file.get("physical", False))
    if not dnn_paths and not use_physical:
        raise UsageError("specify at least one method: --dnn CHECKPOINT and/or --physical")

    ds = dataset.load_gwds(args.data)
    if ds.standardized:
        raise UsageError("eval needs raw clean records; this dataset is standardized")
    methods = []
    model_files = []
    for path in dnn_paths:
        model = neuralloc.load_gwnn(path)
        methods.append(evaluation.DnnLocalizer(model, name=f"dnn:{Path(path).stem}"))
        model_files.append({"name": methods[-1].name, "path": str(path), "sha256": _sha256(path)})
    if use_physical:
        nx, ny = merged["resolution"]
        methods.append(
            evaluation.PhysicalLocalizer(
                ds.grid,
                DispersionModel(modes=ds.modes, alpha=1.0),
                nx=int(nx),
                ny=int(ny),
            )
        )

    report = evaluation.sweep(ds, list(merged["snrs"]), methods, seed=int(merged["seed"]))
    effective = _json_safe(dict(merged, data=str(args.data), out=str(args.out)))
    report.provenance.update(
        {
            "dataset": {"path": str(args.data), "sha256": _sha256(args.data)},
            "models": model_files,
            "config": effective,
        }
    )
    csv_path = str(args.out)
    json_path = str(Path(args.out).with_suffix(".json"))
    evaluation.save_report(report, csv_path, json_path)
    for r in report.rows:
        print(
            f"{r.method} snr={r.snr_db:g} ale={r.ale_mean:.4f} "
            f"std={r.ale_std:.4f} n={r.n}"
        )
    print(f"wrote {csv_path} {json_path}")
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwloc",
        description="Guided-wave damage localization pipeline.",
        epilog=_FORMATS_NOTE,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="TOML config file (flags override it)")
        p.add_argument("--threads", type=int, help="cap worker/BLAS threads (env: GWLOC_THREADS)")

    p_gen = sub.add_parser(
        "gen",
        help="simulate a dataset and write a GWDS file",
        epilog=_FORMATS_NOTE,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_gen.add_argument("--t", type=int, help="number of simulations (default 500; 2500 at --paper-scale)")
    p_gen.add_argument("--q", type=int, help="frequency bin count (default 250; 1000 at --paper-scale)")
    p_gen.add_argument("--f-max", dest="f_max", type=float,
                       help="top frequency in Hz (default 2.5e5; 1e6 at --paper-scale)")
    p_gen.add_argument("--sensors", type=int, help="sensor count (default 8)")
    p_gen.add_argument("--plate", type=_plate, help="plate size LxW in metres (default 1x1)")
    p_gen.add_argument(
        "--alpha", choices=("truncnorm", "fixed"),
        help="dispersion scale mode: truncated-normal draw or fixed 1.0",
    )
    p_gen.add_argument("--snr", type=_snr, help="training SNR in dB, or 'inf' (default 25)")
    p_gen.add_argument("--split", type=float, help="train fraction (default 0.8)")
    p_gen.add_argument("--seed", type=int, help="master seed (default 0)")
    p_gen.add_argument("--ideal", action="store_true", default=None,
                       help="ideal mode: alpha=1 and no noise")
    p_gen.add_argument("--per-sample-sensors", dest="per_sample_sensors",
                       action="store_true", default=None,
                       help="redraw the sensor layout for every sample")
    p_gen.add_argument("--paper-scale", dest="paper_scale", action="store_true", default=None,
                       help="full-scale defaults: t=2500, q=1000")
    p_gen.add_argument("--out", required=True, help="output GWDS path")
    add_common(p_gen)
    p_gen.set_defaults(handler=_cmd_gen)

    p_train = sub.add_parser(
        "train",
        help="standardize + train the network, write a GWNN checkpoint",
        epilog=_FORMATS_NOTE,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_train.add_argument("--data", required=True, help="input GWDS dataset")
    p_train.add_argument("--epochs", type=int, help="training epochs (default 50)")
    p_train.add_argument("--hidden", type=_hidden, help="hidden sizes, e.g. 300,200,50")
    p_train.add_argument("--dropout", type=float, help="dropout rate on hidden layers (default 0.2)")
    p_train.add_argument("--batch-size", dest="batch_size", type=int, help="mini-batch size (default 32)")
    p_train.add_argument("--lr", type=float, help="learning rate (default 1e-3)")
    p_train.add_argument("--optimizer", choices=("adam", "sgd"), help="optimizer (default adam)")
    p_train.add_argument("--seed", type=int, help="training seed (default 0)")
    p_train.add_argument("--out", required=True, help="output GWNN path")
    add_common(p_train)
    p_train.set_defaults(handler=_cmd_train)

    p_heat = sub.add_parser(
        "heatmap",
        help="physical-model heatmap for one sample (CSV + JSON sidecar)",
        epilog=_FORMATS_NOTE,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_heat.add_argument("--data", required=True, help="input GWDS dataset")
    p_heat.add_argument("--index", type=int, help="sample index (default 0)")
    p_heat.add_argument("--resolution", type=_resolution, help="grid, e.g. 100x100")
    p_heat.add_argument("--out", required=True, help="output base path (writes .csv and .json)")
    add_common(p_heat)
    p_heat.set_defaults(handler=_cmd_heatmap)

    p_eval = sub.add_parser(
        "eval",
        help="ALE sweep over SNRs for the chosen localizers",
        epilog=_FORMATS_NOTE,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_eval.add_argument("--data", required=True, help="input GWDS dataset (test split is used)")
    p_eval.add_argument("--snrs", type=_snr_list, help="comma-separated dB list (default 5,10,15,20,25)")
    p_eval.add_argument("--dnn", action="append", help="GWNN checkpoint; repeatable")
    p_eval.add_argument("--physical", action="store_true", default=None,
                        help="include the physical-model baseline")
    p_eval.add_argument("--resolution", type=_resolution,
                        help="physical baseline grid (default 50x50)")
    p_eval.add_argument("--seed", type=int, help="re-noising seed (default 0)")
    p_eval.add_argument("--out", required=True, help="output report CSV path")
    add_common(p_eval)
    p_eval.set_defaults(handler=_cmd_eval)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    _apply_thread_cap(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    from gwloc.errors import GwlocError

    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (GwlocError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
